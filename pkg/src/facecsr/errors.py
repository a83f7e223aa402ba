"""Exception types shared across the package."""


class FaceCsrError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(FaceCsrError):
    """An argument violates a documented precondition."""


class InvalidModelError(FaceCsrError):
    """A model object is internally inconsistent or unusable."""


class RankDeficiencyError(FaceCsrError):
    """An unregularised least-squares system has no unique solution."""


class ConfigError(FaceCsrError):
    """A configuration value or combination is not permitted."""


class NoFaceError(FaceCsrError):
    """No usable face box could be produced for an image."""


class FormatError(FaceCsrError):
    """A file could not be parsed.  Carries the offending location.

    Attributes
    ----------
    path : str or None
        File the error was found in, when known.
    line : int or None
        1-based line number of the offending line, when known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix += f"{path}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)
