"""Landmark files, PGM images, and detection manifests.

Round trips: .pts keeps six decimals (absolute 5e-7), PGM is exact on
uint8-quantised intensities, and the manifest keeps full float precision
via repr.  Every malformed input is rejected with the offending 1-based
line number.
"""

import numpy as np
import pytest

from facecsr import (
    BoundingBox,
    Detection,
    FormatError,
    GrayImage,
    InvalidInputError,
    Shape,
    read_detection_manifest,
    read_pgm,
    read_pts,
    write_detection_manifest,
    write_pgm,
    write_pts,
)


class TestPts:
    def test_round_trip_precision(self, tmp_path):
        rng = np.random.default_rng(90)
        path = tmp_path / "face.pts"
        for _ in range(20):
            shape = Shape(rng.uniform(-50.0, 500.0, size=(int(rng.integers(1, 80)), 2)))
            write_pts(shape, path)
            back = read_pts(path)
            np.testing.assert_allclose(back.points, shape.points, atol=5e-7)

    def test_canonical_layout(self, tmp_path):
        path = tmp_path / "two.pts"
        write_pts(Shape(np.array([[1.0, 2.0], [3.5, -4.25]])), path)
        assert path.read_text() == (
            "version: 1\nn_points: 2\n{\n1.000000 2.000000\n3.500000 -4.250000\n}\n"
        )

    def test_tolerated_slack(self, tmp_path):
        path = tmp_path / "slack.pts"
        path.write_text("version: 1 \r\nn_points: 2\r\n{\r\n 1 2 \r\n3 4\r\n}\r\n\n  \n")
        back = read_pts(path)
        np.testing.assert_array_equal(back.points, [[1, 2], [3, 4]])

    @pytest.mark.parametrize("text,line", [
        ("", 1),
        ("version: 2\nn_points: 1\n{\n1 2\n}\n", 1),
        ("points: 68\n", 1),
        ("version: 1\n", 2),
        ("version: 1\nn_points: x\n{\n}\n", 2),
        ("version: 1\nn_points: 0\n{\n}\n", 2),
        ("version: 1\nn_points: 1\n1 2\n}\n", 3),
        ("version: 1\nn_points: 2\n{\n1 2\n}\n", 5),
        ("version: 1\nn_points: 1\n{\n1 2 3\n}\n", 4),
        ("version: 1\nn_points: 1\n{\n1 oops\n}\n", 4),
        ("version: 1\nn_points: 1\n{\n1 inf\n}\n", 4),
        ("version: 1\nn_points: 1\n{\n1 2\n", 5),
        ("version: 1\nn_points: 1\n{\n1 2\nextra\n", 5),
        ("version: 1\nn_points: 1\n{\n1 2\n}\ntrailing\n", 6),
    ])
    def test_malformed_inputs_carry_line_numbers(self, tmp_path, text, line):
        path = tmp_path / "bad.pts"
        path.write_text(text)
        with pytest.raises(FormatError) as info:
            read_pts(path)
        assert info.value.line == line
        assert str(path) in str(info.value)


class TestPgm:
    def test_round_trip_exact_on_quantised(self, tmp_path):
        rng = np.random.default_rng(91)
        path = tmp_path / "img.pgm"
        levels = rng.integers(0, 256, size=(17, 23), dtype=np.uint8)
        image = GrayImage(levels / 255.0)
        write_pgm(image, path)
        back = read_pgm(path)
        assert back.width == 23 and back.height == 17
        np.testing.assert_array_equal(np.round(back.pixels * 255).astype(np.uint8),
                                      levels)
        np.testing.assert_allclose(back.pixels, image.pixels, atol=1e-15)

    def test_comments_and_maxval(self, tmp_path):
        path = tmp_path / "odd.pgm"
        path.write_bytes(b"P5 # magic\n# a comment line\n2 2\n# more\n100\n"
                         + bytes([0, 25, 50, 100]))
        back = read_pgm(path)
        np.testing.assert_allclose(back.pixels, [[0.0, 0.25], [0.5, 1.0]])

    @pytest.mark.parametrize("blob,fragment", [
        (b"P2\n2 2\n255\n" + bytes(4), "magic"),
        (b"P5\nx 2\n255\n" + bytes(4), "non-integer"),
        (b"P5\n0 2\n255\n", "dimensions"),
        (b"P5\n2 2\n999\n" + bytes(4), "maxval"),
        (b"P5\n2 2\n255\n" + bytes(3), "raster"),
        (b"P5\n2 2", "header"),
    ])
    def test_malformed_pgm(self, tmp_path, blob, fragment):
        path = tmp_path / "bad.pgm"
        path.write_bytes(blob)
        with pytest.raises(FormatError, match=fragment):
            read_pgm(path)


def _manifest_fixture():
    return {
        "img_000": {
            "dlib": [Detection(BoundingBox(1.5, 2.25, 30.0, 40.125), 0.9375, "dlib")],
            "mtcnn": [
                Detection(BoundingBox(0.1, 0.2, 10.0, 10.0), 0.5, "mtcnn"),
                Detection(BoundingBox(5.0, 6.0, 7.0, 8.0), 0.25, "mtcnn"),
            ],
        },
        "img_001": {
            "regression": [Detection(BoundingBox(1 / 3, 2 / 7, 9.0, 9.0), 1.0,
                                     "regression", scoreless=True)],
        },
    }


class TestDetectionManifest:
    def test_round_trip_lossless(self, tmp_path):
        path = tmp_path / "dets.tsv"
        original = _manifest_fixture()
        write_detection_manifest(original, path)
        back = read_detection_manifest(path)
        assert back == original  # Detection is a frozen dataclass: exact equality

    def test_scoreless_written_as_dash(self, tmp_path):
        path = tmp_path / "dets.tsv"
        write_detection_manifest(_manifest_fixture(), path)
        lines = path.read_text().splitlines()
        reg = [l for l in lines if "\tregression\t" in l]
        assert len(reg) == 1 and reg[0].split("\t")[2] == "-"

    def test_order_preserved(self, tmp_path):
        path = tmp_path / "dets.tsv"
        write_detection_manifest(_manifest_fixture(), path)
        back = read_detection_manifest(path)
        scores = [d.score for d in back["img_000"]["mtcnn"]]
        assert scores == [0.5, 0.25]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.tsv"
        path.write_text("")
        assert read_detection_manifest(path) == {}

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "dets.tsv"
        path.write_text("\nimg\tdlib\t0.9\t1\t2\t3\t4\n\n")
        back = read_detection_manifest(path)
        assert back["img"]["dlib"][0].score == 0.9

    @pytest.mark.parametrize("line,lineno", [
        ("img\tdlib\t0.9\t1\t2\t3", 2),
        ("\tdlib\t0.9\t1\t2\t3\t4", 2),
        ("img\t\t0.9\t1\t2\t3\t4", 2),
        ("img\tdlib\tbad\t1\t2\t3\t4", 2),
        ("img\tdlib\t1.5\t1\t2\t3\t4", 2),
        ("img\tdlib\t0.9\t1\t2\t0\t4", 2),
        ("img\tdlib\t0.9\t1\t2\tnan\t4", 2),
    ])
    def test_malformed_lines(self, tmp_path, line, lineno):
        path = tmp_path / "bad.tsv"
        path.write_text("ok\tdlib\t0.9\t1\t2\t3\t4\n" + line + "\n")
        with pytest.raises(FormatError) as info:
            read_detection_manifest(path)
        assert info.value.line == lineno

    def test_writer_checks_source_tags(self, tmp_path):
        bad = {"img": {"dlib": [Detection(BoundingBox(0, 0, 1, 1), 0.9, "mtcnn")]}}
        with pytest.raises(InvalidInputError):
            write_detection_manifest(bad, tmp_path / "bad.tsv")
