import json
import math
import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proscan.exceptions import ParseError
from proscan.imaging import CameraModel, render_frame
from proscan.io import format_value, read_csv, read_frame, read_pgm, write_columns, write_csv, write_frame, write_pgm


@given(st.lists(st.floats(allow_nan=False), min_size=1, max_size=20))
@settings(max_examples=50, deadline=None)
def test_csv_float_round_trip(values):
    with tempfile.TemporaryDirectory() as d:
        path = write_columns(Path(d) / "a.csv", {"v": values})
        assert read_csv(path)["v"].tolist() == values


def test_format_value():
    assert format_value(True) == "1"
    assert format_value(np.int64(7)) == "7"
    assert format_value(0.1) == "0.1"
    assert format_value(float("nan")) == "nan"
    assert format_value(-math.inf) == "-inf"
    assert format_value("poor-fit") == "poor-fit"


def test_line_endings(tmp_path):
    p = write_csv(tmp_path / "x.csv", ["a", "b"], [(1, 2.5)])
    assert p.read_bytes() == b"a,b\n1,2.5\n"


def test_parse_error_location(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t_ns,counts\n0.0,5\n0.05,five\n")
    with pytest.raises(ParseError) as err:
        read_csv(p)
    assert (err.value.line, err.value.column) == (3, 2)
    assert str(err.value).startswith(f"{p}:3:2:")


def test_ragged_row_and_missing_column(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("a,b\n1,2\n3\n")
    with pytest.raises(ParseError) as err:
        read_csv(p)
    assert err.value.line == 3
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ParseError):
        read_csv(p, required=["counts"])


def test_non_numeric_columns(tmp_path):
    p = write_csv(tmp_path / "m.csv", ["frame", "flag"], [(0, ""), (1, "poor-fit")])
    data = read_csv(p, numeric=["frame"])
    assert data["frame"].tolist() == [0.0, 1.0]
    assert data["flag"].tolist() == ["", "poor-fit"]


def test_pgm_round_trip(tmp_path):
    px = np.array([[0, 1, 65535], [300, 2, 7]])
    assert np.array_equal(read_pgm(write_pgm(tmp_path / "f.pgm", px)), px)
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "g.pgm", px + 1)


def test_pgm_rejects_other_formats(tmp_path):
    p = tmp_path / "p.pgm"
    p.write_bytes(b"P2\n2 1\n255\n1 2\n")
    with pytest.raises(ParseError):
        read_pgm(p)
    p.write_bytes(b"P5\n4 4\n65535\n\x00")
    with pytest.raises(ParseError):
        read_pgm(p)


def test_frame_sidecar_round_trip(tmp_path):
    cam = CameraModel(pixel_size=80.0, read_noise=1.5, background_rate=3.0)
    f = render_frame([(600.0, 520.0, 4000.0)], cam, 13, seed=5, origin=(100.0, -40.0))
    path = write_frame(tmp_path / "frame_000", f, seed=5)
    back = read_frame(path)
    assert np.array_equal(back.pixels, f.pixels)
    assert back.origin == (100.0, -40.0)
    assert back.camera == cam
    assert json.loads(path.with_suffix(".json").read_text())["seed"] == 5


def test_frame_without_sidecar(tmp_path):
    path = write_pgm(tmp_path / "bare.pgm", np.ones((9, 9), dtype=int))
    f = read_frame(path)
    assert f.origin == (0.0, 0.0) and f.camera == CameraModel()
