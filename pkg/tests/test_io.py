import numpy as np
import pytest

from curveflow import io as cio
from curveflow.config import apply_overrides, resolve_config
from curveflow.errors import MissingArtifact
from curveflow.scenarios import builtin_raw, run_scenario

DIAMOND = np.array([[1.0, 0, 0], [0, 1.0, 0], [-1.0, 0, 0], [0, -1.0, 0]])


def test_diamond_snapshot(tmp_path):
    p = cio.write_snapshot(tmp_path / "s.csv", DIAMOND)
    raw = p.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "k,u,x1,x2,x3"
    assert len(lines) == 5
    u, X = cio.read_snapshot(p)
    np.testing.assert_array_equal(u, [0, 0.25, 0.5, 0.75])
    np.testing.assert_array_equal(X, DIAMOND)


def test_snapshot_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(31)
    X = rng.normal(size=(50, 3)) * 10.0 ** rng.integers(-8, 8, (50, 3))
    _, back = cio.read_snapshot(cio.write_snapshot(tmp_path / "r.csv", X))
    assert back.tobytes() == X.tobytes()
    Y = rng.uniform(-3, 3, (20, 2))
    p = cio.write_snapshot(tmp_path / "y.csv", Y)
    assert p.read_text().splitlines()[0] == "k,u,y1,y2"
    assert cio.read_snapshot(p)[1].tobytes() == Y.tobytes()


def test_seventeen_digits():
    assert cio.fmt(0.1) == "0.10000000000000001"
    assert float(cio.fmt(np.pi)) == np.pi


def test_series_round_trip(tmp_path):
    rows = [{"t": 0.0, "L": 1 / 3}, {"t": 0.5, "L": 2 / 7}]
    data = cio.read_series(cio.write_series(tmp_path / "s.csv", rows, ("t", "L")))
    np.testing.assert_array_equal(data["L"], [1 / 3, 2 / 7])


def test_missing_files(tmp_path):
    with pytest.raises(MissingArtifact):
        cio.read_snapshot(tmp_path / "nope.csv")
    with pytest.raises(MissingArtifact):
        cio.read_series(tmp_path / "nope.csv")
    with pytest.raises(MissingArtifact):
        cio.read_json(tmp_path / "nope.json")


def test_polyline_obj(tmp_path):
    text = cio.write_polyline_obj(tmp_path / "c.obj", DIAMOND).read_text().splitlines()
    assert text[0] == "v 1 0 0"
    assert text[-1] == "l 1 2 3 4 1"


def test_json_non_finite(tmp_path):
    p = cio.write_json(tmp_path / "m.json", {"x": np.float64("nan"), "n": np.int64(3)})
    assert cio.read_json(p) == {"n": 3, "x": "nan"}


def test_immersed_winding_bookkeeping(tmp_path):
    raw = apply_overrides(builtin_raw("torus_knot_2_3"),
                          ["formulation=immersed", "solver.t_end=0.05", "output.snapshot_dt=0.05"])
    art = run_scenario(resolve_config(raw), tmp_path / "imm")
    assert art.ok
    for snap in art.snapshots:
        _, Y = cio.read_snapshot(snap)
        spacing = np.max(np.linalg.norm(np.diff(Y, axis=0), axis=1))
        gap = Y[-1] - Y[0]
        assert np.linalg.norm(gap - np.array([2.0, 3.0])) <= spacing
