import numpy as np
import pytest

from critpotts.dynamics import FK_GLAUBER, POTTS_GLAUBER, ChainState, run, stream_for
from critpotts.io import (csv_text, dumps_config, load_checkpoint, loads_config, metadata_lines,
                          read_csv_body, read_ppm, save_checkpoint, write_csv, write_ppm)
from critpotts.lattice import build_lattice
from critpotts.model import FKBoundary, Params, PottsBoundary


@pytest.mark.parametrize("make", [
    lambda: FKBoundary.free(build_lattice(3, 2)),
    lambda: FKBoundary.wired_sides(build_lattice(3, 3), "NS"),
    lambda: FKBoundary.periodic_bc(build_lattice(3, 3, "torus")),
])
def test_fk_round_trip(make, rng):
    bc = make()
    lat = bc.lattice
    omega = np.where(bc.dynamic_edges, rng.random(lat.num_edges) < 0.5, bc.fixed_values).astype(np.uint8)
    params = Params.critical(3)
    rec = loads_config(dumps_config(omega, bc, params, {"note": "x"}))
    assert np.array_equal(rec.config, omega)
    assert rec.params == params
    assert rec.bc.partition() == bc.partition()
    assert rec.extra == {"note": "x"}


def test_potts_round_trip(rng):
    lat = build_lattice(3, 3)
    bc = PottsBoundary.from_sides(lat, {"S": 2, "N": 1})
    sigma = rng.integers(1, 4, lat.num_vertices)
    sigma[bc.colors > 0] = bc.colors[bc.colors > 0]
    rec = loads_config(dumps_config(sigma, bc, Params.critical(3)))
    assert np.array_equal(rec.config, sigma)
    assert np.array_equal(rec.bc.colors, bc.colors)


def test_rejects_inconsistent_config():
    bc = FKBoundary.wired(build_lattice(2, 2))
    bad = bc.extreme_config(1)
    bad[~bc.dynamic_edges] = 0
    with pytest.raises(ValueError):
        loads_config(dumps_config(bad, bc, Params.critical(2)))


def test_rejects_garbage():
    with pytest.raises(ValueError):
        loads_config("hello\n")


@pytest.mark.parametrize("kind", [FK_GLAUBER, POTTS_GLAUBER])
def test_checkpoint_resume(kind, tmp_path):
    lat = build_lattice(4, 4)
    params = Params.critical(2)
    if kind == FK_GLAUBER:
        bc = FKBoundary.wired_sides(lat, "W")
        start = bc.extreme_config(0)
    else:
        bc = PottsBoundary.from_sides(lat, {"W": 1})
        start = bc.constant_config(2)
    # one straight run
    s1 = stream_for(kind, bc, 99)
    a = run(ChainState(start.copy()), s1, 20.0, kind, bc, params)
    # interrupted run
    s2 = stream_for(kind, bc, 99)
    b = run(ChainState(start.copy()), s2, 7.5, kind, bc, params)
    path = tmp_path / "chk.txt"
    save_checkpoint(path, b, s2, bc, params)
    state, stream, bc2, p2 = load_checkpoint(path)
    assert state.clock == b.clock and stream.position == b.position
    c = run(state, stream, 20.0, kind, bc2, p2)
    assert np.array_equal(a.config, c.config)
    assert a.position == c.position


def test_checkpoint_rejects_mismatch(tmp_path):
    lat = build_lattice(2, 2)
    bc = FKBoundary.free(lat)
    s = stream_for(FK_GLAUBER, bc, 1)
    s.next(3)
    with pytest.raises(ValueError):
        save_checkpoint(tmp_path / "x", ChainState(bc.extreme_config(0)), s, bc, Params.critical(2))


def test_csv_metadata_quarantined(tmp_path):
    rows = [(1, 0.5), (2, 1 / 3)]
    p = write_csv(tmp_path / "a.csv", ["n", "x"], rows, {"seed": 4})
    text = p.read_text()
    assert text.startswith("# created=") and "# seed=4" in text
    assert read_csv_body(p) == csv_text(["n", "x"], rows)
    assert read_csv_body(p).splitlines()[2] == "2,0.3333333333333333"


def test_metadata_without_timestamp():
    assert metadata_lines({"a": 1}, timestamp=False) == ["# a=1"]


def test_ppm_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (5, 7, 3)).astype(np.uint8)
    p = write_ppm(tmp_path / "x.ppm", img, ["seed=3", "q=4"])
    assert p.read_bytes().startswith(b"P6\n# seed=3\n# q=4\n7 5\n255\n")
    assert np.array_equal(read_ppm(p), img)


def test_ppm_rejects_bad_shape(tmp_path):
    with pytest.raises(ValueError):
        write_ppm(tmp_path / "x.ppm", np.zeros((3, 3)))
