import math

import numpy as np
import pytest

from nestedtomo import io
from nestedtomo.errors import ConfigError, InvalidArgument
from nestedtomo.simulate import Scatterer, SceneSpec, SnapshotStack, facade_scene, simulate_scene

from conftest import REFERENCE_ARRAYS, RHO, geometry_for


def test_snapshot_container_round_trip(tmp_path):
    scene = SceneSpec({(0, 0): [Scatterer(1.0)], (2, 5): [Scatterer(-3.0), Scatterer(4.0, 0.5)]})
    stacks = simulate_scene(geometry_for(REFERENCE_ARRAYS["nested4x2"]), scene, 5, 15.0, seed=9)
    path = io.write_snapshots(tmp_path / "s.bin", stacks)
    assert path.read_bytes()[:8] == io.MAGIC
    back = io.read_snapshots(path)
    assert sorted(back) == sorted(stacks)
    for key, st in stacks.items():
        assert back[key].seed == st.seed
        assert back[key].noise_power == pytest.approx(st.noise_power)
        assert back[key].snr_db == 15.0
        # complex64 storage
        assert np.allclose(back[key].snapshots, st.snapshots, rtol=1e-6, atol=1e-6)


def test_snapshot_container_infinite_snr(tmp_path):
    st = SnapshotStack(np.ones((3, 4), complex), math.inf, 1, 0.0)
    back = io.read_snapshots(io.write_snapshots(tmp_path / "s.bin", {(0, 0): st}))
    assert back[(0, 0)].snr_db == math.inf


def test_snapshot_container_rejects(tmp_path):
    with pytest.raises(InvalidArgument):
        io.write_snapshots(tmp_path / "e.bin", {})
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTASNAP" + bytes(8))
    with pytest.raises(InvalidArgument):
        io.read_snapshots(bad)
    mixed = {(0, 0): SnapshotStack(np.ones((3, 4))), (0, 1): SnapshotStack(np.ones((2, 4)))}
    with pytest.raises(InvalidArgument):
        io.write_snapshots(tmp_path / "m.bin", mixed)


def test_scene_round_trip():
    scene = facade_scene(RHO)
    back = io.scene_from_dict(io.scene_to_dict(scene))
    assert back.keys() == scene.keys()
    assert back.pixels == scene.pixels
    assert back.n_points() == scene.n_points()


def test_scene_malformed():
    with pytest.raises(ConfigError):
        io.scene_from_dict({"pixels": [{"range": 0}]})


def test_csv_and_xyz(tmp_path):
    p = io.write_csv(tmp_path / "a.csv", ["k", "v"], [["x", 1 / 3], ["y", 2]])
    assert p.read_text() == "k,v\nx,0.333333333\ny,2\n"
    assert io.read_csv(p) == (["k", "v"], [["x", "0.333333333"], ["y", "2"]])
    pts = [(0, 1, 2.5, 1.0), (3, 4, -1.25, 0.5)]
    x = io.write_xyz(tmp_path / "c.xyz", pts)
    assert x.read_text().splitlines()[0] == "# x y z power"
    assert np.array_equal(io.read_xyz(x), np.array(pts, dtype=float))
    empty = io.write_xyz(tmp_path / "e.xyz", [])
    assert io.read_xyz(empty).shape == (0, 4)


def test_load_json_errors(tmp_path):
    f = tmp_path / "bad.json"
    f.write_text("{not json")
    with pytest.raises(ConfigError):
        io.load_json(f)
