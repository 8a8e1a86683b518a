import math

import numpy as np
import pytest

from nestedtomo.covariance import ideal_covariance, sample_covariance
from nestedtomo.errors import InvalidArgument
from nestedtomo.model import steering_vectors
from nestedtomo.simulate import (Scatterer, SceneSpec, derive_seed, facade_scene,
                                 simulate_scene, simulate_snapshots)

from conftest import REFERENCE_ARRAYS, RHO, geometry_for


@pytest.fixture
def geom():
    return geometry_for(REFERENCE_ARRAYS["nested4x2"])


def test_noise_free_deterministic_equals_steering_vector(geom):
    st = simulate_snapshots(geom, [Scatterer(3.0, 1.0)], 5, math.inf, 0, "deterministic")
    phi = steering_vectors(geom, [3.0])[:, 0]
    assert st.noise_power == 0.0
    assert np.allclose(st.snapshots, phi[None, :])


def test_stochastic_covariance_converges(geom):
    scats = [Scatterer(-4.0, 1.0), Scatterer(6.0, 0.5)]
    st = simulate_snapshots(geom, scats, 100_000, 10.0, seed=3)
    a = steering_vectors(geom, [-4.0, 6.0])
    ideal = ideal_covariance(a, [1.0, 0.5], st.noise_power).matrix
    est = sample_covariance(st).matrix
    assert np.linalg.norm(est - ideal) / np.linalg.norm(ideal) < 0.05


def test_snr_accounting(geom):
    scats = [Scatterer(0.0, 1.0), Scatterer(5.0, 1.0)]
    assert simulate_snapshots(geom, scats, 1, 20.0).noise_power == pytest.approx(2.0 / 100.0)
    assert simulate_snapshots(geom, scats, 1, 0.0).noise_power == pytest.approx(2.0)
    assert simulate_snapshots(geom, scats, 1, math.inf).noise_power == 0.0


def test_empirical_noise_variance(geom):
    # unit-power scatterer far from anything, noise variance 1 at 0 dB; remove the signal exactly
    n = 1_000_000 // geom.element_count
    st = simulate_snapshots(geom, [Scatterer(0.0, 1.0)], n, 0.0, seed=11,
                            amplitude_mode="deterministic")
    noise = st.snapshots - steering_vectors(geom, [0.0])[:, 0]
    assert np.mean(np.abs(noise) ** 2) == pytest.approx(1.0, rel=0.02)


def test_determinism(geom):
    args = (geom, [Scatterer(1.0), Scatterer(9.0)], 121, 20.0, 42)
    a, b = simulate_snapshots(*args), simulate_snapshots(*args)
    assert np.array_equal(a.snapshots, b.snapshots)


@pytest.mark.parametrize("bad", [dict(n_snapshots=0), dict(snr_db=float("nan"))])
def test_invalid_arguments(geom, bad):
    kw = dict(n_snapshots=4, snr_db=10.0)
    kw.update(bad)
    with pytest.raises(InvalidArgument):
        simulate_snapshots(geom, [Scatterer(0.0)], **kw)


def test_negative_power_rejected():
    with pytest.raises(InvalidArgument):
        Scatterer(0.0, -1.0)


def test_scene_window_and_seeds(geom):
    scene = SceneSpec({(0, 0): [Scatterer(0.0)], (0, 1): [Scatterer(0.0)]})
    a = simulate_scene(geom, scene, 11, 20.0, seed=5)
    b = simulate_scene(geom, scene, 11, 20.0, seed=5)
    assert a[(0, 0)].n_snapshots == 121
    assert not np.array_equal(a[(0, 0)].snapshots, a[(0, 1)].snapshots)
    assert all(np.array_equal(a[k].snapshots, b[k].snapshots) for k in a)


def test_scene_seed_independent_of_order(geom):
    pixels = {(r, c): [Scatterer(float(r))] for r in range(3) for c in range(2)}
    full = simulate_scene(geom, SceneSpec(pixels), 3, 20.0, seed=9)
    part = simulate_scene(geom, SceneSpec({(2, 1): pixels[(2, 1)]}), 3, 20.0, seed=9)
    assert np.array_equal(full[(2, 1)].snapshots, part[(2, 1)].snapshots)


def test_empty_scene_rejected(geom):
    with pytest.raises(InvalidArgument):
        simulate_scene(geom, SceneSpec({}), 11, 20.0, 0)


def test_scene_max_scatterers():
    with pytest.raises(InvalidArgument):
        SceneSpec({(0, 0): [Scatterer(0.0)] * 3}, max_scatterers=2)


def test_facade_template():
    scene = facade_scene(RHO)
    assert len(scene) == 1600
    counts = {len(v) for v in scene.pixels.values()}
    assert counts <= {1, 2} and 2 in counts
    assert all(s.power == 1.0 for v in scene.pixels.values() for s in v)


def test_derive_seed_is_stable():
    assert derive_seed(1, 2, "a") == derive_seed(1, 2, "a")
    assert derive_seed(1, 2, "a") != derive_seed(1, 2, "b")
    assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)
