import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nestedtomo.covariance import (CovarianceEstimate, ideal_covariance, log_gaussian_density,
                                   m_estimator_covariance, reject_outliers, robust_pipeline,
                                   robust_weight, sample_covariance, select_adaptive_window,
                                   vectorize_and_select)
from nestedtomo.errors import InvalidArgument, NumericalFailure
from nestedtomo.geometry import difference_coarray
from nestedtomo.simulate import complex_normal

from conftest import REFERENCE_ARRAYS

N = 6


def gaussian_stack(rng, c, n):
    return complex_normal(rng, (n, c.shape[0])) @ np.linalg.cholesky(c).T


def random_cov(rng, m=N):
    a = complex_normal(rng, (m, m))
    return a @ a.conj().T + 0.5 * np.eye(m)


def assert_hermitian_psd(c):
    assert np.allclose(c, c.conj().T, atol=1e-12)
    assert np.linalg.eigvalsh(c).min() >= -1e-10 * np.real(np.trace(c))


# -- sample / ideal covariance --------------------------------------------

def test_single_snapshot_outer_product(rng):
    y = complex_normal(rng, N)
    est = sample_covariance(y[None, :])
    assert np.allclose(est.matrix, np.outer(y, y.conj()))
    loaded = sample_covariance(y[None, :], 0.1)
    assert loaded.loading == pytest.approx(0.1 * np.vdot(y, y).real / N)


def test_sample_covariance_hermitian_psd(rng):
    est = sample_covariance(complex_normal(rng, (3, N)))
    assert_hermitian_psd(est.matrix)


def test_empty_stack_rejected():
    with pytest.raises(InvalidArgument):
        sample_covariance(np.zeros((0, N)))


def test_sample_covariance_rate(rng):
    c = random_cov(rng)
    errs = []
    for n in (100, 1000, 10000):
        e = [np.linalg.norm(sample_covariance(gaussian_stack(rng, c, n)).matrix - c)
             for _ in range(30)]
        errs.append(np.mean(e))
    for a, b in zip(errs, errs[1:]):
        assert math.sqrt(10) / 1.5 <= a / b <= math.sqrt(10) * 1.5


def test_ideal_covariance_examples(nested42_phi):
    l = nested42_phi.shape[1]
    p = np.zeros(l)
    assert np.allclose(ideal_covariance(nested42_phi, p, 2.0).matrix, 2.0 * np.eye(6))
    p[40] = 1.0
    c = ideal_covariance(nested42_phi, p, 0.0).matrix
    phi = nested42_phi.entries[:, 40]
    assert np.allclose(c, np.outer(phi, phi.conj()))
    assert np.linalg.matrix_rank(c) == 1
    with pytest.raises(InvalidArgument):
        ideal_covariance(nested42_phi, -p, 0.0)


# -- log density -----------------------------------------------------------

def test_log_density_examples():
    eye = np.eye(N)
    assert log_gaussian_density(np.zeros(N), eye) == pytest.approx(-N * math.log(math.pi))
    y = np.zeros(N, complex)
    y[2] = 1j
    assert log_gaussian_density(y, eye) == pytest.approx(-N * math.log(math.pi) - 1)
    zero = np.zeros(N)
    diff = log_gaussian_density(zero, 2 * eye) - log_gaussian_density(zero, eye)
    assert diff == pytest.approx(-N * math.log(2))


def test_log_density_matches_direct_formula(rng):
    c = random_cov(rng)
    y = complex_normal(rng, N)
    direct = -N * math.log(math.pi) - math.log(np.linalg.det(c).real) - \
        np.real(y.conj() @ np.linalg.solve(c, y))
    assert log_gaussian_density(y, c) == pytest.approx(direct)


def test_log_density_singular():
    with pytest.raises(NumericalFailure):
        log_gaussian_density(np.ones(N), np.diag([1.0] * (N - 1) + [0.0]))


# -- adaptive window ---------------------------------------------------------

POS = np.array([1, 2, 3, 4, 5, 10])


def _rank1(s, p, noise):
    a = np.exp(1j * POS * s)
    return p * np.outer(a, a.conj()) + noise * np.eye(N)


def two_population_field(seed, edge=8, size=15):
    rng = np.random.default_rng(seed)
    w = complex_normal(rng, (size, size, N))
    f = w @ np.linalg.cholesky(_rank1(0.3, 1.0, 0.1)).T
    f[:, edge:] = w[:, edge:] @ np.linalg.cholesky(_rank1(1.4, 10.0, 0.1)).T
    return f


def test_adaptive_window_homogeneous_contract(rng):
    f = complex_normal(rng, (9, 9, N))
    sel = select_adaptive_window(f, (4, 4), 3)
    assert sel.scores.size == 9
    assert (4, 4) in sel.pixels()
    assert sel.scores[sel.chosen_offset[0] * 3 + sel.chosen_offset[1]] == sel.scores.max()


def test_adaptive_window_edge_pixel(rng):
    f = complex_normal(rng, (6, 6, N))
    sel = select_adaptive_window(f, (0, 0), 3)
    assert sel.chosen_offset == (0, 0)
    assert np.isinf(sel.scores).sum() == 8


@pytest.mark.parametrize("l", [1, 4])
def test_adaptive_window_bad_size(rng, l):
    with pytest.raises(InvalidArgument):
        select_adaptive_window(complex_normal(rng, (9, 9, N)), (4, 4), l)


def test_adaptive_window_avoids_foreign_population():
    hits = 0
    for seed in range(200):
        sel = select_adaptive_window(two_population_field(seed), (7, 7), 5)
        hits += sel.origin[1] + 4 < 8
    assert hits >= 180


def test_adaptive_window_tie_break_prefers_center():
    f = np.ones((7, 7, N)) * (1 + 1j)
    sel = select_adaptive_window(f, (3, 3), 3)
    assert sel.chosen_offset == (1, 1)


def test_adaptive_window_order_stable():
    f = two_population_field(3)
    base = select_adaptive_window(f, (7, 7), 5)
    order = [(i, j) for i in range(5) for j in range(5)]
    for seed in range(5):
        np.random.default_rng(seed).shuffle(order)
        assert select_adaptive_window(f, (7, 7), 5, evaluation_order=order).chosen_offset == \
            base.chosen_offset


# -- M-estimator -------------------------------------------------------------

def test_weight_is_one_at_dimension():
    for nu in (1.0, 3.0, 5.0):
        assert robust_weight(N, N, nu) == 1.0


def test_large_nu_limit(rng):
    y = gaussian_stack(rng, random_cov(rng), 121)
    m = m_estimator_covariance(y, nu=1e6, epsilon=1e-9, initial=sample_covariance(y))
    s = sample_covariance(y).matrix
    assert np.linalg.norm(m.matrix - s) / np.linalg.norm(s) < 1e-3


def test_m_estimator_converges_and_stays_psd(rng):
    c = random_cov(rng)
    for seed in range(20):
        y = gaussian_stack(np.random.default_rng(seed), c, 121)
        est = m_estimator_covariance(y, 3.0, 1e-6, 100, sample_covariance(y[:9], 1e-3))
        assert est.converged and est.iterations <= 100
        assert_hermitian_psd(est.matrix)


def test_m_estimator_nonconvergence_flag(rng):
    y = gaussian_stack(rng, random_cov(rng), 121)
    est = m_estimator_covariance(y, 3.0, 1e-15, 2, sample_covariance(y[:9], 1e-3))
    assert not est.converged and est.iterations == 2


# -- outlier rejection -------------------------------------------------------

def test_identical_snapshots_none_rejected(rng):
    y = np.tile(complex_normal(rng, N), (20, 1))
    est = reject_outliers(y, sample_covariance(y, 1e-3))
    assert est.inlier_mask.all()


def test_infinite_threshold_keeps_everything(rng):
    y = complex_normal(rng, (50, N))
    est = reject_outliers(y, sample_covariance(y, 1e-3), math.inf)
    assert est.inlier_mask.all()
    assert np.allclose(est.matrix, sample_covariance(y).matrix)


def test_planted_outlier_rejected(rng):
    c = random_cov(rng)
    y = gaussian_stack(rng, c, 121)
    y[60] *= 10.0
    est = robust_pipeline(y)
    assert not est.inlier_mask[60]
    assert_hermitian_psd(est.matrix)


def test_median_rule_keeps_at_least_half(rng):
    y = complex_normal(rng, (41, N))
    est = reject_outliers(y, CovarianceEstimate(np.eye(N)), tau_log=1e-9)
    assert est.inlier_mask.sum() >= 21 and not est.fallback


def test_all_rejected_fallback(rng, monkeypatch):
    import nestedtomo.covariance as cov
    y = complex_normal(rng, (10, N))
    monkeypatch.setattr(cov.np, "median", lambda x: np.inf)
    c = CovarianceEstimate(np.eye(N))
    est = cov.reject_outliers(y, c)
    assert est.fallback and not est.inlier_mask.any()
    assert np.array_equal(est.matrix, c.matrix)


# -- vectorization -----------------------------------------------------------

def test_vectorize_conjugate_symmetry(rng):
    arr = REFERENCE_ARRAYS["coprime3x4"]
    co = difference_coarray(arr)
    z = vectorize_and_select(random_cov(rng), co)
    for i, g in enumerate(co.lags):
        assert z[co.lags.index(-g)] == pytest.approx(np.conj(z[i]))


def test_vectorize_length_and_mismatch(rng):
    co = difference_coarray(REFERENCE_ARRAYS["nested4x2"])
    assert vectorize_and_select(random_cov(rng), co).shape == (19,)
    with pytest.raises(InvalidArgument):
        vectorize_and_select(np.eye(5), co)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_vectorize_averages_duplicates(seed):
    rng = np.random.default_rng(seed)
    arr = REFERENCE_ARRAYS["coprime3x4"]
    c = random_cov(rng)
    co = difference_coarray(arr)
    z = vectorize_and_select(c, co)
    p = arr.positions
    for k, g in enumerate(co.lags):
        vals = [c[i, j] for j in range(6) for i in range(6) if p[i] - p[j] == g]
        assert z[k] == pytest.approx(np.mean(vals))
