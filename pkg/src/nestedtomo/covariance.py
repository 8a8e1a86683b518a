"""Covariance estimation: sample averaging, adaptive windows, M-estimation.

All likelihood comparisons happen in the log domain; the raw complex
Gaussian density underflows for realistic channel counts.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg

from .errors import InvalidArgument, NumericalFailure
from .geometry import CoArray
from .model import SteeringMatrix, lag_groups
from .simulate import SnapshotStack

log = logging.getLogger(__name__)

DEFAULT_LOADING = 1e-3
DEFAULT_NU = 3.0
DEFAULT_TAU_LOG = math.log(10.0)
MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    matrix: np.ndarray
    sample_count: int = 1
    loading: float = 0.0
    inlier_mask: np.ndarray | None = None
    iterations: int = 0
    converged: bool = True
    fallback: bool = False

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _hermitize(c: np.ndarray) -> np.ndarray:
    return 0.5 * (c + c.conj().T)


def _as_array(stack) -> np.ndarray:
    y = stack.snapshots if isinstance(stack, SnapshotStack) else np.asarray(stack, dtype=complex)
    return np.atleast_2d(y)


def load_diagonal(c: np.ndarray, loading_rel: float) -> tuple[np.ndarray, float]:
    m = c.shape[0]
    amount = loading_rel * float(np.real(np.trace(c))) / m
    return c + amount * np.eye(m), amount


def sample_covariance(stack, loading_rel: float = 0.0) -> CovarianceEstimate:
    """``(1/L) sum y_l y_l^H`` plus ``loading_rel * trace/M`` on the diagonal."""
    y = _as_array(stack)
    if y.shape[0] < 1 or y.size == 0:
        raise InvalidArgument("cannot estimate covariance from an empty stack")
    if loading_rel < 0:
        raise InvalidArgument("loading must be non-negative")
    c = _hermitize(y.T @ y.conj() / y.shape[0])
    c, amount = load_diagonal(c, loading_rel)
    return CovarianceEstimate(c, y.shape[0], amount)


def ideal_covariance(phi: SteeringMatrix | np.ndarray, powers, noise_power: float = 0.0
                     ) -> CovarianceEstimate:
    a = phi.entries if isinstance(phi, SteeringMatrix) else np.asarray(phi)
    p = np.asarray(powers, dtype=float)
    if p.shape != (a.shape[1],):
        raise InvalidArgument(f"expected {a.shape[1]} powers, got shape {p.shape}")
    if np.any(p < 0) or noise_power < 0:
        raise InvalidArgument("powers and noise power must be non-negative")
    c = (a * p) @ a.conj().T + noise_power * np.eye(a.shape[0])
    return CovarianceEstimate(_hermitize(c), sample_count=1)


class _GaussianScorer:
    """Cholesky-backed evaluator of complex Gaussian log densities."""

    def __init__(self, c: np.ndarray):
        c = np.asarray(c)
        w = np.linalg.eigvalsh(c)
        if w[0] <= 0 or w[-1] / w[0] > MAX_CONDITION:
            raise NumericalFailure(f"covariance is singular (eigenvalues {w[0]:.3g}..{w[-1]:.3g})")
        self.chol = linalg.cholesky(c, lower=True)
        self.n = c.shape[0]
        self.logdet = 2.0 * float(np.sum(np.log(np.real(np.diag(self.chol)))))

    def quad(self, y: np.ndarray) -> np.ndarray:
        """``y^H C^-1 y`` for each row of ``y``."""
        z = linalg.solve_triangular(self.chol, np.atleast_2d(y).T, lower=True)
        return np.sum(np.abs(z) ** 2, axis=0)

    def logpdf(self, y: np.ndarray) -> np.ndarray:
        return -self.n * math.log(math.pi) - self.logdet - self.quad(y)


def log_gaussian_density(y, c: CovarianceEstimate | np.ndarray) -> float:
    """Log of the circular complex Gaussian density of ``y`` under ``c``."""
    mat = c.matrix if isinstance(c, CovarianceEstimate) else c
    return float(_GaussianScorer(mat).logpdf(np.asarray(y, dtype=complex))[0])


def log_gaussian_densities(y, c: CovarianceEstimate | np.ndarray) -> np.ndarray:
    mat = c.matrix if isinstance(c, CovarianceEstimate) else c
    return _GaussianScorer(mat).logpdf(_as_array(y))


@dataclass(frozen=True, eq=False)
class WindowSelection:
    window_size: int
    chosen_offset: tuple[int, int]
    scores: np.ndarray
    inlier_mask: np.ndarray
    origin: tuple[int, int]

    def pixels(self) -> list[tuple[int, int]]:
        r0, c0 = self.origin
        l = self.window_size
        return [(r0 + i, c0 + j) for i in range(l) for j in range(l)]


def _placement_order(l: int):
    center = l // 2
    offsets = [(i, j) for i in range(l) for j in range(l)]
    # ties: centered first, then lexicographic
    return sorted(offsets, key=lambda o: (o != (center, center), o))


def select_adaptive_window(field: np.ndarray, target: tuple[int, int], window_size: int,
                           loading_rel: float = DEFAULT_LOADING,
                           evaluation_order: Sequence[tuple[int, int]] | None = None
                           ) -> WindowSelection:
    """Pick the ``l x l`` window around ``target`` under which it is most likely.

    ``field`` is an ``H x W x M`` array holding one single-look vector per
    pixel. Each placement puts the target at offset ``(i, j)`` inside the
    window; placements that would leave the field are skipped (score
    ``-inf``). ``evaluation_order`` only exists to exercise tie-breaking.
    """
    l = int(window_size)
    if l < 3 or l % 2 == 0:
        raise InvalidArgument(f"window size must be odd and >= 3, got {window_size}")
    field = np.asarray(field)
    h, w = field.shape[:2]
    tr, tc = target
    if not (0 <= tr < h and 0 <= tc < w):
        raise InvalidArgument(f"target {target} outside field of shape {(h, w)}")
    y = field[tr, tc]
    scores = np.full((l, l), -np.inf)
    order = list(evaluation_order) if evaluation_order is not None else _placement_order(l)
    for i, j in order:
        r0, c0 = tr - i, tc - j
        if r0 < 0 or c0 < 0 or r0 + l > h or c0 + l > w:
            continue
        block = field[r0:r0 + l, c0:c0 + l].reshape(l * l, -1)
        est = sample_covariance(block, loading_rel)
        try:
            scores[i, j] = log_gaussian_density(y, est)
        except NumericalFailure:
            continue
    if not np.any(np.isfinite(scores)):
        raise NumericalFailure("no valid window placement")
    best = max(_placement_order(l), key=lambda o: (scores[o], o == (l // 2, l // 2),
                                                    tuple(-x for x in o)))
    origin = (tr - best[0], tc - best[1])
    return WindowSelection(l, best, scores.ravel(), np.ones(l * l, dtype=bool), origin)


def robust_weight(x, n: int, nu: float):
    """``(2N + nu) / (nu + 2x)``; equals 1 at ``x = N``."""
    return (2.0 * n + nu) / (nu + 2.0 * np.asarray(x, dtype=float))


def m_estimator_covariance(stack, nu: float = DEFAULT_NU, epsilon: float = 1e-6,
                           max_iter: int = 100, initial: CovarianceEstimate | None = None,
                           loading_rel: float = DEFAULT_LOADING) -> CovarianceEstimate:
    """Fixed-point M-estimate with weights from :func:`robust_weight`.

    Stops once the relative Frobenius change drops below ``epsilon``. Without
    ``initial`` the (loaded) sample covariance of the stack seeds the iteration.
    """
    y = _as_array(stack)
    if y.shape[0] < 1:
        raise InvalidArgument("empty stack")
    if nu <= 0 or epsilon <= 0 or max_iter < 1:
        raise InvalidArgument("nu, epsilon and max_iter must be positive")
    n = y.shape[1]
    c = (initial.matrix if initial is not None else sample_covariance(y, loading_rel).matrix)
    c = np.array(c, dtype=complex)
    converged = False
    k = 0
    for k in range(1, max_iter + 1):
        scorer = _GaussianScorer(c)
        weights = robust_weight(scorer.quad(y), n, nu)
        c_next = _hermitize((y.T * weights) @ y.conj() / y.shape[0])
        if not np.all(np.isfinite(c_next)):
            raise NumericalFailure("M-estimator diverged")
        change = np.linalg.norm(c_next - c) / np.linalg.norm(c)
        c = c_next
        if change < epsilon:
            converged = True
            break
    if not converged:
        log.info("M-estimator did not converge in %d iterations", max_iter)
    return CovarianceEstimate(c, y.shape[0], 0.0, iterations=k, converged=converged)


def reject_outliers(stack, c: CovarianceEstimate, tau_log: float = DEFAULT_TAU_LOG,
                    loading_rel: float = 0.0) -> CovarianceEstimate:
    """Drop snapshots whose log density falls ``tau_log`` below the median.

    The surviving snapshots are plainly re-averaged. If nothing survives the
    input estimate is returned with ``fallback=True``.
    """
    y = _as_array(stack)
    if tau_log <= 0:
        raise InvalidArgument("tau_log must be positive")
    logf = log_gaussian_densities(y, c)
    mask = logf >= np.median(logf) - tau_log
    if not mask.any():
        log.warning("all snapshots rejected; keeping the unrefined estimate")
        return replace(c, inlier_mask=mask, fallback=True)
    refined = sample_covariance(y[mask], loading_rel)
    return replace(refined, inlier_mask=mask, iterations=c.iterations, converged=c.converged)


def robust_pipeline(stack, initial_count: int = 9, nu: float = DEFAULT_NU,
                    epsilon: float = 1e-6, max_iter: int = 100,
                    tau_log: float = DEFAULT_TAU_LOG,
                    loading_rel: float = DEFAULT_LOADING) -> CovarianceEstimate:
    """M-estimate seeded from the first ``initial_count`` snapshots, then screening.

    The caller orders the snapshots so that the first ``initial_count`` are
    the classic 3 x 3 neighborhood of the target.
    """
    y = _as_array(stack)
    seed_block = y[:min(initial_count, y.shape[0])]
    init = sample_covariance(seed_block, max(loading_rel, 1e-6))
    robust = m_estimator_covariance(y, nu, epsilon, max_iter,
                                    CovarianceEstimate(load_diagonal(init.matrix, 0.0)[0]),
                                    loading_rel)
    scored = CovarianceEstimate(load_diagonal(robust.matrix, loading_rel)[0], robust.sample_count,
                                iterations=robust.iterations, converged=robust.converged)
    return reject_outliers(y, scored, tau_log)


def vectorize_and_select(c: CovarianceEstimate | np.ndarray, coarray: CoArray) -> np.ndarray:
    """Column-stack ``c``, average entries sharing a lag, order by ascending lag."""
    mat = c.matrix if isinstance(c, CovarianceEstimate) else np.asarray(c)
    positions = coarray.positions
    m = len(positions)
    if mat.shape != (m, m) or coarray.element_count != m:
        raise InvalidArgument(f"covariance of shape {mat.shape} does not match {m} elements")
    z = mat.ravel(order="F")
    return np.array([z[idx].mean() for idx in lag_groups(positions, coarray.lags)])
