"""Sparse elevation recovery: co-array OMP and direct l1 (proximal gradient)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import nnls

from .errors import InvalidArgument, NumericalFailure
from .model import CoArrayManifold, ElevationGrid, SteeringMatrix

log = logging.getLogger(__name__)


class Solver(str, Enum):
    COARRAY_OMP = "coarray_omp"
    DIRECT_L1 = "direct_l1"


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    profile: np.ndarray
    support: tuple[int, ...]
    residual_norm: float
    solver: Solver
    noise_power: float = 0.0
    converged: bool = True
    iterations: int = 0
    residual_history: tuple[float, ...] = ()
    objective_history: tuple[float, ...] = ()

    def powers(self) -> np.ndarray:
        """Per-cell power: the profile itself for OMP, ``|gamma|^2`` for l1."""
        if self.solver is Solver.DIRECT_L1:
            return self.profile ** 2
        return self.profile


@dataclass(frozen=True)
class ScattererEstimate:
    elevation_m: float
    power: float


def _real_system(a: np.ndarray) -> np.ndarray:
    return np.vstack([a.real, a.imag])


def nnls_complex(a: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, float]:
    """Non-negative real ``x`` minimizing ``||z - a x||`` for complex ``a``, ``z``."""
    try:
        x, _ = nnls(_real_system(a), np.concatenate([z.real, z.imag]), maxiter=50 * a.shape[1] + 100)
    except RuntimeError as exc:
        raise NumericalFailure(f"NNLS failed: {exc}") from exc
    return x, float(np.linalg.norm(z - a @ x))


def solve_coarray_omp(zbar: np.ndarray, manifold: CoArrayManifold, sparsity: int | None = None,
                      residual_tol: float | None = None) -> ReconstructionResult:
    """Greedy OMP over the grid atoms with a non-negative refit on the support.

    The noise atom sits in the support from the start. Atoms are picked by
    the largest normalized correlation magnitude with the residual; after each
    pick ``[p_support, sigma^2]`` is refit by NNLS. Stops after ``sparsity``
    grid atoms or once ``||r|| / ||zbar|| < residual_tol``.
    """
    z = np.asarray(zbar, dtype=complex)
    a = manifold.signal
    if z.shape != (a.shape[0],):
        raise InvalidArgument(f"zbar has length {z.size}, manifold has {a.shape[0]} rows")
    n_grid = a.shape[1]
    if sparsity is None and residual_tol is None:
        raise InvalidArgument("give sparsity or residual_tol")
    max_atoms = n_grid if sparsity is None else int(sparsity)
    if max_atoms < 1 or max_atoms > n_grid:
        raise InvalidArgument(f"sparsity must be in [1, {n_grid}], got {sparsity}")
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms == 0):
        raise NumericalFailure("manifold has a zero-norm column")
    z_norm = float(np.linalg.norm(z))
    profile = np.zeros(n_grid)
    if z_norm == 0:
        return ReconstructionResult(profile, (), 0.0, Solver.COARRAY_OMP, 0.0,
                                    residual_history=(0.0,))

    noise = manifold.noise_atom[:, None]
    coef, res = nnls_complex(noise, z)
    sigma2 = float(coef[0])
    support: list[int] = []
    history = [res]
    residual = z - noise[:, 0] * sigma2
    x = np.zeros(0)
    while len(support) < max_atoms:
        if residual_tol is not None and res / z_norm < residual_tol:
            break
        corr = np.abs(a.conj().T @ residual) / norms
        corr[support] = -np.inf
        k = int(np.argmax(corr))
        support.append(k)
        basis = np.hstack([a[:, support], noise])
        coef, res = nnls_complex(basis, z)
        x, sigma2 = coef[:-1], float(coef[-1])
        residual = z - basis @ coef
        history.append(res)
    profile[support] = x if len(support) else profile[support]
    active = tuple(s for s, v in zip(support, x) if v > 0)
    return ReconstructionResult(profile, active, res, Solver.COARRAY_OMP, sigma2,
                                iterations=len(support), residual_history=tuple(history))


def soft_threshold(x: np.ndarray, thresh: float) -> np.ndarray:
    """Complex soft-thresholding: shrink magnitudes by ``thresh``, keep phases."""
    mag = np.abs(x)
    scale = np.maximum(mag - thresh, 0.0) / np.where(mag > 0, mag, 1.0)
    return x * scale


def default_alpha(y: np.ndarray, phi: np.ndarray, frac: float = 0.1) -> float:
    return frac * 2.0 * float(np.max(np.abs(phi.conj().T @ y)))


def l1_objective(y, phi, gamma, alpha) -> float:
    return float(np.linalg.norm(y - phi @ gamma) ** 2 + alpha * np.sum(np.abs(gamma)))


def solve_direct_l1(y, phi: SteeringMatrix | np.ndarray, alpha: float | None = None,
                    max_iter: int = 3000, tol: float = 1e-6, debias: bool = False
                    ) -> ReconstructionResult:
    """Minimize ``||y - Phi g||^2 + alpha ||g||_1`` over complex ``g``.

    Monotone FISTA with backtracking on the Lipschitz estimate, so the
    recorded objective never increases. With ``debias`` the amplitudes on the
    final support (at most ``M`` cells) are refit by least squares, undoing
    the l1 shrinkage.
    """
    y = np.asarray(y, dtype=complex)
    return solve_direct_l1_batch(y[:, None], phi, None if alpha is None else [alpha],
                                 max_iter, tol, debias)[0]


def solve_direct_l1_batch(ys, phi: SteeringMatrix | np.ndarray, alphas=None,
                          max_iter: int = 3000, tol: float = 1e-6, debias: bool = False
                          ) -> list[ReconstructionResult]:
    """``solve_direct_l1`` for every column of ``ys`` (M x P) at once.

    Columns keep separate step sizes, momentum and stopping; a column stops
    updating at the iteration where it converges.
    """
    a = phi.entries if isinstance(phi, SteeringMatrix) else np.asarray(phi)
    ys = np.asarray(ys, dtype=complex)
    if ys.ndim != 2 or ys.shape[0] != a.shape[0]:
        raise InvalidArgument(f"ys must be {a.shape[0]} x P, got {ys.shape}")
    n, p = a.shape[1], ys.shape[1]
    ah = a.conj().T
    if alphas is None:
        alphas = 0.1 * 2.0 * np.abs(ah @ ys).max(axis=0)
    alphas = np.asarray(alphas, dtype=float).reshape(p)
    nonzero = np.any(ys != 0, axis=0)
    if np.any(alphas[nonzero] <= 0):
        raise InvalidArgument(f"alpha must be > 0, got {alphas[nonzero].min()}")

    gamma = np.zeros((n, p), dtype=complex)
    ag = np.zeros_like(ys)
    # products a @ x are carried along with their iterates
    v, av = gamma.copy(), ag.copy()
    step_l = np.full(p, 2.0 * np.linalg.norm(a, 2) ** 2)
    obj = np.sum(np.abs(ys) ** 2, axis=0)
    history = [obj.copy()]
    iterations = np.zeros(p, dtype=int)
    converged = ~nonzero
    t = 1.0
    for it in range(1, max_iter + 1):
        act = np.flatnonzero(~converged)
        if act.size == 0:
            break
        y, va, ava = ys[:, act], v[:, act], av[:, act]
        lip, alpha = step_l[act], alphas[act]
        rv = ava - y
        fv = np.sum(np.abs(rv) ** 2, axis=0)
        grad = 2.0 * (ah @ rv)
        while True:
            u = va - grad / lip
            mag = np.abs(u)
            shrunk = np.maximum(mag - alpha / lip, 0.0)
            cand = u * (shrunk / np.where(mag > 0, mag, 1.0))
            ac = a @ cand
            d = cand - va
            fc = np.sum(np.abs(ac - y) ** 2, axis=0)
            bound = fv + np.sum((grad.conj() * d).real, axis=0) \
                + 0.5 * lip * np.sum(np.abs(d) ** 2, axis=0) + 1e-12 * fv
            bad = fc > bound
            if not bad.any():
                break
            lip = np.where(bad, 2.0 * lip, lip)
        step_l[act] = lip
        cand_obj = fc + alpha * shrunk.sum(axis=0)
        prev, aprev = gamma[:, act], ag[:, act]
        keep = cand_obj <= obj[act]
        g_new = np.where(keep, cand, prev)
        ag_new = np.where(keep, ac, aprev)
        obj[act] = np.where(keep, cand_obj, obj[act])
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        c1, c2 = t / t_next, (t - 1.0) / t_next
        v[:, act] = g_new + c1 * (cand - g_new) + c2 * (g_new - prev)
        av[:, act] = ag_new + c1 * (ac - ag_new) + c2 * (ag_new - aprev)
        gamma[:, act], ag[:, act] = g_new, ag_new
        t = t_next
        history.append(obj.copy())
        iterations[act] = it
        denom = np.maximum(np.linalg.norm(prev, axis=0), 1e-300)
        done = (np.linalg.norm(g_new - prev, axis=0) / denom < tol) & \
            (np.linalg.norm(cand - g_new, axis=0) / denom < tol)
        done |= ~np.any(g_new, axis=0) & ~np.any(cand, axis=0)
        converged[act[done]] = True
    if not converged.all():
        log.debug("direct l1: %d of %d columns stopped at max_iter=%d",
                  int((~converged).sum()), p, max_iter)
    hist = np.array(history)
    out = []
    for j in range(p):
        g = gamma[:, j]
        if debias:
            g = _debias(ys[:, j], a, g)
        profile = np.abs(g)
        out.append(ReconstructionResult(
            profile, tuple(int(i) for i in np.flatnonzero(profile)),
            float(np.linalg.norm(ys[:, j] - a @ g)), Solver.DIRECT_L1,
            converged=bool(converged[j]), iterations=int(iterations[j]),
            objective_history=tuple(float(x) for x in hist[:iterations[j] + 1, j])))
    return out


def _debias(y, a, gamma):
    mag = np.abs(gamma)
    if not mag.any():
        return gamma
    support = np.flatnonzero(mag > 1e-9 * mag.max())
    if support.size > a.shape[0]:
        return gamma
    out = np.zeros_like(gamma)
    out[support] = np.linalg.lstsq(a[:, support], y, rcond=None)[0]
    return out


@dataclass(frozen=True)
class PeakList:
    peaks: tuple[ScattererEstimate, ...]
    shortfall: bool

    def __iter__(self):
        return iter(self.peaks)

    def __len__(self):
        return len(self.peaks)


def extract_peaks(result: ReconstructionResult, grid: ElevationGrid, k: int,
                  rel_floor: float = 0.0) -> PeakList:
    """Merge runs of adjacent non-zero cells and keep the ``k`` strongest.

    A cluster's elevation is its power-weighted centroid and its power the
    sum. Cells below ``rel_floor * max(power)`` count as zero.
    """
    if k < 1:
        raise InvalidArgument(f"k must be >= 1, got {k}")
    power = np.asarray(result.powers(), dtype=float)
    s = grid.samples_m
    nz = power > (rel_floor * power.max() if power.size and power.max() > 0 else 0.0)
    clusters = []
    i = 0
    while i < power.size:
        if not nz[i]:
            i += 1
            continue
        j = i
        while j + 1 < power.size and nz[j + 1]:
            j += 1
        w = power[i:j + 1]
        total = float(w.sum())
        clusters.append(ScattererEstimate(float(np.dot(w, s[i:j + 1]) / total), total))
        i = j + 1
    clusters.sort(key=lambda c: -c.power)
    kept = sorted(clusters[:k], key=lambda c: c.elevation_m)
    return PeakList(tuple(kept), len(kept) < k)
