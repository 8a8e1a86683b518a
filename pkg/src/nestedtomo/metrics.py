"""Evaluation metrics: Monte Carlo RMSE and point-cloud density/dispersion."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateInput, EmptyNeighborhood, InvalidArgument
from .recover import ScattererEstimate

HUBER_K = 1.345
MAD_SCALE = 1.4826
MAX_ASSIGN = 5


@dataclass(frozen=True)
class TrialRecord:
    truth: tuple[ScattererEstimate, ...]
    estimate: tuple[ScattererEstimate, ...]
    seed: int = 0

    def __post_init__(self):
        if not self.truth:
            raise InvalidArgument("trial has no truth scatterers")


def assign(truth: Sequence[ScattererEstimate], estimate: Sequence[ScattererEstimate]):
    """Pairing permutation minimizing the summed squared elevation error."""
    t = np.array([s.elevation_m for s in truth])
    e = np.array([s.elevation_m for s in estimate])
    if len(t) > MAX_ASSIGN:
        raise InvalidArgument(f"exhaustive assignment supports K <= {MAX_ASSIGN}")
    best, best_cost = None, np.inf
    for perm in itertools.permutations(range(len(e))):
        cost = float(np.sum((e[list(perm)] - t) ** 2))
        if cost < best_cost:
            best, best_cost = perm, cost
    return best


def trial_errors(record: TrialRecord) -> tuple[np.ndarray, np.ndarray]:
    if len(record.truth) != len(record.estimate):
        raise InvalidArgument(f"truth has {len(record.truth)} scatterers, "
                              f"estimate has {len(record.estimate)}")
    perm = assign(record.truth, record.estimate)
    dh = np.array([record.estimate[j].elevation_m - t.elevation_m
                   for t, j in zip(record.truth, perm)])
    da = np.array([record.estimate[j].power - t.power for t, j in zip(record.truth, perm)])
    return dh, da


def rmse_report(trials: Sequence[TrialRecord]) -> dict:
    """Position and power RMSE pooled over all trials and matched pairs."""
    if not trials:
        raise InvalidArgument("no trials")
    dh, da = zip(*(trial_errors(t) for t in trials))
    dh, da = np.concatenate(dh), np.concatenate(da)
    return {"rmse_h": float(np.sqrt(np.mean(dh ** 2))),
            "rmse_a": float(np.sqrt(np.mean(da ** 2)))}


@dataclass(frozen=True)
class CloudPoint:
    x: float
    y: float
    z: float
    power: float = 1.0

    def __post_init__(self):
        if not all(np.isfinite([self.x, self.y, self.z])):
            raise InvalidArgument("cloud point has non-finite coordinates")


@dataclass(frozen=True)
class Axis:
    point: np.ndarray
    direction: np.ndarray
    iterations: int = 0
    degenerate: bool = False

    def distances(self, xyz: np.ndarray) -> np.ndarray:
        rel = np.asarray(xyz, dtype=float) - self.point
        along = rel @ self.direction
        return np.linalg.norm(rel - np.outer(along, self.direction), axis=1)


def _as_xyz(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return np.atleast_2d(points.astype(float))
    return np.array([[p.x, p.y, p.z] for p in points], dtype=float)


def _weighted_axis(xyz, w):
    center = (w[:, None] * xyz).sum(0) / w.sum()
    rel = xyz - center
    scatter = (w[:, None] * rel).T @ rel
    vals, vecs = np.linalg.eigh(scatter)
    d = vecs[:, -1]
    return center, d, vals


def _orient(d: np.ndarray) -> np.ndarray:
    d = d / np.linalg.norm(d)
    # +z first; ties on horizontal axes fall back to +x then +y
    for comp in (2, 0, 1):
        if abs(d[comp]) > 1e-15:
            return d if d[comp] > 0 else -d
    return d


def robust_principal_axis(points, max_iter: int = 50, tol: float = 1e-12) -> Axis:
    """IRLS line fit with Huber weights on orthogonal distances.

    The scale is the normalized median absolute distance; when it vanishes
    the points at zero distance carry all the weight.
    """
    xyz = _as_xyz(points)
    if xyz.shape[0] < 3:
        raise InvalidArgument(f"need >= 3 points, got {xyz.shape[0]}")
    w = np.ones(len(xyz))
    center, d, vals = _weighted_axis(xyz, w)
    if vals[-1] <= 1e-24 * max(1.0, float(np.abs(xyz).max()) ** 2):
        return Axis(center, np.array([0.0, 0.0, 1.0]), 0, degenerate=True)
    axis = Axis(center, _orient(d))
    # distances below this are round-off on an exactly collinear subset
    zero = 1e-9 * float(np.sqrt(vals[-1] / len(xyz)))
    it = 0
    for it in range(1, max_iter + 1):
        r = axis.distances(xyz)
        scale = MAD_SCALE * float(np.median(r))
        if scale <= zero:
            w = (r <= zero).astype(float)
        else:
            cut = HUBER_K * scale
            w = np.where(r <= cut, 1.0, cut / np.maximum(r, cut))
        if w.sum() <= 0 or np.count_nonzero(w) < 2:
            break
        center, d, _ = _weighted_axis(xyz, w)
        new = Axis(center, _orient(d), it)
        moved = np.linalg.norm(new.direction - axis.direction) + \
            np.linalg.norm(new.point - axis.point) / (1.0 + np.linalg.norm(axis.point))
        axis = new
        if moved < tol:
            break
    return Axis(axis.point, axis.direction, it)


def sd_report(cloud, center: CloudPoint, cyl_radius: float, inlier_dist: float,
              max_iter: int = 50) -> dict:
    """Scatterer density and dispersion inside a vertical cylinder.

    Density is the inlier count over ``z_extent * 2 * inlier_dist``; dispersion
    is the mean orthogonal distance of inliers to the robust axis.
    """
    if cyl_radius <= 0 or inlier_dist <= 0:
        raise InvalidArgument("cylinder radius and inlier distance must be > 0")
    xyz = _as_xyz(cloud)
    c = np.array([center.x, center.y, center.z])
    horiz = np.hypot(xyz[:, 0] - c[0], xyz[:, 1] - c[1])
    hood = xyz[horiz < cyl_radius]
    if len(hood) == 0:
        raise EmptyNeighborhood("no points inside the cylinder")
    axis = robust_principal_axis(hood, max_iter)
    dist = axis.distances(hood)
    inl = dist < inlier_dist
    if not inl.any():
        raise EmptyNeighborhood("no points close to the principal axis")
    z = hood[inl, 2]
    extent = float(z.max() - z.min())
    area = extent * 2.0 * inlier_dist
    s_de = float(inl.sum() / area) if area > 0 else float("inf")
    return {"s_de": s_de, "s_di": float(dist[inl].mean()), "n_neighborhood": int(len(hood)),
            "n_inliers": int(inl.sum()), "area": area,
            "axis_direction": axis.direction.tolist()}
