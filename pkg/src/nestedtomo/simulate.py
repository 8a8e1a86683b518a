"""Synthetic snapshot generation under the uncorrelated-scatterer model."""
from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgument
from .model import ImagingGeometry, steering_vectors

log = logging.getLogger(__name__)


class AmplitudeMode(str, Enum):
    STOCHASTIC = "stochastic"
    DETERMINISTIC = "deterministic"


@dataclass(frozen=True)
class Scatterer:
    elevation_m: float
    power: float = 1.0

    def __post_init__(self):
        if not self.power >= 0:
            raise InvalidArgument(f"scatterer power must be >= 0, got {self.power}")


@dataclass(frozen=True, eq=False)
class SnapshotStack:
    """``n_snapshots x M`` complex samples of one homogeneous neighborhood."""

    snapshots: np.ndarray
    snr_db: float = math.inf
    seed: int = 0
    noise_power: float = 0.0

    def __post_init__(self):
        y = np.atleast_2d(np.asarray(self.snapshots, dtype=complex))
        object.__setattr__(self, "snapshots", y)
        if y.shape[0] < 1:
            raise InvalidArgument("snapshot stack is empty")
        if not np.all(np.isfinite(y)):
            raise InvalidArgument("snapshot stack has non-finite entries")

    @property
    def n_snapshots(self) -> int:
        return self.snapshots.shape[0]

    @property
    def n_channels(self) -> int:
        return self.snapshots.shape[1]

    def subset(self, mask) -> "SnapshotStack":
        return SnapshotStack(self.snapshots[np.asarray(mask)], self.snr_db, self.seed,
                             self.noise_power)


def noise_power_for(total_signal_power: float, snr_db: float) -> float:
    if math.isnan(snr_db):
        raise InvalidArgument("SNR is NaN")
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return total_signal_power / 10.0 ** (snr_db / 10.0)


def complex_normal(rng: np.random.Generator, shape, variance=1.0) -> np.ndarray:
    """Circular complex Gaussian samples with ``E|z|^2 = variance``."""
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def simulate_snapshots(geometry: ImagingGeometry, scatterers: Sequence[Scatterer],
                       n_snapshots: int, snr_db: float = math.inf, seed: int = 0,
                       amplitude_mode: AmplitudeMode | str = AmplitudeMode.STOCHASTIC
                       ) -> SnapshotStack:
    """Draw ``n_snapshots`` realizations of ``y = Phi gamma + noise``.

    In stochastic mode each amplitude is redrawn per snapshot with variance
    ``p_k``, so the population covariance is ``Phi diag(p) Phi^H + sigma^2 I``.
    ``sigma^2`` is chosen so that ``sum(p) / sigma^2`` equals the requested SNR.
    """
    if n_snapshots < 1:
        raise InvalidArgument(f"n_snapshots must be >= 1, got {n_snapshots}")
    mode = AmplitudeMode(amplitude_mode)
    rng = np.random.default_rng(seed)
    m = geometry.element_count
    powers = np.array([s.power for s in scatterers], dtype=float)
    sigma2 = noise_power_for(float(powers.sum()), float(snr_db))
    y = np.zeros((n_snapshots, m), dtype=complex)
    if len(scatterers):
        a = steering_vectors(geometry, [s.elevation_m for s in scatterers])
        if mode is AmplitudeMode.STOCHASTIC:
            amps = complex_normal(rng, (n_snapshots, len(scatterers)), powers)
        else:
            amps = np.broadcast_to(np.sqrt(powers), (n_snapshots, len(scatterers)))
        y += amps @ a.T
    if sigma2 > 0:
        y += complex_normal(rng, (n_snapshots, m), sigma2)
    return SnapshotStack(y, float(snr_db), int(seed), sigma2)


def derive_seed(master: int, *keys) -> int:
    """Stable 64-bit seed from a master seed and integer or string keys."""
    words = [int(master) & 0xFFFFFFFFFFFFFFFF]
    for k in keys:
        words.append(zlib.crc32(k.encode()) if isinstance(k, str) else int(k))
    ss = np.random.SeedSequence(words[0], spawn_key=tuple(words[1:]))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class SceneSpec:
    """Scatterers per ``(range, azimuth)`` pixel."""

    pixels: dict = field(default_factory=dict)
    max_scatterers: int = 3

    def __post_init__(self):
        for key, scats in self.pixels.items():
            if len(scats) > self.max_scatterers:
                raise InvalidArgument(f"pixel {key} has {len(scats)} scatterers "
                                      f"(max {self.max_scatterers})")

    def __len__(self) -> int:
        return len(self.pixels)

    def keys(self) -> list:
        return sorted(self.pixels)

    def n_points(self) -> int:
        return sum(len(v) for v in self.pixels.values())


def simulate_scene(geometry: ImagingGeometry, scene: SceneSpec, window: int = 11,
                   snr_db: float = 20.0, seed: int = 0) -> dict:
    """Independent ``window**2``-snapshot stacks for every pixel of ``scene``.

    Each pixel's seed depends only on ``(seed, row, col)``, so results do
    not depend on iteration order.
    """
    if len(scene) == 0:
        raise InvalidArgument("scene has no pixels")
    if window < 1 or window % 2 == 0:
        raise InvalidArgument(f"window must be a positive odd integer, got {window}")
    if window * window < geometry.element_count:
        log.warning("window %d gives fewer snapshots than channels (%d)", window,
                    geometry.element_count)
    out = {}
    for key in scene.keys():
        r, c = key
        out[key] = simulate_snapshots(geometry, scene.pixels[key], window * window, snr_db,
                                      derive_seed(seed, r, c))
    return out


def facade_scene(resolution_m: float, n_range: int = 40, n_azimuth: int = 40,
                 seed: int = 7) -> SceneSpec:
    """Urban building template with 1600 pixels for the default 40 x 40 size.

    A ground layer (elevation near ``-ground_offset``) is overlaid in the
    pixels where a façade or roof lays over it. Three blocks of different
    heights produce layover pairs whose separation spans roughly
    ``0.3 .. 1.4`` resolution cells; the remaining pixels have a single
    scatterer. Unit power everywhere.
    """
    rng = np.random.default_rng(seed)
    res = resolution_m
    ground = -1.0 * res
    pixels = {}
    # (azimuth start, azimuth end, separation at near edge, at far edge)
    blocks = [(2, 13, 0.35, 0.9), (15, 27, 0.6, 1.3), (29, 38, 0.3, 1.1)]
    for r in range(n_range):
        frac = r / max(n_range - 1, 1)
        for a in range(n_azimuth):
            jitter = 0.02 * res * rng.standard_normal()
            scats = [Scatterer(ground + jitter, 1.0)]
            for a0, a1, near, far in blocks:
                if a0 <= a <= a1 and 4 <= r <= n_range - 5:
                    sep = (near + (far - near) * frac) * res
                    scats.append(Scatterer(ground + jitter + sep, 1.0))
            pixels[(r, a)] = scats
    return SceneSpec(pixels, max_scatterers=2)
