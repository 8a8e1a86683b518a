"""TomoSAR forward model: steering matrices and co-array manifolds."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .geometry import ArrayConfig, CoArray, difference_coarray, pairwise_lags

SPEED_OF_LIGHT = 299_792_458.0


def wavelength_from_frequency(fc_hz: float) -> float:
    if not fc_hz > 0:
        raise InvalidArgument("carrier frequency must be > 0")
    return SPEED_OF_LIGHT / fc_hz


def rayleigh_resolution(wavelength_m: float, slant_range_m: float, aperture_m: float) -> float:
    """Elevation resolution ``lambda * r / (2 * aperture)``."""
    for name, v in (("wavelength_m", wavelength_m), ("slant_range_m", slant_range_m),
                    ("aperture_m", aperture_m)):
        if not v > 0:
            raise InvalidArgument(f"{name} must be > 0, got {v}")
    return wavelength_m * slant_range_m / (2.0 * aperture_m)


@dataclass(frozen=True)
class ImagingGeometry:
    wavelength_m: float
    slant_range_m: float
    array: ArrayConfig

    def __post_init__(self):
        if not self.wavelength_m > 0 or not self.slant_range_m > 0:
            raise InvalidArgument("wavelength and slant range must be > 0")

    @property
    def baselines_m(self) -> np.ndarray:
        return self.array.baselines_m

    @property
    def element_count(self) -> int:
        return self.array.element_count

    @property
    def phase_scale(self) -> float:
        """Radians per (meter of baseline x meter of elevation)."""
        return 4.0 * np.pi / (self.wavelength_m * self.slant_range_m)

    def elevation_frequencies(self) -> np.ndarray:
        return -2.0 * self.baselines_m / (self.wavelength_m * self.slant_range_m)

    def resolution(self) -> float:
        return rayleigh_resolution(self.wavelength_m, self.slant_range_m, self.array.aperture_m)


@dataclass(frozen=True, eq=False)
class ElevationGrid:
    samples_m: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples_m, dtype=float)
        s.setflags(write=False)
        object.__setattr__(self, "samples_m", s)
        if s.ndim != 1 or s.size < 2:
            raise InvalidArgument("grid needs at least 2 samples")
        steps = np.diff(s)
        if np.any(steps <= 0):
            raise InvalidArgument("grid must be strictly increasing")
        if np.max(np.abs(steps - steps[0])) > 1e-12 * max(abs(steps[0]), np.max(np.abs(s))):
            raise InvalidArgument("grid must be uniformly spaced")

    @property
    def spacing_m(self) -> float:
        return float(self.samples_m[1] - self.samples_m[0])

    def __len__(self) -> int:
        return self.samples_m.size

    def nearest_index(self, elevation_m: float) -> int:
        return int(np.argmin(np.abs(self.samples_m - elevation_m)))

    @classmethod
    def centered(cls, resolution_m: float, spacing_frac: float = 1 / 20,
                 half_extent_res: float = 3.0, center_m: float = 0.0) -> "ElevationGrid":
        """Grid with spacing ``spacing_frac * res`` spanning ``+-half_extent_res * res``."""
        step = spacing_frac * resolution_m
        n_half = int(round(half_extent_res / spacing_frac))
        return cls(center_m + step * np.arange(-n_half, n_half + 1))


@dataclass(frozen=True, eq=False)
class SteeringMatrix:
    entries: np.ndarray
    geometry: ImagingGeometry
    grid: ElevationGrid

    @property
    def shape(self):
        return self.entries.shape


def steering_vectors(geometry: ImagingGeometry, elevations_m) -> np.ndarray:
    s = np.atleast_1d(np.asarray(elevations_m, dtype=float))
    return np.exp(1j * geometry.phase_scale * np.outer(geometry.baselines_m, s))


def build_steering_matrix(geometry: ImagingGeometry, grid: ElevationGrid) -> SteeringMatrix:
    a = steering_vectors(geometry, grid.samples_m)
    a.setflags(write=False)
    return SteeringMatrix(a, geometry, grid)


def khatri_rao_manifold(phi: SteeringMatrix | np.ndarray) -> np.ndarray:
    """Columnwise ``conj(phi_l) kron phi_l``; row ``i + j*M`` equals ``phi_i * conj(phi_j)``."""
    a = phi.entries if isinstance(phi, SteeringMatrix) else np.asarray(phi)
    m, n = a.shape
    return (np.conj(a)[:, None, :] * a[None, :, :]).reshape(m * m, n)


@dataclass(frozen=True, eq=False)
class CoArrayManifold:
    """Deduplicated virtual-array dictionary.

    ``entries`` has one row per unique lag (ascending) and ``L + 1`` columns:
    the ``L`` grid atoms followed by the noise atom.
    """

    entries: np.ndarray
    lags: tuple[int, ...]

    @property
    def signal(self) -> np.ndarray:
        return self.entries[:, :-1]

    @property
    def noise_atom(self) -> np.ndarray:
        return self.entries[:, -1]

    @property
    def n_grid(self) -> int:
        return self.entries.shape[1] - 1

    def lag_index(self) -> dict:
        return {g: i for i, g in enumerate(self.lags)}

    def predict(self, powers, noise_power: float) -> np.ndarray:
        return self.entries @ np.append(np.asarray(powers, dtype=float), noise_power)


def lag_groups(positions, lags) -> list[np.ndarray]:
    """Indices into the column-stacked ``M**2`` vector, grouped per lag."""
    flat = pairwise_lags(positions)
    return [np.flatnonzero(flat == g) for g in lags]


def coarray_manifold(phi: SteeringMatrix, coarray: CoArray | None = None) -> CoArrayManifold:
    config = phi.geometry.array
    if coarray is None:
        coarray = difference_coarray(config)
    if coarray != difference_coarray(config):
        raise InvalidArgument("co-array does not belong to the steering matrix's array")
    b = khatri_rao_manifold(phi)
    groups = lag_groups(config.positions, coarray.lags)
    rows = np.stack([b[idx].mean(axis=0) for idx in groups])
    noise = np.zeros((len(coarray.lags), 1), dtype=complex)
    noise[coarray.lags.index(0), 0] = 1.0
    entries = np.hstack([rows, noise])
    entries.setflags(write=False)
    return CoArrayManifold(entries, coarray.lags)
