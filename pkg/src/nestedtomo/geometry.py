"""Baseline array layouts and their difference co-arrays.

Positions are stored as integer multiples of the unit spacing ``d``.
Coprime layouts are 0-based and nested layouts 1-based, exactly as the
generating set formulas produce them; :func:`shift_to_one` gives the
rendering whose smallest element sits at ``1 d``.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from math import gcd
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgument


class ArrayKind(str, Enum):
    UNIFORM = "uniform"
    COPRIME = "coprime"
    NESTED = "nested"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ArrayConfig:
    """A linear baseline layout.

    Attributes:
        kind: how the layout was generated.
        m1, m2: subarray sizes (0 when not applicable).
        unit_spacing_m: the unit spacing ``d`` in meters.
        positions: sorted unique element positions in units of ``d``.
    """

    kind: ArrayKind
    m1: int
    m2: int
    unit_spacing_m: float
    positions: tuple[int, ...]

    def __post_init__(self):
        pos = tuple(int(p) for p in self.positions)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "kind", ArrayKind(self.kind))
        if not self.unit_spacing_m > 0:
            raise InvalidArgument(f"unit_spacing_m must be > 0, got {self.unit_spacing_m}")
        if len(pos) < 1:
            raise InvalidArgument("array needs at least one element")
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise InvalidArgument(f"positions must be strictly increasing: {pos}")
        if min(pos) < 0:
            raise InvalidArgument("positions must be non-negative")
        if self.kind is ArrayKind.UNIFORM:
            if pos != tuple(range(pos[0], pos[0] + len(pos))):
                raise InvalidArgument("uniform array positions must be consecutive")
        elif self.kind is ArrayKind.COPRIME:
            if gcd(self.m1, self.m2) != 1 or len(pos) != self.m1 + self.m2 - 1:
                raise InvalidArgument("inconsistent coprime array")
        elif self.kind is ArrayKind.NESTED:
            if len(pos) != self.m1 + self.m2:
                raise InvalidArgument("inconsistent nested array")

    @property
    def element_count(self) -> int:
        return len(self.positions)

    @property
    def baselines_m(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float) * self.unit_spacing_m

    @property
    def aperture_units(self) -> int:
        return self.positions[-1] - self.positions[0]

    @property
    def aperture_m(self) -> float:
        return self.aperture_units * self.unit_spacing_m

    def shifted(self, offset: int) -> "ArrayConfig":
        return ArrayConfig(self.kind, self.m1, self.m2, self.unit_spacing_m,
                           tuple(p + offset for p in self.positions))

    def label(self) -> str:
        if self.kind is ArrayKind.UNIFORM:
            return f"uniform{self.element_count}"
        if self.kind in (ArrayKind.COPRIME, ArrayKind.NESTED):
            return f"{self.kind.value}{self.m1}x{self.m2}"
        return "custom_" + "-".join(map(str, self.positions))


def shift_to_one(config: ArrayConfig) -> tuple[int, ...]:
    """Positions shifted so that the first element sits at ``1 d``."""
    return tuple(p - config.positions[0] + 1 for p in config.positions)


def uniform_array(element_count: int, unit_spacing_m: float) -> ArrayConfig:
    if element_count < 2:
        raise InvalidArgument(f"uniform array needs >= 2 elements, got {element_count}")
    return ArrayConfig(ArrayKind.UNIFORM, 0, element_count, unit_spacing_m,
                       tuple(range(element_count)))


def coprime_array(m1: int, m2: int, unit_spacing_m: float) -> ArrayConfig:
    """Union of ``{m*m2 : 0 <= m < m1}`` and ``{n*m1 : 0 <= n < m2}``."""
    if m1 < 2 or m2 < 2:
        raise InvalidArgument(f"coprime subarray sizes must be >= 2, got ({m1}, {m2})")
    g = gcd(m1, m2)
    if g != 1:
        raise InvalidArgument(f"({m1}, {m2}) are not coprime: gcd = {g}")
    pos = {m * m2 for m in range(m1)} | {n * m1 for n in range(m2)}
    return ArrayConfig(ArrayKind.COPRIME, m1, m2, unit_spacing_m, tuple(sorted(pos)))


def nested_array(m1: int, m2: int, unit_spacing_m: float) -> ArrayConfig:
    """Dense ``{1..m1}`` subarray followed by a sparse one at pitch ``m1 + 1``."""
    if m1 < 1 or m2 < 1:
        raise InvalidArgument(f"nested subarray sizes must be >= 1, got ({m1}, {m2})")
    pos = list(range(1, m1 + 1)) + [n * (m1 + 1) for n in range(1, m2 + 1)]
    return ArrayConfig(ArrayKind.NESTED, m1, m2, unit_spacing_m, tuple(pos))


def custom_array(positions: Iterable[int], unit_spacing_m: float) -> ArrayConfig:
    return ArrayConfig(ArrayKind.CUSTOM, 0, 0, unit_spacing_m, tuple(positions))


@dataclass(frozen=True)
class CoArray:
    """Signed lag set of an array with multiplicities and holes."""

    lags: tuple[int, ...]
    multiplicity: dict = field(compare=True)
    holes: tuple[int, ...]
    element_count: int
    positions: tuple[int, ...] = field(default=(), compare=False)

    @property
    def dof(self) -> int:
        return len(self.lags)

    @property
    def aperture_units(self) -> int:
        return self.lags[-1] - self.lags[0]

    def index_of(self, lag: int) -> int:
        return self.lags.index(lag)


def pairwise_lags(positions: Sequence[int]) -> np.ndarray:
    """All ``M**2`` differences ``p_i - p_j`` in column-stacking order.

    Entry ``i + j*M`` holds ``p_i - p_j``, matching ``vec(C)[i + j*M] = C[i, j]``.
    """
    p = np.asarray(positions, dtype=np.int64)
    return (p[:, None] - p[None, :]).ravel(order="F")


def difference_coarray(config: ArrayConfig | Sequence[int]) -> CoArray:
    positions = config.positions if isinstance(config, ArrayConfig) else tuple(config)
    counts = Counter(int(g) for g in pairwise_lags(positions))
    lags = tuple(sorted(counts))
    present = set(lags)
    holes = tuple(g for g in range(lags[0] + 1, lags[-1]) if g not in present)
    return CoArray(lags=lags, multiplicity={g: counts[g] for g in lags},
                   holes=holes, element_count=len(positions),
                   positions=tuple(int(p) for p in positions))


def describe(config: ArrayConfig) -> dict:
    """Summary row used by ``array inspect``."""
    co = difference_coarray(config)
    return {
        "label": config.label(),
        "kind": config.kind.value,
        "elements": config.element_count,
        "positions": list(config.positions),
        "positions_from_1": list(shift_to_one(config)),
        "lags": list(co.lags),
        "holes": list(co.holes),
        "dof": co.dof,
        "aperture_units": config.aperture_units,
        "coarray_aperture_units": co.aperture_units,
    }


def array_from_dict(spec: dict) -> ArrayConfig:
    """Build an array from a config descriptor such as ``{"kind": "nested", "m1": 4, "m2": 2}``."""
    kind = ArrayKind(spec["kind"])
    d = float(spec.get("unit_spacing_m", spec.get("d", 0.08)))
    if kind is ArrayKind.UNIFORM:
        return uniform_array(int(spec["elements"]), d)
    if kind is ArrayKind.COPRIME:
        return coprime_array(int(spec["m1"]), int(spec["m2"]), d)
    if kind is ArrayKind.NESTED:
        return nested_array(int(spec["m1"]), int(spec["m2"]), d)
    return custom_array(spec["positions"], d)


def array_to_dict(config: ArrayConfig) -> dict:
    out = {"kind": config.kind.value, "unit_spacing_m": config.unit_spacing_m}
    if config.kind is ArrayKind.UNIFORM:
        out["elements"] = config.element_count
    elif config.kind is ArrayKind.CUSTOM:
        out["positions"] = list(config.positions)
    else:
        out["m1"], out["m2"] = config.m1, config.m2
    return out
