"""File formats: JSON configs and scenes, snapshot containers, CSV and XYZ.

Snapshot container layout (little endian)::

    bytes 0..7    magic b"TOMOSNP1"
    bytes 8..11   uint32 header length H
    bytes 12..    H bytes of UTF-8 JSON header:
                  {"n_pixels", "n_snapshots", "n_channels", "snr_db",
                   "seed", "pixels": [[row, col], ...], "noise_power": [...]}
    then          float32 pairs (re, im), array shape
                  (n_pixels, n_snapshots, n_channels) in C order

Numbers in CSV and XYZ files use 9 significant digits (``%.9g``).
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, InvalidArgument
from .simulate import Scatterer, SceneSpec, SnapshotStack

MAGIC = b"TOMOSNP1"
FLOAT_FMT = "%.9g"


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return FLOAT_FMT % float(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_xyz(path: Path, points: Iterable[Sequence[float]]) -> Path:
    """ASCII cloud: ``# x y z power`` header, one space-separated point per line."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write("# x y z power\n")
        for p in points:
            fh.write(" ".join(fmt(v) for v in p) + "\n")
    return path


def read_xyz(path: Path) -> np.ndarray:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and ln[0] != "#"]
    if not lines:
        return np.zeros((0, 4))
    data = np.loadtxt(lines, ndmin=2)
    if data.size == 0:
        return np.zeros((0, 4))
    if data.shape[1] == 3:
        data = np.hstack([data, np.ones((len(data), 1))])
    return data


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _json_float(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _parse_float(x) -> float:
    return float(x)


def write_snapshots(path: Path, stacks: dict) -> Path:
    """Write ``{(row, col): SnapshotStack}`` as a snapshot container."""
    if not stacks:
        raise InvalidArgument("no snapshot stacks to write")
    keys = sorted(stacks)
    first = stacks[keys[0]]
    shape = (len(keys), first.n_snapshots, first.n_channels)
    data = np.empty(shape, dtype=np.complex64)
    for i, k in enumerate(keys):
        if stacks[k].snapshots.shape != shape[1:]:
            raise InvalidArgument("all stacks must share one shape")
        data[i] = stacks[k].snapshots
    header = {
        "n_pixels": shape[0], "n_snapshots": shape[1], "n_channels": shape[2],
        "snr_db": _json_float(first.snr_db),
        "seed": [int(stacks[k].seed) for k in keys],
        "pixels": [list(map(int, k)) for k in keys],
        "noise_power": [float(stacks[k].noise_power) for k in keys],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(data.astype("<c8").tobytes())
    return path


def read_snapshots(path: Path) -> dict:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise InvalidArgument(f"{path} is not a snapshot container")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + hlen])
    shape = (header["n_pixels"], header["n_snapshots"], header["n_channels"])
    data = np.frombuffer(raw[12 + hlen:], dtype="<c8").reshape(shape)
    snr = _parse_float(header["snr_db"])
    out = {}
    for i, key in enumerate(header["pixels"]):
        out[tuple(key)] = SnapshotStack(data[i].astype(complex), snr, header["seed"][i],
                                        header["noise_power"][i])
    return out


def scene_to_dict(scene: SceneSpec) -> dict:
    return {
        "max_scatterers": scene.max_scatterers,
        "pixels": [{"range": r, "azimuth": a,
                    "scatterers": [{"elevation_m": s.elevation_m, "power": s.power}
                                   for s in scene.pixels[(r, a)]]}
                   for r, a in scene.keys()],
    }


def scene_from_dict(data: dict) -> SceneSpec:
    try:
        pixels = {(int(p["range"]), int(p["azimuth"])):
                  [Scatterer(float(s["elevation_m"]), float(s.get("power", 1.0)))
                   for s in p["scatterers"]] for p in data["pixels"]}
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed scene file: {exc}") from exc
    return SceneSpec(pixels, int(data.get("max_scatterers", 3)))


def save_json(path: Path, data: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def load_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
