"""Experiment orchestration: Monte Carlo sweeps, scenes and output files."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from . import io
from .covariance import robust_pipeline, sample_covariance, select_adaptive_window, \
    vectorize_and_select
from .errors import ConfigError, InvalidArgument
from .geometry import ArrayConfig, ArrayKind, array_from_dict, difference_coarray
from .metrics import TrialRecord, rmse_report
from .model import ElevationGrid, ImagingGeometry, build_steering_matrix, coarray_manifold, \
    rayleigh_resolution, steering_vectors, wavelength_from_frequency
from .recover import ScattererEstimate, extract_peaks, solve_coarray_omp, solve_direct_l1, \
    solve_direct_l1_batch
from .simulate import Scatterer, SceneSpec, complex_normal, derive_seed, facade_scene, \
    noise_power_for, simulate_scene, simulate_snapshots

log = logging.getLogger(__name__)

STATED_RESOLUTION_M = 8.1238


class ExperimentKind(str, Enum):
    SPACING_SWEEP = "spacing_sweep"
    SNR_SWEEP = "snr_sweep"
    POINTCLOUD_SCENE = "pointcloud_scene"
    SINGLE_PIXEL = "single_pixel"


REFERENCE_ARRAYS = (
    {"name": "uniform", "kind": "uniform", "elements": 10},
    {"name": "coprime3x4", "kind": "coprime", "m1": 3, "m2": 4},
    {"name": "nested4x2", "kind": "nested", "m1": 4, "m2": 2},
    {"name": "nested3x3", "kind": "nested", "m1": 3, "m2": 3},
)


@dataclass
class GridSettings:
    spacing_frac: float = 1 / 20
    half_extent_res: float = 3.0


@dataclass
class SolverSettings:
    uniform_method: str = "direct_l1"
    covariance: str = "plain"
    alpha_frac: float = 0.1
    l1_max_iter: int = 3000
    l1_tol: float = 1e-6
    l1_debias: bool = False
    residual_tol: float | None = None


@dataclass
class ExperimentConfig:
    kind: ExperimentKind = ExperimentKind.SPACING_SWEEP
    fc_hz: float = 14.25e9
    slant_range_m: float = 1220.0
    unit_spacing_m: float = 0.08
    reference_aperture_units: int = 9
    arrays: list = field(default_factory=lambda: [dict(a) for a in REFERENCE_ARRAYS])
    grid: GridSettings = field(default_factory=GridSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    spacings_rho: list = field(default_factory=lambda: [round(0.01 + 0.033 * i, 3) for i in range(31)])
    snrs_db: list = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0])
    snr_db: float = 20.0
    spacing_rho: float = 0.8
    trials: int = 100
    window: int = 11
    seed: int = 0
    out_dir: str = "out"
    scene_size: list = field(default_factory=lambda: [40, 40])
    scene_file: str | None = None
    scatterers: list = field(default_factory=list)

    def __post_init__(self):
        self.kind = ExperimentKind(self.kind)
        if isinstance(self.grid, dict):
            self.grid = GridSettings(**self.grid)
        if isinstance(self.solver, dict):
            self.solver = SolverSettings(**self.solver)
        self.validate()

    def validate(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError(f"window must be a positive odd integer, got {self.window}")
        for name, vals in (("spacings_rho", self.spacings_rho), ("snrs_db", self.snrs_db)):
            if not vals:
                raise ConfigError(f"{name} is empty")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ConfigError(f"{name} must be strictly increasing")
        if not self.arrays:
            raise ConfigError("no arrays configured")
        for a in self.arrays:
            resolve_array(a, self.unit_spacing_m)
        names = [array_name(a) for a in self.arrays]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate array names: {names}")
        if self.solver.uniform_method not in ("direct_l1", "coarray_omp"):
            raise ConfigError(f"unknown uniform_method {self.solver.uniform_method!r}")
        if self.solver.covariance not in ("plain", "robust", "adaptive"):
            raise ConfigError(f"unknown covariance pipeline {self.solver.covariance!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["kind"] = self.kind.value
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @property
    def wavelength_m(self) -> float:
        return wavelength_from_frequency(self.fc_hz)

    @property
    def resolution_m(self) -> float:
        """Rayleigh resolution of the reference aperture; the sweep's length unit."""
        return rayleigh_resolution(self.wavelength_m, self.slant_range_m,
                                   self.reference_aperture_units * self.unit_spacing_m)


def array_name(spec: dict) -> str:
    if "name" in spec:
        return str(spec["name"])
    return resolve_array(spec, float(spec.get("unit_spacing_m", 0.08))).label()


def _coprime_aperture(m1: int, m2: int) -> int:
    return max((m1 - 1) * m2, (m2 - 1) * m1)


def coprime_pair_for_budget(m_sum: int) -> tuple[int, int]:
    """Coprime ``(M1, M2)``, both >= 2, with ``M1 + M2 = m_sum``; largest aperture wins."""
    pairs = [(m1, m_sum - m1) for m1 in range(2, m_sum - 1) if math.gcd(m1, m_sum - m1) == 1]
    if not pairs:
        raise ConfigError(f"no coprime pair (M1, M2) with M1 + M2 = {m_sum}; a coprime array "
                          f"needs two coprime factors >= 2")
    return max(pairs, key=lambda p: (_coprime_aperture(*p), -p[0]))


def resolve_array(spec: dict, unit_spacing_m: float) -> ArrayConfig:
    """Build the array described by ``spec``, turning generator errors into config errors.

    A coprime descriptor may give a budget instead of ``m1``/``m2``: ``elements``
    (physical count ``M1 + M2 - 1``) or ``m_sum`` (``M1 + M2``).
    """
    s = dict(spec)
    s.setdefault("unit_spacing_m", unit_spacing_m)
    if s.get("kind") == "coprime" and "m1" not in s:
        if "m_sum" in s:
            s["m1"], s["m2"] = coprime_pair_for_budget(int(s["m_sum"]))
        elif "elements" in s:
            s["m1"], s["m2"] = coprime_pair_for_budget(int(s["elements"]) + 1)
    try:
        return array_from_dict(s)
    except (InvalidArgument, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot build array {spec}: {exc}") from exc


class ArrayMethod:
    """One array and its reconstruction pipeline on a fixed grid."""

    def __init__(self, name: str, array: ArrayConfig, config: ExperimentConfig):
        self.name = name
        self.array = array
        self.config = config
        self.geometry = ImagingGeometry(config.wavelength_m, config.slant_range_m, array)
        self.grid = ElevationGrid.centered(config.resolution_m, config.grid.spacing_frac,
                                           config.grid.half_extent_res)
        self.phi = build_steering_matrix(self.geometry, self.grid)
        self.coarray = difference_coarray(array)
        self.manifold = coarray_manifold(self.phi, self.coarray)
        self.direct = (array.kind is ArrayKind.UNIFORM
                       and config.solver.uniform_method == "direct_l1")

    @property
    def method(self) -> str:
        return "direct_l1" if self.direct else "coarray_omp"

    def covariance(self, snapshots: np.ndarray):
        if self.config.solver.covariance == "plain":
            return sample_covariance(snapshots, 0.0)
        return robust_pipeline(snapshots)

    def reconstruct(self, snapshots: np.ndarray, k: int, target: int | None = None):
        """Profile for one pixel; ``target`` picks the single look for the direct path."""
        s = self.config.solver
        if self.direct:
            y = snapshots[snapshots.shape[0] // 2 if target is None else target]
            alpha = s.alpha_frac * 2.0 * float(np.max(np.abs(self.phi.entries.conj().T @ y)))
            return solve_direct_l1(y, self.phi, alpha or 1.0, s.l1_max_iter, s.l1_tol, s.l1_debias)
        z = vectorize_and_select(self.covariance(snapshots), self.coarray)
        if s.residual_tol is not None:
            return solve_coarray_omp(z, self.manifold, residual_tol=s.residual_tol)
        return solve_coarray_omp(z, self.manifold, sparsity=k)

    def estimate(self, snapshots: np.ndarray, k: int, target: int | None = None
                 ) -> list[ScattererEstimate]:
        result = self.reconstruct(snapshots, k, target)
        return pad_estimates(list(extract_peaks(result, self.grid, k)), k)

    def estimate_direct_batch(self, looks: np.ndarray, ks: Sequence[int]
                              ) -> list[list[ScattererEstimate]]:
        """Direct-path estimates for many single looks (rows of ``looks``) in one solve."""
        s = self.config.solver
        ys = np.asarray(looks).T
        alphas = s.alpha_frac * 2.0 * np.abs(self.phi.entries.conj().T @ ys).max(axis=0)
        results = solve_direct_l1_batch(ys, self.phi, np.where(alphas > 0, alphas, 1.0),
                                        s.l1_max_iter, s.l1_tol, s.l1_debias)
        return [pad_estimates(list(extract_peaks(r, self.grid, k)), k)
                for r, k in zip(results, ks)]


def pad_estimates(peaks: list[ScattererEstimate], k: int) -> list[ScattererEstimate]:
    """Bring a peak list to exactly ``k`` entries.

    A missing scatterer is represented by splitting the strongest peak into
    equal-power copies at its position; an empty list becomes ``k`` zero-power
    estimates at elevation 0.
    """
    if len(peaks) >= k:
        return peaks[:k]
    if not peaks:
        return [ScattererEstimate(0.0, 0.0) for _ in range(k)]
    peaks = list(peaks)
    while len(peaks) < k:
        i = max(range(len(peaks)), key=lambda j: peaks[j].power)
        p = peaks[i]
        half = ScattererEstimate(p.elevation_m, p.power / 2.0)
        peaks[i:i + 1] = [half, half]
    return sorted(peaks, key=lambda p: p.elevation_m)


def build_methods(config: ExperimentConfig) -> list[ArrayMethod]:
    return [ArrayMethod(array_name(a), resolve_array(a, config.unit_spacing_m), config)
            for a in config.arrays]


def log_resolution(config: ExperimentConfig):
    rho = config.resolution_m
    log.info("Rayleigh resolution of %dd aperture: %.4f m (reference text value %.4f m)",
             config.reference_aperture_units, rho, STATED_RESOLUTION_M)
    return rho


def pair_truth(config: ExperimentConfig, spacing_rho: float, rng: np.random.Generator
               ) -> list[Scatterer]:
    """Two unit-power scatterers ``spacing_rho`` apart with a random sub-cell offset."""
    rho = config.resolution_m
    step = config.grid.spacing_frac * rho
    center = rng.uniform(-0.5, 0.5) * step
    half = 0.5 * spacing_rho * rho
    return [Scatterer(center - half, 1.0), Scatterer(center + half, 1.0)]


def simulate_pair_trial(method: ArrayMethod, config: ExperimentConfig, point: int, trial: int,
                        spacing_rho: float, snr_db: float):
    truth_rng = np.random.default_rng(derive_seed(config.seed, point, trial))
    truth = pair_truth(config, spacing_rho, truth_rng)
    seed = derive_seed(config.seed, point, trial, method.name)
    stack = simulate_snapshots(method.geometry, truth, config.window ** 2, snr_db, seed)
    return truth, stack


def _record(truth, est, seed=0) -> TrialRecord:
    return TrialRecord(tuple(ScattererEstimate(s.elevation_m, s.power) for s in truth),
                       tuple(est), seed)


def run_pair_trial(method: ArrayMethod, config: ExperimentConfig, point: int, trial: int,
                   spacing_rho: float, snr_db: float) -> TrialRecord:
    truth, stack = simulate_pair_trial(method, config, point, trial, spacing_rho, snr_db)
    return _record(truth, method.estimate(stack.snapshots, len(truth)), stack.seed)


def run_pair_trials(method: ArrayMethod, config: ExperimentConfig, point: int,
                    spacing_rho: float, snr_db: float, threads: int = 1) -> list[TrialRecord]:
    """All trials of one sweep point; the direct path solves them as one batch."""
    if not method.direct:
        return _map(lambda t: run_pair_trial(method, config, point, t, spacing_rho, snr_db),
                    range(config.trials), threads)
    sims = [simulate_pair_trial(method, config, point, t, spacing_rho, snr_db)
            for t in range(config.trials)]
    looks = np.array([st.snapshots[st.n_snapshots // 2] for _, st in sims])
    ests = method.estimate_direct_batch(looks, [len(tr) for tr, _ in sims])
    return [_record(tr, e, st.seed) for (tr, st), e in zip(sims, ests)]


def _map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def sweep(config: ExperimentConfig, threads: int = 1) -> dict:
    """Monte Carlo RMSE for every sweep point and array.

    Returns ``{"axis": name, "points": [...], "rmse": {array: [(h, a), ...]}}``
    with ``rmse_h`` in meters and ``rmse_a`` in power units.
    """
    log_resolution(config)
    methods = build_methods(config)
    if config.kind is ExperimentKind.SPACING_SWEEP:
        axis, points = "spacing_rho", list(config.spacings_rho)
        setting = lambda v: (v, config.snr_db)  # noqa: E731
    elif config.kind is ExperimentKind.SNR_SWEEP:
        axis, points = "snr_db", list(config.snrs_db)
        setting = lambda v: (config.spacing_rho, v)  # noqa: E731
    else:
        raise ConfigError(f"{config.kind.value} is not a sweep")
    rmse = {m.name: [] for m in methods}
    for pi, value in enumerate(points):
        spacing, snr = setting(value)
        for m in methods:
            records = run_pair_trials(m, config, pi, spacing, snr, threads)
            r = rmse_report(records)
            rmse[m.name].append((r["rmse_h"], r["rmse_a"]))
        log.info("%s=%g done", axis, value)
    return {"axis": axis, "points": points, "rmse": rmse,
            "methods": {m.name: m.method for m in methods}}


def load_scene(config: ExperimentConfig) -> SceneSpec:
    if config.scene_file:
        return io.scene_from_dict(io.load_json(config.scene_file))
    nr, na = config.scene_size
    return facade_scene(config.resolution_m, nr, na)


def _single_look_field(geometry: ImagingGeometry, scene: SceneSpec, snr_db: float, seed: int):
    """One look per pixel, for the spatial adaptive-window pipeline."""
    keys = scene.keys()
    rows = 1 + max(k[0] for k in keys)
    cols = 1 + max(k[1] for k in keys)
    field_ = np.zeros((rows, cols, geometry.element_count), dtype=complex)
    for key in keys:
        st = simulate_snapshots(geometry, scene.pixels[key], 1, snr_db,
                                derive_seed(seed, key[0], key[1]))
        field_[key] = st.snapshots[0]
    return field_


def _window_order(selection):
    """Window pixels with the 3 x 3 block around the target first."""
    l = selection.window_size
    i0, j0 = selection.chosen_offset
    idx = [(i, j) for i in range(l) for j in range(l)]
    near = [p for p in idx if abs(p[0] - i0) <= 1 and abs(p[1] - j0) <= 1]
    far = [p for p in idx if p not in near]
    return [i * l + j for i, j in near + far]


def run_scene(config: ExperimentConfig, threads: int = 1) -> dict:
    """Reconstruct every pixel of the scene with every array.

    Returns truth cloud, per-array estimated clouds and RMSE figures.
    """
    log_resolution(config)
    scene = load_scene(config)
    methods = build_methods(config)
    keys = scene.keys()
    truth_cloud = [(r, a, s.elevation_m, s.power) for r, a in keys for s in scene.pixels[(r, a)]]
    out = {"truth": truth_cloud, "clouds": {}, "rmse": {}, "methods": {}}
    for m in methods:
        seed = derive_seed(config.seed, "scene", m.name)
        if config.solver.covariance == "adaptive":
            field_ = _single_look_field(m.geometry, scene, config.snr_db, seed)
            l = config.window

            def solve(key, m=m, field_=field_, l=l):
                k = len(scene.pixels[key])
                if k == 0:
                    return []
                sel = select_adaptive_window(field_, key, l)
                r0, c0 = sel.origin
                block = field_[r0:r0 + l, c0:c0 + l].reshape(l * l, -1)[_window_order(sel)]
                if m.direct:
                    return m.estimate(block, k, target=0)
                cov = robust_pipeline(block)
                z = vectorize_and_select(cov, m.coarray)
                res = solve_coarray_omp(z, m.manifold, sparsity=k)
                return pad_estimates(list(extract_peaks(res, m.grid, k)), k)
        else:
            stacks = simulate_scene(m.geometry, scene, config.window, config.snr_db, seed)

            def solve(key, m=m, stacks=stacks):
                k = len(scene.pixels[key])
                if k == 0:
                    return []
                return m.estimate(stacks[key].snapshots, k)

        if m.direct and config.solver.covariance != "adaptive":
            occupied = [key for key in keys if scene.pixels[key]]
            looks = np.array([stacks[key].snapshots[stacks[key].n_snapshots // 2]
                              for key in occupied])
            batch = dict(zip(occupied, m.estimate_direct_batch(
                looks, [len(scene.pixels[key]) for key in occupied]))) if occupied else {}
            estimates = [batch.get(key, []) for key in keys]
        else:
            estimates = _map(solve, keys, threads)
        records = [TrialRecord(tuple(ScattererEstimate(s.elevation_m, s.power)
                                     for s in scene.pixels[key]), tuple(est))
                   for key, est in zip(keys, estimates) if scene.pixels[key]]
        out["rmse"][m.name] = rmse_report(records)
        out["clouds"][m.name] = [(key[0], key[1], e.elevation_m, e.power)
                                 for key, est in zip(keys, estimates) for e in est
                                 if e.power > 0]
        out["methods"][m.name] = m.method
        log.info("scene %s: %s", m.name, out["rmse"][m.name])
    return out


def run_single_pixel(config: ExperimentConfig) -> dict:
    methods = build_methods(config)
    truth = [Scatterer(float(s["elevation_m"]), float(s.get("power", 1.0)))
             for s in config.scatterers]
    if not truth:
        truth = pair_truth(config, config.spacing_rho, np.random.default_rng(config.seed))
    out = {"truth": truth, "profiles": {}, "estimates": {}, "methods": {}}
    for m in methods:
        stack = simulate_snapshots(m.geometry, truth, config.window ** 2, config.snr_db,
                                   derive_seed(config.seed, 0, 0, m.name))
        res = m.reconstruct(stack.snapshots, len(truth))
        out["profiles"][m.name] = (m.grid.samples_m, res.powers())
        out["estimates"][m.name] = pad_estimates(list(extract_peaks(res, m.grid, len(truth))),
                                                 len(truth))
        out["methods"][m.name] = m.method
    return out


def emit_outputs(records: dict, kind: ExperimentKind | str, out_dir: Path) -> list[Path]:
    """Write CSV / XYZ / summary files for a finished run; returns the paths."""
    kind = ExperimentKind(kind)
    if not records:
        raise OSError("refusing to emit outputs for empty records")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    paths = []
    if kind in (ExperimentKind.SPACING_SWEEP, ExperimentKind.SNR_SWEEP):
        names = list(records["rmse"])
        header = [records["axis"]]
        for n in names:
            header += [f"{n}_rmse_h", f"{n}_rmse_a"]
        rows = []
        for i, v in enumerate(records["points"]):
            row = [float(v)]
            for n in names:
                row += list(records["rmse"][n][i])
            rows.append(row)
        fname = "rmse_vs_spacing.csv" if kind is ExperimentKind.SPACING_SWEEP else "rmse_vs_snr.csv"
        paths.append(io.write_csv(out_dir / fname, header, rows))
        summary = {"methods": records["methods"], "axis": records["axis"]}
    elif kind is ExperimentKind.POINTCLOUD_SCENE:
        paths.append(io.write_xyz(out_dir / "truth.xyz", records["truth"]))
        for n, cloud in records["clouds"].items():
            paths.append(io.write_xyz(out_dir / f"estimate_{n}.xyz", cloud))
        rows = [[n, r["rmse_h"], r["rmse_a"]] for n, r in records["rmse"].items()]
        paths.append(io.write_csv(out_dir / "scene_rmse.csv", ["array", "rmse_h", "rmse_a"], rows))
        summary = {"methods": records["methods"],
                   "rmse": {n: {k: float(io.fmt(v)) for k, v in r.items()}
                            for n, r in records["rmse"].items()}}
    else:
        rows = []
        for n, (s, p) in records["profiles"].items():
            rows += [[n, si, pi] for si, pi in zip(s, p)]
        paths.append(io.write_csv(out_dir / "profiles.csv", ["array", "elevation_m", "power"], rows))
        est_rows = [[n, e.elevation_m, e.power] for n, es in records["estimates"].items() for e in es]
        paths.append(io.write_csv(out_dir / "estimates.csv", ["array", "elevation_m", "power"],
                                  est_rows))
        summary = {"methods": records["methods"]}
    paths.append(io.save_json(out_dir / "summary.json", summary))
    return paths


def write_manifest(config: ExperimentConfig, paths: Sequence[Path], out_dir: Path,
                   duration_s: float) -> Path:
    manifest = {
        "config": config.to_dict(),
        "seed": config.seed,
        "tool_version": __version__,
        "outputs": {Path(p).name: io.sha256_file(p) for p in paths},
        "duration_s": duration_s,
    }
    return io.save_json(Path(out_dir) / "manifest.json", manifest)


def run_experiment(config: ExperimentConfig, threads: int = 1, out_dir: Path | None = None
                   ) -> tuple[dict, list[Path]]:
    """Run ``config`` end to end and write outputs plus ``manifest.json``."""
    start = time.perf_counter()
    out_dir = Path(out_dir or config.out_dir)
    if config.kind in (ExperimentKind.SPACING_SWEEP, ExperimentKind.SNR_SWEEP):
        records = sweep(config, threads)
    elif config.kind is ExperimentKind.POINTCLOUD_SCENE:
        records = run_scene(config, threads)
    else:
        records = run_single_pixel(config)
    paths = emit_outputs(records, config.kind, out_dir)
    manifest = write_manifest(config, paths, out_dir, time.perf_counter() - start)
    return records, paths + [manifest]
