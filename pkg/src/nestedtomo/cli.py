"""Command line entry point (``nestedtomo``)."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .covariance import robust_pipeline, sample_covariance, vectorize_and_select
from .errors import TomoError
from .geometry import array_from_dict, describe
from .harness import REFERENCE_ARRAYS, ArrayMethod, ExperimentConfig, ExperimentKind, \
    load_scene, pad_estimates, resolve_array, run_experiment
from .metrics import CloudPoint, sd_report
from .model import ImagingGeometry
from .recover import extract_peaks, solve_coarray_omp, solve_direct_l1
from .simulate import Scatterer, SceneSpec, simulate_scene

log = logging.getLogger("nestedtomo")


def parse_array(text: str, d: float = 0.08) -> dict:
    """``uniform:10``, ``coprime:3x4``, ``nested:4x2`` or ``custom:1,2,3,4,8,11``."""
    kind, _, arg = text.partition(":")
    if kind == "uniform":
        return {"kind": kind, "elements": int(arg), "unit_spacing_m": d}
    if kind in ("coprime", "nested"):
        m1, m2 = (int(v) for v in arg.lower().split("x"))
        return {"kind": kind, "m1": m1, "m2": m2, "unit_spacing_m": d}
    if kind == "custom":
        return {"kind": kind, "positions": [int(v) for v in arg.split(",")], "unit_spacing_m": d}
    raise argparse.ArgumentTypeError(f"bad array spec {text!r}")


def _config(args) -> ExperimentConfig:
    data = io.load_json(args.config) if getattr(args, "config", None) else {}
    for key in ("seed", "trials"):
        if getattr(args, key, None) is not None:
            data[key] = getattr(args, key)
    if getattr(args, "out", None):
        data["out_dir"] = str(args.out)
    return data


def cmd_array_inspect(args):
    specs = [parse_array(a, args.d) for a in args.array] if args.array else \
        [dict(a, unit_spacing_m=args.d) for a in REFERENCE_ARRAYS]
    rows = []
    for spec in specs:
        info = describe(resolve_array(spec, args.d))
        rows.append(info)
        print(f"{info['label']}")
        print(f"  positions (d)     : {info['positions']}  (from 1: {info['positions_from_1']})")
        print(f"  lags              : {info['lags'][0]}..{info['lags'][-1]}  dof={info['dof']}")
        print(f"  holes             : {info['holes'] or 'none'}")
        print(f"  aperture          : {info['aperture_units']}d  "
              f"(co-array {info['coarray_aperture_units']}d)")
    if args.csv:
        io.write_csv(args.csv, ["label", "positions", "lags", "holes", "dof", "aperture_units"],
                     [[r["label"], " ".join(map(str, r["positions"])),
                       " ".join(map(str, r["lags"])), " ".join(map(str, r["holes"])), r["dof"],
                       r["aperture_units"]] for r in rows])
    if args.export_manifold:
        cfg = ExperimentConfig()
        out = Path(args.export_manifold)
        out.mkdir(parents=True, exist_ok=True)
        for spec, r in zip(specs, rows):
            m = ArrayMethod(r["label"], resolve_array(spec, args.d), cfg)
            ent = m.manifold.entries
            body = [[g, j, ent[i, j].real, ent[i, j].imag] for i, g in enumerate(m.manifold.lags)
                    for j in range(ent.shape[1])]
            io.write_csv(out / f"manifold_{r['label']}.csv", ["lag", "column", "re", "im"], body)
    return 0


def _single_scene(scatterers) -> SceneSpec:
    return SceneSpec({(0, 0): scatterers}, max_scatterers=max(3, len(scatterers)))


def _parse_scatterer(text: str) -> Scatterer:
    elev, _, power = text.partition(":")
    return Scatterer(float(elev), float(power) if power else 1.0)


def cmd_simulate(args):
    cfg = ExperimentConfig.from_dict(_config(args))
    if args.scene:
        scene = io.scene_from_dict(io.load_json(args.scene))
    elif args.scatterer:
        scene = _single_scene([_parse_scatterer(s) for s in args.scatterer])
    else:
        scene = load_scene(cfg)
    spec = parse_array(args.array, cfg.unit_spacing_m)
    geom = ImagingGeometry(cfg.wavelength_m, cfg.slant_range_m, resolve_array(spec, cfg.unit_spacing_m))
    snr = math.inf if args.snr == "inf" else float(args.snr if args.snr is not None else cfg.snr_db)
    stacks = simulate_scene(geom, scene, args.window or cfg.window, snr, cfg.seed)
    io.write_snapshots(args.output, stacks)
    print(f"wrote {len(stacks)} pixel stacks to {args.output}")
    return 0


def cmd_reconstruct(args):
    cfg_data = _config(args)
    cfg = ExperimentConfig.from_dict(cfg_data)
    spec = parse_array(args.array, cfg.unit_spacing_m)
    method = ArrayMethod(args.array, resolve_array(spec, cfg.unit_spacing_m), cfg)
    stacks = io.read_snapshots(args.snapshots)
    rows = []
    for key, stack in stacks.items():
        if args.solver == "direct_l1":
            y = stack.snapshots[stack.n_snapshots // 2]
            res = solve_direct_l1(y, method.phi)
        else:
            cov = (robust_pipeline(stack) if args.covariance == "robust"
                   else sample_covariance(stack, 0.0))
            if args.dump_cov:
                Path(args.dump_cov).mkdir(parents=True, exist_ok=True)
                np.savetxt(Path(args.dump_cov) / f"cov_{key[0]}_{key[1]}.csv",
                           np.hstack([cov.matrix.real, cov.matrix.imag]), delimiter=",", fmt="%.9g")
            z = vectorize_and_select(cov, method.coarray)
            res = solve_coarray_omp(z, method.manifold, sparsity=args.k)
        for e in pad_estimates(list(extract_peaks(res, method.grid, args.k)), args.k):
            rows.append([key[0], key[1], e.elevation_m, e.power])
    io.write_csv(args.output, ["range", "azimuth", "elevation_m", "power"], rows)
    print(f"wrote {len(rows)} estimates to {args.output}")
    return 0


def _run(args, kind: ExperimentKind):
    data = _config(args)
    data["kind"] = kind.value
    cfg = ExperimentConfig.from_dict(data)
    _, paths = run_experiment(cfg, threads=args.threads)
    for p in paths:
        print(p)
    return 0


def cmd_sweep(args):
    kind = ExperimentKind.SPACING_SWEEP if args.axis == "spacing" else ExperimentKind.SNR_SWEEP
    return _run(args, kind)


def cmd_scene_run(args):
    if args.write_template:
        cfg = ExperimentConfig.from_dict(_config(args))
        io.save_json(args.write_template, io.scene_to_dict(load_scene(cfg)))
        print(args.write_template)
        return 0
    return _run(args, ExperimentKind.POINTCLOUD_SCENE)


def cmd_metrics_sd(args):
    cloud = io.read_xyz(args.cloud)
    rep = sd_report(cloud[:, :3], CloudPoint(*args.center), args.radius, args.inlier_dist)
    print(json.dumps(rep, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nestedtomo", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, experiment=True):
        sp.add_argument("--config", type=Path, help="JSON experiment config")
        sp.add_argument("--seed", type=int)
        if experiment:
            sp.add_argument("--trials", type=int)
            sp.add_argument("--out", type=Path, help="output directory")
            sp.add_argument("--threads", type=int, default=1)

    arr = sub.add_parser("array").add_subparsers(dest="action", required=True)
    ins = arr.add_parser("inspect", help="positions, lags, holes and dof of arrays")
    ins.add_argument("array", nargs="*", help="e.g. nested:4x2 (default: the four reference arrays)")
    ins.add_argument("--d", type=float, default=0.08, help="unit spacing in meters")
    ins.add_argument("--csv", type=Path)
    ins.add_argument("--export-manifold", type=Path, metavar="DIR")
    ins.set_defaults(func=cmd_array_inspect)

    sim = sub.add_parser("simulate", help="write snapshot stacks to a binary container")
    common(sim, experiment=False)
    sim.add_argument("--array", required=True)
    sim.add_argument("--scene", type=Path, help="scene JSON (default: façade template)")
    sim.add_argument("--scatterer", action="append", metavar="ELEV[:POWER]")
    sim.add_argument("--window", type=int)
    sim.add_argument("--snr")
    sim.add_argument("--output", "-o", type=Path, required=True)
    sim.set_defaults(func=cmd_simulate)

    rec = sub.add_parser("reconstruct", help="estimate scatterers from a snapshot container")
    common(rec, experiment=False)
    rec.add_argument("snapshots", type=Path)
    rec.add_argument("--array", required=True)
    rec.add_argument("--k", type=int, default=2)
    rec.add_argument("--solver", choices=["coarray_omp", "direct_l1"], default="coarray_omp")
    rec.add_argument("--covariance", choices=["plain", "robust"], default="plain")
    rec.add_argument("--dump-cov", type=Path, metavar="DIR")
    rec.add_argument("--output", "-o", type=Path, required=True)
    rec.set_defaults(func=cmd_reconstruct)

    sw = sub.add_parser("sweep", help="Monte Carlo RMSE sweeps")
    sw.add_argument("axis", choices=["spacing", "snr"])
    common(sw)
    sw.set_defaults(func=cmd_sweep)

    sc = sub.add_parser("scene").add_subparsers(dest="action", required=True)
    run = sc.add_parser("run", help="point-cloud scene reconstruction")
    common(run)
    run.add_argument("--write-template", type=Path, metavar="FILE",
                     help="only write the scene as JSON and exit")
    run.set_defaults(func=cmd_scene_run)

    met = sub.add_parser("metrics").add_subparsers(dest="action", required=True)
    sd = met.add_parser("sd", help="scatterer density and dispersion of a cloud")
    sd.add_argument("cloud", type=Path, help="XYZ cloud file")
    sd.add_argument("--center", type=float, nargs=3, required=True, metavar=("X", "Y", "Z"))
    sd.add_argument("--radius", type=float, required=True)
    sd.add_argument("--inlier-dist", type=float, required=True)
    sd.set_defaults(func=cmd_metrics_sd)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (TomoError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
