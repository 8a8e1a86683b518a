"""Position/power RMSE against SNR at a fixed 0.8 rho spacing.

    python scripts/run_snr_sweep.py --trials 100 --out runs/snr
"""
import argparse
import logging

from nestedtomo import io
from nestedtomo.harness import ExperimentConfig, run_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawTextHelpFormatter)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--spacing", type=float, default=0.8, help="in resolution cells")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default="runs/snr")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = ExperimentConfig(kind="snr_sweep", trials=args.trials, spacing_rho=args.spacing,
                           seed=args.seed, out_dir=args.out)
    _, paths = run_experiment(cfg, threads=args.threads)
    header, rows = io.read_csv(paths[0])
    print(" ".join(f"{h:>18s}" for h in header))
    for row in rows:
        print(" ".join(f"{v:>18s}" for v in row))


if __name__ == "__main__":
    main()
