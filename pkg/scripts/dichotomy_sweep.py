"""Sweep the soliton multiple c and tabulate region against observed outcome."""

import argparse

from nlslab.runner.config import load_config
from nlslab.runner.experiment import report, sweep


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("config", nargs="?", default="configs/d1_p7.yaml")
    ap.add_argument("--values", default="0.5,0.8,1.0,1.2")
    ap.add_argument("--t-end", type=float, default=2.0)
    ap.add_argument("--out", default="runs/dichotomy")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    cfg = load_config(args.config, {"propagator.t_end": args.t_end})
    values = [float(v) for v in args.values.split(",")]
    sweep(cfg, "c", values, args.out, jobs=args.jobs)
    print(report(args.out))


if __name__ == "__main__":
    main()
