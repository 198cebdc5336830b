"""Command line entry point: ``nlslab <subcommand> ...``.

Exit codes: 0 success, 2 blowup detected (informational), 1 error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

import yaml

from .. import __version__
from ..admissibility import catalog_paper_pairs, lattice_counterexamples
from ..errors import NLSError, RunError
from .config import load_config, parse_override
from .experiment import (
    EXIT_ERROR,
    EXIT_OK,
    build_grid,
    build_initial,
    cached_ground_state,
    classification_record,
    report,
    run,
    sweep,
)


def _overrides(items: Sequence[str]) -> dict:
    return dict(parse_override(text) for text in items or ())


def _config(args):
    return load_config(args.config, _overrides(args.set))


def _cache(args) -> str:
    # kept beside the run directory so it stays out of the run's file inventory
    return args.cache or os.path.join(os.path.dirname(os.path.abspath(args.out)), "gs_cache")


def _ground(cfg, args):
    params = cfg.params.physical()
    gs = cfg.ground_state
    return cached_ground_state(params, build_grid(cfg), _cache(args), gs.tol, gs.max_iter, gs.method)


def cmd_ground_state(args) -> int:
    cfg = _config(args)
    g = _ground(cfg, args)
    out = {
        "d": g.params.d,
        "p": g.params.p,
        "s": g.params.s,
        "alpha": g.params.alpha,
        "beta": g.params.beta,
        "method": g.method,
        "iterations": g.iterations,
        "norms": g.norms.as_dict(),
        "mass_uQ": g.mass_uQ,
        "energy_uQ": g.energy_uQ,
        "c_gn": g.c_gn,
        "pohozhaev_residuals": list(g.pohozhaev_residuals),
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_classify(args) -> int:
    cfg = _config(args)
    g = _ground(cfg, args)
    rec = classification_record(build_initial(cfg, g), g.params, g)
    print(json.dumps(rec, indent=2, default=str))
    return EXIT_OK


def cmd_evolve(args) -> int:
    cfg = _config(args)
    m = run(cfg, args.out, _cache(args))
    print(json.dumps(m.to_dict(), indent=2))
    return m.exit_code


def cmd_sweep(args) -> int:
    cfg = _config(args)
    values = yaml.safe_load("[" + args.values + "]") if args.values else []
    manifests = sweep(cfg, args.axis, values, args.out, jobs=args.jobs, cache_dir=args.cache)
    print(report(args.out) if manifests else "empty sweep")
    failed = [m for m in manifests if m is None or m.exit_code == EXIT_ERROR]
    return EXIT_ERROR if failed else EXIT_OK


def cmd_admissibility(args) -> int:
    d, p = args.d, args.p
    if args.config:
        raw = load_config(args.config, _overrides(args.set))
        d, p = raw.params.d, raw.params.p_text
    if d is None or p is None:
        raise NLSError("admissibility needs --d and --p or a config file")
    rep = catalog_paper_pairs(d, p)
    bad = lattice_counterexamples(d, limit=args.lattice)
    if args.json:
        payload = rep.to_dict()
        payload["lattice_counterexamples"] = [[str(q), str(r)] for q, r in bad]
        print(json.dumps(payload, indent=2))
    else:
        print(rep.to_table())
        print(f"lattice check (limit {args.lattice}): {len(bad)} counterexamples")
    return EXIT_OK if rep.all_passed and not bad else EXIT_ERROR


def cmd_report(args) -> int:
    print(report(args.directory))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlslab", description="Focusing NLS threshold-dynamics experiments.")
    ap.add_argument("--version", action="version", version=f"nlslab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("config", help="YAML configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config field")
        p.add_argument("--out", default="runs", help="output directory")
        p.add_argument("--cache", default=None, help="ground-state cache directory")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")

    common(sub.add_parser("ground-state", help="solve for the ground state"))
    common(sub.add_parser("classify", help="classify the configured initial data"))
    common(sub.add_parser("evolve", help="run one experiment"))
    sw = sub.add_parser("sweep", help="run one experiment per value of a config field")
    common(sw)
    sw.add_argument("--axis", required=True, help="dotted config key or alias (c, dt, N, ...)")
    sw.add_argument("--values", default="", help="comma separated values")
    ad = sub.add_parser("admissibility", help="certify the exponent catalog")
    common(ad, config_required=False)
    ad.add_argument("config", nargs="?", default=None)
    ad.add_argument("--d", type=int, default=None)
    ad.add_argument("--p", default=None, help="exponent, rational allowed (e.g. 7/3)")
    ad.add_argument("--json", action="store_true")
    ad.add_argument("--lattice", type=int, default=20, help="lattice bound for the exhaustive check")
    rp = sub.add_parser("report", help="re-render tables and plot data from stored CSVs")
    rp.add_argument("directory")
    return ap


COMMANDS = {
    "ground-state": cmd_ground_state,
    "classify": cmd_classify,
    "evolve": cmd_evolve,
    "sweep": cmd_sweep,
    "admissibility": cmd_admissibility,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except RunError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (NLSError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
