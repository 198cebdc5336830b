"""Compare centred second differences of z_R with the spatial virial formula."""

import argparse

import numpy as np

from nlslab.diagnostics import virial_observer
from nlslab.evolution import PropagatorConfig, evolve
from nlslab.ground_state import solve_ground_state
from nlslab.model import Grid, derive_params


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--c", type=float, default=0.8)
    ap.add_argument("--radii", default="5,10")
    ap.add_argument("--T", type=float, default=1.0)
    args = ap.parse_args()

    P = derive_params(1, 7)
    gs = solve_ground_state(P, Grid.cube(1, 2048, 20.0))
    radii = [float(r) for r in args.radii.split(",")]
    obs, store = virial_observer(P, radii)
    cfg = PropagatorConfig(dt=1e-3, t_end=args.T, adapt=False, snapshot_every=10)
    evolve(args.c * gs.uq_field, P, cfg, observers=[obs], ground=gs)
    for R, vs in store.items():
        _, dd, zdd = vs.second_differences()
        rel = np.abs(dd - zdd) / np.abs(zdd)
        print(f"R={R:g}: max relative mismatch {rel.max():.3%}, median {np.median(rel):.3%}")


if __name__ == "__main__":
    main()
