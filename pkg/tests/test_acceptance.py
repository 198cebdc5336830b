"""Acceptance gate: one PASS/FAIL line per criterion in the terminal summary."""

import math
import time
from fractions import Fraction as F

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_smooth_field
from nlslab.admissibility import catalog_paper_pairs, lattice_counterexamples
from nlslab.diagnostics import (
    KAPPA0,
    blowup_time_bound,
    line_parameter,
    localized_variance,
    mass_energy_line,
    remainder_support_pair,
    virial_observer,
    virial_rhs,
)
from nlslab.evolution import (
    Outcome,
    PropagatorConfig,
    decay_product,
    evolve,
    field_collector,
    pullback_increments,
)
from nlslab.ground_state import (
    sech_profile,
    sharp_gn_constant,
    solve_ground_state,
    weinstein_functional,
)
from nlslab.model import (
    Grid,
    classify,
    derive_params,
    energy,
    galilean_boost,
    invariant_report,
    mass,
    momentum,
    threshold_bounds,
    zero_momentum_boost,
)


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")


# ---------------------------------------------------------------------------
# 1. Pohozhaev identities


def test_criterion_1_pohozhaev():
    details, ok = [], True
    for d, p, N, L in ((1, 7, 2048, 20.0), (3, 3, 128, 16.0)):
        t0 = time.perf_counter()
        gs = solve_ground_state(derive_params(d, p), Grid.cube(d, N, L))
        elapsed = time.perf_counter() - t0
        r1, r2 = gs.pohozhaev_residuals
        good = r1 < 1e-6 and r2 < 1e-6 and elapsed < 10.0
        ok &= good
        details.append(f"d={d} p={p}: grad {r1:.1e}, potential {r2:.1e}, {elapsed:.1f}s")
    record(1, ok, "; ".join(details) + " (tol 1e-6, 10 s)")
    assert ok


# ---------------------------------------------------------------------------
# 2. closed-form 1d ground state


def _sech_ode_residual(x, P):
    # Q'' of A sech^k(bx) by hand
    p, beta, a2 = P.p, P.beta, P.alpha_sq
    k = 2.0 / (p - 1.0)
    b = (p - 1.0) * math.sqrt(beta) / (2.0 * P.alpha)
    A = (beta * (p + 1.0) / 2.0) ** (1.0 / (p - 1.0))
    sech = 1.0 / np.cosh(b * x)
    Q = A * sech**k
    Qxx = A * b**2 * (k**2 * sech**k - k * (k + 1.0) * sech ** (k + 2.0))
    return float(np.max(np.abs(-beta * Q + a2 * Qxx + Q**p)))


def test_criterion_2_closed_form(gs1):
    P = gs1.params
    x = gs1.grid.coords[0]
    resid = _sech_ode_residual(x, P)
    err = float(np.max(np.abs(gs1.q_field.values - sech_profile(x, P))))
    ok = resid < 1e-12 and err < 1e-8
    record(2, ok, f"oracle ODE residual {resid:.1e} (<1e-12), sup |Q - sech| {err:.1e} (<1e-8)")
    assert ok


# ---------------------------------------------------------------------------
# 3. sharp GN constant


def test_criterion_3_sharp_gn(gs1):
    C = sharp_gn_constant(gs1)
    rng = np.random.default_rng(20240601)
    quotients = [weinstein_functional(random_smooth_field(gs1.grid, rng), gs1.params) for _ in range(100)]
    at_q = weinstein_functional(gs1.q_field, gs1.params)
    worst = max(quotients) / C
    gap = abs(at_q - C) / C
    ok = worst <= 1 + 1e-6 and gap < 1e-6
    record(3, ok, f"max W/C_GN over 100 fields {worst:.6f} (<=1+1e-6), |W(Q)-C_GN|/C_GN {gap:.1e} (<1e-6)")
    assert ok


# ---------------------------------------------------------------------------
# 4. soliton propagation


def _soliton_run(gs, dt, T):
    cfg = PropagatorConfig(dt=dt, t_end=T, adapt=False, snapshot_every=int(round(0.1 / dt)))
    ref = np.abs(gs.uq_field.values)
    sup_err = {"max": 0.0}

    def obs(t, f):
        sup_err["max"] = max(sup_err["max"], float(np.max(np.abs(np.abs(f.values) - ref))))
        return {}

    series, _, outcome = evolve(gs.uq_field, gs.params, cfg, observers=[obs], ground=gs)
    return series, outcome, sup_err["max"]


def test_criterion_4_soliton_propagation(gs1):
    series, outcome, sup_err = _soliton_run(gs1, 1e-3, 5.0)
    mass_drift = series.relative_drift("mass")
    e1 = series.relative_drift("energy")
    half, _, _ = _soliton_run(gs1, 5e-4, 5.0)
    e2 = half.relative_drift("energy")
    ratio = e1 / e2
    parts = {
        "horizon": outcome is Outcome.REACHED_HORIZON,
        "sup": sup_err < 1e-4,
        "mass": mass_drift < 1e-10,
        "energy": e1 < 1e-8,
        "order2": 3.0 < ratio < 5.0,
    }
    ok = all(parts.values())
    failed = [k for k, v in parts.items() if not v]
    record(
        4,
        ok,
        f"sup err {sup_err:.2e} (<1e-4), mass drift {mass_drift:.1e} (<1e-10), energy drift {e1:.1e} (<1e-8), "
        f"halving ratio {ratio:.2f} (~4)" + (f" [failed: {', '.join(failed)}]" if failed else ""),
    )
    assert ok


# ---------------------------------------------------------------------------
# 5 and 10. dichotomy at desk scale and the blowup bound


@pytest.fixture(scope="module")
def blowup_run(gs1):
    P = gs1.params
    u0 = 1.2 * gs1.uq_field
    cfg = PropagatorConfig(dt=1e-3, t_end=10.0, snapshot_every=10)
    t0 = time.perf_counter()
    series, final, outcome = evolve(u0, P, cfg, ground=gs1)
    return u0, series, final, outcome, time.perf_counter() - t0


def test_criterion_5_dichotomy(gs1, blowup_run):
    P = gs1.params
    start = time.perf_counter()
    regions = {}
    for c in (0.5, 0.8, 1.2):
        regions[c] = classify(invariant_report(c * gs1.uq_field, P, gs1), P).region
    classify_ok = (
        regions[0.5].value == "ScatterRegion" and regions[0.8].value == "ScatterRegion" and regions[1.2].is_blowup
    )

    # scattering run on a wider box so the dispersed tail stays away from the edges
    wide = solve_ground_state(P, Grid.cube(1, 4096, 64.0))
    obs, fields = field_collector(every=2)
    cfg = PropagatorConfig(dt=1e-3, t_end=10.0, snapshot_every=500)
    _, _, outcome = evolve(0.5 * wide.uq_field, P, cfg, observers=[obs], ground=wide)
    late = [f for f in fields if f.time_tag >= 1.0 - 1e-9]
    inc = pullback_increments(late)
    decreasing = bool(np.all(np.diff(inc) < 0))
    prods = np.array([decay_product(f, P) for f in late])
    spread = float(prods.max() / prods.min())

    _, _, final, b_outcome, b_time = blowup_run
    elapsed = time.perf_counter() - start + b_time
    ok = (
        classify_ok
        and outcome is Outcome.REACHED_HORIZON
        and decreasing
        and spread <= 1.5
        and b_outcome is Outcome.BLOWUP_DETECTED
        and final.time_tag < 10.0
        and elapsed < 120.0
    )
    record(
        5,
        ok,
        f"regions {[regions[c].value for c in (0.5, 0.8, 1.2)]}; c=0.5 {outcome.value}, pullback increments "
        f"{inc[0]:.1e}->{inc[-1]:.1e} decreasing={decreasing}, decay product max/min {spread:.3f} (<=1.5); "
        f"c=1.2 {b_outcome.value} at t={final.time_tag:.4f}; {elapsed:.1f}s (<120 s)",
    )
    assert ok


def test_criterion_10_blowup_bound(gs1, blowup_run):
    P = gs1.params
    u0, _, final, outcome, _ = blowup_run
    rep = invariant_report(u0, P, gs1)
    lam = line_parameter(rep, gs1)
    kappa = min(0.5 * (lam - 1.0), 0.5 * KAPPA0)
    z0, z0p = localized_variance(u0, 10.0)
    bound = blowup_time_bound(z0, z0p, P, lam, kappa, gs1)
    t_detect = final.time_tag
    ok = outcome is Outcome.BLOWUP_DETECTED and t_detect <= 2.0 * bound.t_b
    record(
        10,
        ok,
        f"t_detect {t_detect:.4f} vs t_b {bound.t_b:.4f} (lambda {lam:.3f}, kappa {kappa:.3f}, R=10), "
        f"ratio {t_detect / bound.t_b:.2f} (<=2)",
    )
    assert ok


# ---------------------------------------------------------------------------
# 6. virial consistency


def test_criterion_6_virial(gs1):
    P = gs1.params
    worst = 0.0
    for c in (0.5, 0.8):
        obs, store = virial_observer(P, [5.0, 10.0])
        cfg = PropagatorConfig(dt=1e-3, t_end=1.0, adapt=False, snapshot_every=10)
        evolve(c * gs1.uq_field, P, cfg, observers=[obs], ground=gs1)
        for vs in store.values():
            _, dd, zdd = vs.second_differences()
            worst = max(worst, float(np.max(np.abs(dd - zdd) / np.abs(zdd))))

    sol = virial_rhs(gs1.uq_field, P, 10.0).z_dprime
    sol_rel = abs(sol) / gs1.norms.grad_l2_uQ**2

    rng = np.random.default_rng(7)
    support_exact = True
    for _ in range(10):
        u = random_smooth_field(gs1.grid, rng)
        for R in (2.0, 5.0, 10.0):
            full, masked = remainder_support_pair(u, P, R)
            support_exact &= full == masked
    ok = worst < 0.01 and sol_rel < 1e-5 and support_exact
    record(
        6,
        ok,
        f"max rel |dd z - z''| {worst:.2%} (<1%), soliton |z''|/||grad u_Q||^2 {sol_rel:.1e} (<1e-5), "
        f"A_R support exact={support_exact}",
    )
    assert ok


# ---------------------------------------------------------------------------
# 7. Galilean reduction


def test_criterion_7_galilean(gs1):
    P = gs1.params
    rng = np.random.default_rng(11)
    worst_p, worst_e, same = 0.0, 0.0, True
    seen = set()
    for i in range(20):
        # alternate random bumps with soliton multiples on both sides of threshold
        base = random_smooth_field(gs1.grid, rng, bumps=2) * 0.4 if i % 2 else rng.uniform(0.5, 1.3) * gs1.uq_field
        u = galilean_boost(base, [rng.uniform(-2.0, 2.0)])
        w, _ = zero_momentum_boost(u)
        Pu = momentum(u)
        worst_p = max(worst_p, float(np.linalg.norm(momentum(w))))
        expected = energy(u, P) - float(Pu @ Pu) / (2.0 * mass(u))
        worst_e = max(worst_e, abs(energy(w, P) - expected) / abs(expected))
        cu = classify(invariant_report(u, P, gs1), P).region
        cw = classify(invariant_report(w, P, gs1), P).region
        same &= cu == cw
        seen.add(cu.value)
    ok = worst_p < 1e-8 and worst_e < 1e-10 and same
    record(7, ok, f"max |P[w]| {worst_p:.1e} (<1e-8), max rel energy err {worst_e:.1e} (<1e-10), regions equal={same} over {sorted(seen)}")
    assert ok


# ---------------------------------------------------------------------------
# 8. threshold geometry


MATRIX = [(3, 3.0), (2, 5.0), (1, 7.0), (4, 7 / 3), (1, 9.0), (3, 4.0)]


def test_criterion_8_threshold_geometry(gs1):
    P = gs1.params
    rng = np.random.default_rng(3)
    grid = Grid.cube(1, 512, 20.0)
    ordered = 0
    for _ in range(1000):
        u = random_smooth_field(grid, rng, bumps=int(rng.integers(1, 4)))
        scale = 10 ** rng.uniform(-1.0, 0.0)
        u = u * scale
        if energy(u, P) < 0:
            u = u * 0.1
        threshold_bounds(invariant_report(u, P, gs1), P)
        ordered += 1
    line_exact = all(mass_energy_line(1.0, derive_params(d, p)) == 1.0 for d, p in MATRIX)
    b = threshold_bounds(invariant_report(gs1.uq_field, P, gs1), P)
    sat = abs(b.value - b.lower)
    ok = ordered == 1000 and line_exact and sat < 1e-6
    record(8, ok, f"ordered {ordered}/1000, line(1)==1 exactly={line_exact}, soliton |ME - lower| {sat:.1e} (<1e-6)")
    assert ok


# ---------------------------------------------------------------------------
# 9. admissibility catalog


def test_criterion_9_admissibility():
    cases = [(3, F(3)), (2, F(5)), (1, F(7)), (4, F(7, 3))]
    failures = []
    for d, p in cases:
        rep = catalog_paper_pairs(d, p)
        failures += [f"d={d}:{name}" for name in rep.failures()]
    lattice = {d: lattice_counterexamples(d, limit=20, max_den=2) for d in (1, 2, 3, 4)}
    lattice_ok = all(not v for v in lattice.values())
    ok = not failures and lattice_ok
    record(
        9,
        ok,
        f"catalog failures {len(failures)}" + (f" [{', '.join(failures)}]" if failures else "")
        + f"; lattice counterexamples {sum(len(v) for v in lattice.values())}",
    )
    assert ok
