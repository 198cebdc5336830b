"""Observables built on top of the flow: localized virial identities, the
blowup-time bound, the mass-energy line, window tracking, the convexity chain
and the modulation distance to the soliton family.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import brentq, minimize

from .errors import (
    CutoffExceedsDomain,
    DegenerateDenominator,
    EmptySeries,
    HypothesisViolated,
    KappaOutOfRange,
    SearchRangeEmpty,
)
from .evolution import TimeSeries
from .ground_state import GroundStateProfile
from .model import (
    ComplexField,
    InvariantReport,
    PhysicalParams,
    _pow,
    gradient,
    line_factor,
)

KAPPA0 = 0.1
DEGENERATE_GAP = 1e-12


# ---------------------------------------------------------------------------
# cutoff


def _smootherstep() -> Polynomial:
    # C^4 transition from 0 to 1 on [0, 1]
    return Polynomial([0, 0, 0, 0, 0, 126, -420, 540, -315, 70])


@dataclass(frozen=True)
class CutoffFunction:
    """Radial weight equal to r² on [0, 1], zero beyond 2, C⁴ in between.

    On (1, 2) the profile is ``r²(1 - S(r-1))`` with ``S`` the degree-nine
    smootherstep, so every derivative up to order four is continuous.
    """

    inner: float = 1.0
    outer: float = 2.0

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise ValueError("need 0 < inner < outer")

    @cached_property
    def _blend(self) -> list:
        # built in t = (r - inner)/(outer - inner) so evaluation stays well conditioned
        a, w = self.inner, self.outer - self.inner
        r_of_t = Polynomial([a, w])
        coef = (r_of_t**2 * (1 - _smootherstep())).coef
        q = Polynomial(coef, domain=[a, self.outer], window=[0.0, 1.0])
        return [q.deriv(k) for k in range(5)]

    def derivative(self, r, order: int = 0) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        inside = [r**2, 2.0 * r, 2.0 * np.ones_like(r), np.zeros_like(r), np.zeros_like(r)][order]
        mid = self._blend[order](r)
        return np.where(r <= self.inner, inside, np.where(r < self.outer, mid, 0.0))

    def phi(self, r) -> np.ndarray:
        return self.derivative(r, 0)

    def radial_terms(self, r: np.ndarray, d: int) -> dict:
        """φ'/r, φ'', Δφ and Δ²φ at radius r; exact quadratic values on r <= inner."""
        r = np.asarray(r, dtype=float)
        inside = r <= self.inner
        rs = np.where(inside, 1.0, r)
        q1, q2, q3, q4 = (self.derivative(rs, k) for k in range(1, 5))
        lap = q2 + (d - 1) * q1 / rs
        g1 = q3 + (d - 1) * (q2 / rs - q1 / rs**2)
        g2 = q4 + (d - 1) * (q3 / rs - 2.0 * q2 / rs**2 + 2.0 * q1 / rs**3)
        bilap = g2 + (d - 1) * g1 / rs
        return {
            "dphi_over_r": np.where(inside, 2.0, q1 / rs),
            "d2phi": np.where(inside, 2.0, q2),
            "lap": np.where(inside, 2.0 * d, lap),
            "bilap": np.where(inside, 0.0, bilap),
            "inside": inside,
        }


def _check_radius(u: ComplexField, R: float) -> None:
    if not R > 0:
        raise ValueError(f"radius must be positive, got {R}")
    if R > min(u.grid.extent) / 2.0 * (1 + 1e-12):
        raise CutoffExceedsDomain(f"R = {R} exceeds half the box half-width {min(u.grid.extent)}")


def localized_variance(u: ComplexField, R: float, cutoff: CutoffFunction = CutoffFunction()) -> tuple:
    """(z_R, z_R') with z = ∫R²φ(x/R)|u|² and z' = 2 Im∫R∇φ(x/R)·∇u ū."""
    _check_radius(u, R)
    g = u.grid
    r = g.radius
    rho = np.abs(u.values) ** 2
    z = R**2 * g.integrate(cutoff.phi(r / R) * rho)
    # R (∇φ)(x/R) = φ'(r/R) x / r
    w = cutoff.radial_terms(r / R, g.ndim)["dphi_over_r"]
    conj = np.conj(u.values)
    zp = 0.0
    for xj, dj in zip(g.coords, gradient(u)):
        zp += g.integrate(w * xj * np.imag(conj * dj))
    return z, 2.0 * zp


@dataclass(frozen=True)
class VirialTerms:
    z_dprime: float
    a_r: float
    kinetic: float
    potential: float
    decomposed: float

    def __iter__(self):
        return iter((self.z_dprime, self.a_r))


def _virial_integrands(values, grads, grid, params, R, cutoff):
    d = grid.ndim
    p = params.p
    r = grid.radius
    rs = r / R
    terms = cutoff.radial_terms(rs, d)
    inside = terms["inside"]
    safe = np.where(r == 0.0, 1.0, r)
    unit = [np.where(inside, 0.0, x / safe) for x in grid.coords]
    # φ_jk - 2δ_jk = (φ'' - φ'/r) x̂_j x̂_k + (φ'/r - 2) δ_jk, exactly zero inside
    a = np.where(inside, 0.0, terms["d2phi"] - terms["dphi_over_r"])
    b = np.where(inside, 0.0, terms["dphi_over_r"] - 2.0)
    excess_hess = np.zeros(grid.dims)
    for j in range(d):
        for k in range(d):
            h = a * unit[j] * unit[k]
            if j == k:
                h = h + b
            excess_hess = excess_hess + h * np.real(grads[j] * np.conj(grads[k]))
    rho = np.abs(values) ** 2
    pot = np.abs(values) ** (p + 1.0)
    excess_lap = np.where(inside, 0.0, terms["lap"] - 2.0 * d)
    c = 2.0 * (p - 1.0) / (p + 1.0)
    remainder = 4.0 * excess_hess - terms["bilap"] * rho / R**2 - c * excess_lap * pot
    grad_sq = sum(np.abs(gj) ** 2 for gj in grads)
    return remainder, grad_sq, pot, terms


def virial_rhs(
    u: ComplexField, params: PhysicalParams, R: float, cutoff: CutoffFunction = CutoffFunction()
) -> VirialTerms:
    """z_R'' from spatial integrals, with its regrouped form 8K - c_d V + A_R."""
    _check_radius(u, R)
    g = u.grid
    d, p = g.ndim, params.p
    grads = gradient(u)
    remainder, grad_sq, pot, terms = _virial_integrands(u.values, grads, g, params, R, cutoff)
    a_r = g.integrate(remainder)
    K = g.integrate(grad_sq)
    V = g.integrate(pot)
    kinetic = 8.0 * K
    potential = 4.0 * d * (p - 1.0) / (p + 1.0) * V

    # full sum of the localized virial identity, assembled independently
    r = g.radius
    safe = np.where(r == 0.0, 1.0, r)
    unit = [x / safe for x in g.coords]
    hess_sum = np.zeros(g.dims)
    for j in range(d):
        for k in range(d):
            h = (terms["d2phi"] - terms["dphi_over_r"]) * unit[j] * unit[k]
            if j == k:
                h = h + terms["dphi_over_r"]
            hess_sum = hess_sum + h * np.real(grads[j] * np.conj(grads[k]))
    rho = np.abs(u.values) ** 2
    full = (
        4.0 * g.integrate(hess_sum)
        - g.integrate(terms["bilap"] * rho) / R**2
        - 2.0 * (p - 1.0) / (p + 1.0) * g.integrate(terms["lap"] * pot)
    )
    return VirialTerms(
        z_dprime=full, a_r=a_r, kinetic=kinetic, potential=potential, decomposed=kinetic - potential + a_r
    )


def remainder_support_pair(
    u: ComplexField, params: PhysicalParams, R: float, cutoff: CutoffFunction = CutoffFunction()
) -> tuple:
    """A_R from the full field and from u, ∇u zeroed on |x| < R."""
    _check_radius(u, R)
    g = u.grid
    grads = gradient(u)
    full = g.integrate(_virial_integrands(u.values, grads, g, params, R, cutoff)[0])
    keep = g.radius >= R
    masked_vals = np.where(keep, u.values, 0.0)
    masked_grads = [np.where(keep, gj, 0.0) for gj in grads]
    masked = g.integrate(_virial_integrands(masked_vals, masked_grads, g, params, R, cutoff)[0])
    return full, masked


@dataclass
class VirialSeries:
    radius: float
    times: list = field(default_factory=list)
    z: list = field(default_factory=list)
    z_prime: list = field(default_factory=list)
    z_dprime: list = field(default_factory=list)
    a_r: list = field(default_factory=list)
    decomposed: list = field(default_factory=list)

    def add(self, t: float, u: ComplexField, params: PhysicalParams, cutoff: CutoffFunction) -> dict:
        z, zp = localized_variance(u, self.radius, cutoff)
        terms = virial_rhs(u, params, self.radius, cutoff)
        self.times.append(t)
        self.z.append(z)
        self.z_prime.append(zp)
        self.z_dprime.append(terms.z_dprime)
        self.a_r.append(terms.a_r)
        self.decomposed.append(terms.decomposed)
        return {"z": z, "zp": zp, "zdd": terms.z_dprime, "ar": terms.a_r}

    def second_differences(self) -> tuple:
        """(interior times, centred second differences of z, z'' samples there)."""
        t = np.asarray(self.times)
        z = np.asarray(self.z)
        if len(t) < 3:
            raise EmptySeries("need at least three samples")
        h1 = t[1:-1] - t[:-2]
        h2 = t[2:] - t[1:-1]
        dd = 2.0 * (h1 * z[2:] - (h1 + h2) * z[1:-1] + h2 * z[:-2]) / (h1 * h2 * (h1 + h2))
        return t[1:-1], dd, np.asarray(self.z_dprime)[1:-1]


def virial_observer(params: PhysicalParams, radii: Sequence[float], cutoff: CutoffFunction = CutoffFunction()):
    """Observer for :func:`evolve` adding z_R and z_R'' columns per radius."""
    store = {R: VirialSeries(radius=R) for R in radii}

    def obs(t: float, u: ComplexField) -> dict:
        row = {}
        for R, vs in store.items():
            vals = vs.add(t, u, params, cutoff)
            row[f"z_R{R:g}"] = vals["z"]
            row[f"z_dprime_R{R:g}"] = vals["zdd"]
        return row

    return obs, store


def localization_ratio(u: ComplexField, params: PhysicalParams, R: float, cutoff: CutoffFunction = CutoffFunction()) -> float:
    """|z_R'| / (R ‖u‖^{2(1-s)} ‖∇u‖^{2s})."""
    from .model import grad_l2_sq, mass

    _, zp = localized_variance(u, R, cutoff)
    denom = R * _pow(mass(u), 1.0 - params.s) * _pow(grad_l2_sq(u), params.s)
    return abs(zp) / denom if denom > 0 else 0.0


# ---------------------------------------------------------------------------
# mass-energy line and blowup bound


def mass_energy_line(lam: float, params: PhysicalParams) -> float:
    """E/E[u_Q] along the line M = M[u_Q] at renormalized gradient λ."""
    if not lam > 0:
        raise ValueError(f"λ must be positive, got {lam}")
    return line_factor(lam, params)


def line_value(report: InvariantReport, ground: GroundStateProfile) -> float:
    """(M/M_Q)^{(1-s)/s} E/E_Q, the signed coordinate matched against the line."""
    s = ground.params.s
    return _pow(report.mass / ground.mass_uQ, (1.0 - s) / s) * report.energy / ground.energy_uQ


def line_parameter(report: InvariantReport, ground: GroundStateProfile, upper: Optional[bool] = None) -> float:
    """λ with mass_energy_line(λ) equal to the report's line value.

    The branch λ > 1 is used when the renormalized gradient exceeds one
    (or when ``upper`` is forced true).
    """
    params = ground.params
    target = line_value(report, ground)
    if upper is None:
        upper = report.renorm_gradient > 1.0
    f = lambda lam: line_factor(lam, params) - target
    if upper:
        if target >= 1.0:
            raise ValueError("no λ > 1 on the line above the soliton value")
        hi = 2.0
        while f(hi) > 0:
            hi *= 2.0
        return brentq(f, 1.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    if not 0.0 <= target < 1.0:
        raise ValueError("line value outside [0, 1) on the lower branch")
    if target == 0.0:
        return 0.0
    return brentq(f, 1e-300, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)


@dataclass(frozen=True)
class BlowupBoundReport:
    r0: float
    r0_prime: float
    t_b: float
    kappa: float
    lambda_line: float
    denominator: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def blowup_time_from_r(r0: float, r0_prime: float) -> float:
    """Positive root of -t²/2 + r'(0) t + r(0)."""
    disc = r0_prime**2 + 2.0 * r0
    if disc < 0:
        raise ValueError("negative discriminant")
    return r0_prime + math.sqrt(disc)


def blowup_time_bound(
    z0: float,
    z0_prime: float,
    params: PhysicalParams,
    lambda_line: float,
    kappa: float,
    ground: GroundStateProfile,
    kappa0: float = KAPPA0,
) -> BlowupBoundReport:
    if not lambda_line > 1.0:
        raise KappaOutOfRange(f"the bound needs λ > 1, got {lambda_line}")
    if not 0.0 < kappa < min(lambda_line - 1.0, kappa0):
        raise KappaOutOfRange(f"κ = {kappa} outside (0, min(λ-1, κ0) = {min(lambda_line - 1.0, kappa0)})")
    a2 = params.alpha_sq
    lam = lambda_line
    gap = 1.0 - _pow(lam, params.p - 1.0) / a2 - kappa
    factor = a2 / (a2 - 1.0) * _pow(lam, 2.0 / params.s) * gap
    denom = 32.0 * a2 * ground.energy_uQ * factor
    if abs(gap) < DEGENERATE_GAP or not math.isfinite(denom):
        raise DegenerateDenominator("scaled-variance denominator vanishes")
    scale = abs(denom)
    r0 = z0 / scale
    r0p = z0_prime / scale
    return BlowupBoundReport(
        r0=r0,
        r0_prime=r0p,
        t_b=blowup_time_from_r(r0, r0p),
        kappa=kappa,
        lambda_line=lam,
        denominator=denom,
    )


# ---------------------------------------------------------------------------
# gradient window


@dataclass(frozen=True)
class WindowResult:
    held: bool
    first_exit: Optional[float] = None
    direction: Optional[str] = None
    min_value: float = math.nan
    max_value: float = math.nan


def gbg_window(series: TimeSeries, lam: float, sigma: float, column: str = "G") -> WindowResult:
    """Whether λ <= 𝒢(t) <= σ at every sampled time."""
    if len(series) == 0:
        raise EmptySeries("time series has no samples")
    if lam > sigma:
        raise ValueError(f"window lower end {lam} exceeds upper end {sigma}")
    g = series.column(column)
    t = series.t
    lo, hi = float(np.nanmin(g)), float(np.nanmax(g))
    for ti, gi in zip(t, g):
        if gi < lam:
            return WindowResult(False, float(ti), "below", lo, hi)
        if gi > sigma:
            return WindowResult(False, float(ti), "above", lo, hi)
    return WindowResult(True, None, None, lo, hi)


# ---------------------------------------------------------------------------
# convexity chain


@dataclass(frozen=True)
class ConvexityCheck:
    omega: float
    lhs: float
    mid: float
    rhs: float
    ok: bool


def convexity_bound_check(report: InvariantReport, params: PhysicalParams, tol: float = 1e-6) -> ConvexityCheck:
    """16(1-ω^{p-1})E <= 8(1-ω^{p-1})‖∇u‖² <= 8‖∇u‖² - c_d ‖u‖_{p+1}^{p+1}."""
    if report.renorm_gradient >= 1.0:
        raise HypothesisViolated(f"renormalized gradient {report.renorm_gradient} is not below 1")
    me = report.renorm_mass_energy
    if me is None or me >= 1.0:
        raise HypothesisViolated("renormalized mass-energy must lie in [0, 1)")
    d, p = params.d, params.p
    omega = math.sqrt(me)
    w = 1.0 - omega ** (p - 1.0)
    K = report.gradient_l2_sq
    lhs = 16.0 * w * report.energy
    mid = 8.0 * w * K
    rhs = 8.0 * K - 4.0 * d * (p - 1.0) / (p + 1.0) * report.potential_norm
    slack = tol * max(abs(lhs), abs(mid), abs(rhs), 1e-300)
    return ConvexityCheck(omega, lhs, mid, rhs, bool(lhs <= mid + slack and mid <= rhs + slack))


# ---------------------------------------------------------------------------
# modulation fit


@dataclass(frozen=True)
class SearchRanges:
    lambda_range: tuple = (0.5, 2.0)
    n_lambda: int = 9
    x0_box: Optional[tuple] = None
    n_x0: int = 17
    refine: bool = True


@dataclass(frozen=True)
class ModulationFit:
    theta0: float
    x0: tuple
    lam: float
    residual_h1: float


def _h1_inner(a_hat: np.ndarray, b_hat: np.ndarray, grid) -> complex:
    return complex(np.sum(np.conj(a_hat) * b_hat * (1.0 + grid.k_squared)) * grid.cell_volume / grid.size)


class _ModulationObjective:
    """Residual after optimizing the phase analytically."""

    def __init__(self, u: ComplexField, ground: GroundStateProfile):
        self.grid = u.grid
        self.ground = ground
        self.u_hat = np.fft.fftn(u.values)
        self.u_sq = _h1_inner(self.u_hat, self.u_hat, self.grid).real

    def model_hat(self, x0, lam) -> np.ndarray:
        g = self.grid
        r = np.sqrt(sum((c - x) ** 2 for c, x in zip(g.coords, x0)))
        w = lam ** (g.ndim / 2.0) * self.ground.uq_radial(lam * r)
        return np.fft.fftn(w)

    def evaluate(self, x0, lam) -> tuple:
        if not lam > 0:
            return math.inf, 0.0
        w_hat = self.model_hat(x0, lam)
        inner = _h1_inner(w_hat, self.u_hat, self.grid)
        w_sq = _h1_inner(w_hat, w_hat, self.grid).real
        res_sq = self.u_sq + w_sq - 2.0 * abs(inner)
        return math.sqrt(max(res_sq, 0.0)), math.atan2(inner.imag, inner.real) % (2.0 * math.pi)

    def direct(self, x0, lam) -> tuple:
        """Residual from the explicit difference, free of cancellation."""
        _, theta = self.evaluate(x0, lam)
        diff = self.u_hat - np.exp(1j * theta) * self.model_hat(x0, lam)
        return math.sqrt(max(_h1_inner(diff, diff, self.grid).real, 0.0)), theta


def soliton_distance(
    u: ComplexField, ground: GroundStateProfile, search: SearchRanges = SearchRanges()
) -> ModulationFit:
    """Closest member e^{iθ}λ^{d/2}u_Q(λ(x - x₀)) in H¹."""
    lo, hi = search.lambda_range
    if not (0 < lo <= hi) or search.n_lambda < 1 or search.n_x0 < 1:
        raise SearchRangeEmpty(f"empty search range {search}")
    grid = u.grid
    d = grid.ndim
    box = search.x0_box or tuple((-L / 2.0, L / 2.0) for L in grid.extent)
    if len(box) != d or any(b[0] > b[1] for b in box):
        raise SearchRangeEmpty(f"empty x0 box {box}")
    obj = _ModulationObjective(u, ground)
    lams = np.geomspace(lo, hi, search.n_lambda) if search.n_lambda > 1 else np.array([lo])
    # lattice on grid nodes inside the box
    axes = []
    for (a, b), ax in zip(box, grid.axes):
        nodes = ax[(ax >= a - 1e-12) & (ax <= b + 1e-12)]
        if nodes.size == 0:
            raise SearchRangeEmpty(f"no grid nodes in [{a}, {b}]")
        stride = max(1, int(math.ceil(nodes.size / search.n_x0)))
        axes.append(nodes[::stride])
    best = (math.inf, None, None)
    for x0 in np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d):
        for lam in lams:
            res, _ = obj.evaluate(x0, lam)
            if res < best[0]:
                best = (res, x0.copy(), lam)
    res, x0, lam = best
    if search.refine:
        start = np.concatenate([x0, [math.log(lam)]])
        scale = np.concatenate([np.full(d, max(grid.spacing) * 2), [0.1]])
        simplex = np.vstack([start] + [start + np.eye(d + 1)[i] * scale[i] for i in range(d + 1)])
        opt = minimize(
            lambda v: obj.evaluate(v[:d], math.exp(v[d]))[0],
            start,
            method="Nelder-Mead",
            options={"initial_simplex": simplex, "xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000},
        )
        if opt.fun <= res:
            x0, lam = opt.x[:d], math.exp(opt.x[d])
    res, theta = obj.direct(x0, lam)
    return ModulationFit(theta0=theta, x0=tuple(float(v) for v in x0), lam=float(lam), residual_h1=res)


def modulation_residual(u: ComplexField, ground: GroundStateProfile, x0, lam) -> float:
    return _ModulationObjective(u, ground).direct(x0, lam)[0]
