"""Ground state of ``-βQ + α²ΔQ + Q^p = 0`` by Petviashvili iteration.

The same solver handles the soliton profile ``u_Q(x) = Q(αx)``, which solves
``-βu + Δu + u^p = 0``: only the coefficient in front of the Laplacian changes.
In three dimensions the default path solves the radial problem through the
substitution ``v = rQ``, which turns the radial Laplacian into ``v''`` on an
odd-extended line, and then interpolates onto the Cartesian grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DivergedToZero, NoConvergence
from .model import ComplexField, Grid, PhysicalParams, grad_l2_sq, mass, potential_norm

RADIAL_POINTS = 8192
RADIAL_DECAY_LENGTHS = 40.0


@dataclass(frozen=True)
class GroundStateNorms:
    l2_Q: float
    grad_l2_Q: float
    lp1_Q: float
    l2_uQ: float
    grad_l2_uQ: float
    lp1_uQ: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True, eq=False)
class GroundStateProfile:
    params: PhysicalParams
    grid: Grid
    q_field: ComplexField
    uq_field: ComplexField
    norms: GroundStateNorms
    c_gn: float
    pohozhaev_residuals: tuple
    iterations: int
    method: str
    profile_r: np.ndarray
    profile_q: np.ndarray
    uq_profile_r: np.ndarray
    uq_profile: np.ndarray
    tol: float = 1e-12

    @property
    def mass_uQ(self) -> float:
        return self.norms.l2_uQ**2

    @property
    def energy_uQ(self) -> float:
        return 0.5 * self.norms.grad_l2_uQ**2 - self.norms.lp1_uQ / (self.params.p + 1.0)

    @property
    def grad_sq_uQ(self) -> float:
        return self.norms.grad_l2_uQ**2

    @cached_property
    def _q_spline(self) -> CubicSpline:
        return _profile_spline(self.profile_r, self.profile_q)

    @cached_property
    def _uq_spline(self) -> CubicSpline:
        return _profile_spline(self.uq_profile_r, self.uq_profile)

    def q_radial(self, r) -> np.ndarray:
        """Q at radius r (zero beyond the tabulated range)."""
        return _eval_profile(self._q_spline, self.profile_r[-1], r)

    def uq_radial(self, r) -> np.ndarray:
        """u_Q at radius r, interpolated through the nodes used for ``uq_field``."""
        return _eval_profile(self._uq_spline, self.uq_profile_r[-1], r)


def _profile_spline(r: np.ndarray, q: np.ndarray) -> CubicSpline:
    # even extension keeps the derivative zero at the origin
    return CubicSpline(np.concatenate([-r[:0:-1], r]), np.concatenate([q[:0:-1], q]))


def _eval_profile(spline: CubicSpline, r_max: float, r) -> np.ndarray:
    r = np.abs(np.asarray(r, dtype=float))
    return np.where(r <= r_max, spline(np.minimum(r, r_max)), 0.0)


# ---------------------------------------------------------------------------
# Petviashvili on a periodic grid


def _petviashvili(initial, symbol, nonlinearity, p, tol, max_iter, project):
    """Generic iteration; ``nonlinearity`` and ``project`` act in physical space."""
    gamma = p / (p - 1.0)
    w = initial
    axes = tuple(range(w.ndim))
    for it in range(1, max_iter + 1):
        wh = np.fft.fftn(w, axes=axes)
        nh = np.fft.fftn(nonlinearity(w), axes=axes)
        num = np.sum(symbol * np.abs(wh) ** 2)
        den = np.real(np.sum(nh * np.conj(wh)))
        if not (den > 0.0 and np.isfinite(num)):
            raise DivergedToZero(f"stabilizing quotient degenerate at iteration {it}")
        m = num / den
        new = project(np.real(np.fft.ifftn(m**gamma * nh / symbol, axes=axes)))
        top = np.max(np.abs(new))
        if not np.isfinite(top) or top < 1e-300:
            raise DivergedToZero(f"iterate collapsed at iteration {it}; enlarge the domain")
        err = np.max(np.abs(new - w)) / top
        w = new
        if err < tol:
            return w, it, m
    raise NoConvergence(f"no convergence after {max_iter} iterations (last update {err:.3e})")


def _solve_on_grid(params: PhysicalParams, grid: Grid, coeff: float, tol: float, max_iter: int):
    p = params.p
    symbol = params.beta + coeff * grid.k_squared
    width = math.sqrt(coeff) / params.alpha
    r2 = grid.radius**2
    init = np.exp(-r2 / (2.0 * width**2))
    return _petviashvili(init, symbol, lambda w: np.abs(w) ** p, p, tol, max_iter, np.abs)


def _solve_radial_line(params: PhysicalParams, coeff: float, tol: float, max_iter: int, n: int):
    """Solve for v = rQ on an odd periodic line; returns (r >= 0, Q(r), line data)."""
    p = params.p
    rate = math.sqrt(params.beta / coeff)
    half = RADIAL_DECAY_LENGTHS / rate
    h = 2.0 * half / n
    x = -half + np.arange(n) * h
    k = 2.0 * np.pi * np.fft.fftfreq(n, h)
    symbol = params.beta + coeff * k**2
    sign = np.sign(x)
    safe = np.where(x == 0.0, 1.0, x)

    def nonlin(v):
        return x * np.abs(v / safe) ** p

    mirror = (-np.arange(n)) % n

    def project(v):
        # even components correspond to point sources at the origin; remove them
        return sign * np.abs(0.5 * (v - v[mirror]))

    width = math.sqrt(coeff) / params.alpha
    init = x * np.exp(-(x**2) / (2.0 * width**2))
    v, it, _ = _petviashvili(init, symbol, nonlin, p, tol, max_iter, project)
    kd = k.copy()
    kd[n // 2] = 0.0
    dv = np.real(np.fft.ifft(1j * kd * np.fft.fft(v)))
    q_line = np.where(x == 0.0, 0.0, v / safe)
    zero = n // 2
    q_line[zero] = dv[zero]
    norms = (
        2.0 * math.pi * np.sum(v**2) * h,
        2.0 * math.pi * np.sum(dv**2) * h,
        2.0 * math.pi * np.sum(x**2 * np.abs(q_line) ** (p + 1.0)) * h,
    )
    return x[zero:], q_line[zero:], norms, it


def _grid_norms(field: ComplexField, params: PhysicalParams) -> tuple:
    return mass(field), grad_l2_sq(field), potential_norm(field, params)


def _axis_profile(grid: Grid, values: np.ndarray) -> tuple:
    """Radial profile read off the positive first axis through the origin."""
    idx = [n // 2 for n in grid.dims]
    idx[0] = slice(grid.dims[0] // 2, None)
    return grid.axes[0][grid.dims[0] // 2 :].copy(), np.real(values[tuple(idx)]).copy()


def pohozhaev_residuals(l2_sq: float, grad_sq: float, lp1: float, p: float) -> tuple:
    return (
        abs(math.sqrt(grad_sq / l2_sq) - 1.0),
        abs(2.0 * lp1 / ((p + 1.0) * l2_sq) - 1.0),
    )


def solve_ground_state(
    params: PhysicalParams,
    grid: Grid,
    tol: float = 1e-12,
    max_iter: int = 500,
    method: str = "auto",
    radial_points: int = RADIAL_POINTS,
) -> GroundStateProfile:
    if grid.ndim != params.d:
        raise ValueError(f"grid has {grid.ndim} axes but d = {params.d}")
    if method == "auto":
        method = "radial" if params.d == 3 else "grid"
    if method == "radial" and params.d != 3:
        raise ValueError("radial reduction is implemented for d = 3 only")
    a2 = params.alpha_sq

    if method == "grid":
        q, it_q, _ = _solve_on_grid(params, grid, a2, tol, max_iter)
        uq, _, _ = _solve_on_grid(params, grid, 1.0, tol, max_iter)
        q_field = ComplexField(grid, q)
        m_q, k_q, v_q = _grid_norms(q_field, params)
        profile_r, profile_q = _axis_profile(grid, q)
        uq_profile_r, uq_profile = _axis_profile(grid, uq)
        iterations = it_q
    elif method == "radial":
        profile_r, profile_q, (m_q, k_q, v_q), iterations = _solve_radial_line(
            params, a2, tol, max_iter, radial_points
        )
        spline = _profile_spline(profile_r, profile_q)
        q_field = ComplexField(grid, _eval_profile(spline, profile_r[-1], grid.radius))
        uq = _eval_profile(spline, profile_r[-1], params.alpha * grid.radius)
        uq_profile_r, uq_profile = profile_r / params.alpha, profile_q
    else:
        raise ValueError(f"unknown method {method!r}")

    uq_field = ComplexField(grid, uq)
    m_u, k_u, v_u = _grid_norms(uq_field, params)
    norms = GroundStateNorms(
        l2_Q=math.sqrt(m_q),
        grad_l2_Q=math.sqrt(k_q),
        lp1_Q=v_q,
        l2_uQ=math.sqrt(m_u),
        grad_l2_uQ=math.sqrt(k_u),
        lp1_uQ=v_u,
    )
    c_gn = (params.p + 1.0) / (2.0 * norms.l2_Q ** (params.p - 1.0))
    return GroundStateProfile(
        params=params,
        grid=grid,
        q_field=q_field,
        uq_field=uq_field,
        norms=norms,
        c_gn=c_gn,
        pohozhaev_residuals=pohozhaev_residuals(m_q, k_q, v_q, params.p),
        iterations=iterations,
        method=method,
        profile_r=profile_r,
        profile_q=profile_q,
        uq_profile_r=uq_profile_r,
        uq_profile=uq_profile,
        tol=tol,
    )


def sharp_gn_constant(profile: GroundStateProfile) -> float:
    return (profile.params.p + 1.0) / (2.0 * profile.norms.l2_Q ** (profile.params.p - 1.0))


def weinstein_functional(u: ComplexField, params: PhysicalParams) -> float:
    """‖u‖_{p+1}^{p+1} / (‖∇u‖^{d(p-1)/2} ‖u‖^{2-(d-2)(p-1)/2})."""
    d, p = params.d, params.p
    K = grad_l2_sq(u)
    M = mass(u)
    V = potential_norm(u, params)
    if K == 0.0 or M == 0.0:
        return 0.0
    return V / (K ** (d * (p - 1.0) / 4.0) * M ** (1.0 - (d - 2) * (p - 1.0) / 4.0))


def soliton_field(profile: GroundStateProfile, t: float = 0.0) -> ComplexField:
    """e^{iβt} Q(αx) on the profile grid."""
    if t == 0.0:
        return ComplexField(profile.grid, profile.uq_field.values, 0.0)
    phase = np.exp(1j * profile.params.beta * t)
    return ComplexField(profile.grid, phase * profile.uq_field.values, t)


def equation_residual(field: ComplexField, params: PhysicalParams, coeff: float) -> float:
    """sup|-βw + c Δw + w^p| relative to sup|w|^p, evaluated spectrally."""
    w = np.real(field.values)
    lap = np.real(np.fft.ifftn(-field.grid.k_squared * np.fft.fftn(w)))
    res = -params.beta * w + coeff * lap + np.abs(w) ** params.p
    return float(np.max(np.abs(res)) / np.max(np.abs(w)) ** params.p)


def sech_profile(x: np.ndarray, params: PhysicalParams) -> np.ndarray:
    """Closed-form one-dimensional ground state."""
    p, beta, alpha = params.p, params.beta, params.alpha
    amp = (beta * (p + 1.0) / 2.0) ** (1.0 / (p - 1.0))
    arg = (p - 1.0) * math.sqrt(beta) * np.asarray(x) / (2.0 * alpha)
    return amp / np.cosh(arg) ** (2.0 / (p - 1.0))


def profile_on(profile: GroundStateProfile, grid: Grid, scale: float = 1.0, center=None) -> np.ndarray:
    """u_Q(scale (x - center)) sampled on an arbitrary grid."""
    coords = grid.coords
    if center is None:
        center = np.zeros(grid.ndim)
    r = np.sqrt(sum((c - x0) ** 2 for c, x0 in zip(coords, center)))
    return profile.uq_radial(scale * r)


def exact_radial_norms(profile: GroundStateProfile) -> tuple:
    """u_Q norms implied by the scaling relations applied to the Q norms."""
    a, d = profile.params.alpha, profile.params.d
    n = profile.norms
    return (a ** (-d) * n.l2_Q**2, a ** (2 - d) * n.grad_l2_Q**2, a ** (-d) * n.lp1_Q)
