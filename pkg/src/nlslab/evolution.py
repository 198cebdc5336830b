"""Split-step Fourier propagation and the free Schrödinger flow.

Sign convention: ``e^{itΔ}`` multiplies ``û(ξ)`` by ``e^{-it|ξ|²}``, so that
``i u_t + Δu = 0``.  Every routine here, including the pullback used for
scattering diagnostics, goes through :func:`free_flow`.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import NonFiniteField
from .model import (
    ComplexField,
    Grid,
    PhysicalParams,
    grad_l2_sq,
    invariant_report,
    mass,
    momentum,
    potential_norm,
)

if TYPE_CHECKING:
    from .ground_state import GroundStateProfile

Observer = Callable[[float, ComplexField], dict]


@dataclass(frozen=True)
class PropagatorConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    adapt: bool = True
    blowup_guard: float = 10.0
    resolution_guard: float = 0.5
    snapshot_every: int = 100
    dealias: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be non-negative, got {self.t_end}")
        if not self.blowup_guard > 1:
            raise ValueError(f"blowup_guard must exceed 1, got {self.blowup_guard}")
        if self.resolution_guard < 0:
            raise ValueError("resolution_guard must be non-negative")
        if int(self.snapshot_every) != self.snapshot_every or self.snapshot_every < 1:
            raise ValueError("snapshot_every must be a positive integer")

    @property
    def record_interval(self) -> float:
        return self.dt * self.snapshot_every


class Outcome(str, enum.Enum):
    REACHED_HORIZON = "ReachedHorizon"
    BLOWUP_DETECTED = "BlowupDetected"
    CORRUPTED = "Corrupted"


BASE_COLUMNS = ("mass", "energy", "grad_l2_sq", "potential_norm", "G", "ME", "sup_abs")


def momentum_columns(d: int) -> tuple:
    return ("px", "py", "pz")[:d]


@dataclass
class TimeSeries:
    """Columns of per-time records with strictly increasing times."""

    columns: list
    times: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, t: float, row: dict) -> None:
        if self.times and not t > self.times[-1]:
            raise ValueError(f"time {t} does not exceed previous {self.times[-1]}")
        for key in row:
            if key not in self.columns:
                self.columns.append(key)
        self.times.append(float(t))
        self.rows.append(dict(row))

    def __len__(self) -> int:
        return len(self.times)

    def column(self, name: str) -> np.ndarray:
        return np.array([r.get(name, np.nan) for r in self.rows], dtype=float)

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times, dtype=float)

    def relative_drift(self, name: str) -> float:
        col = self.column(name)
        ref = abs(col[0])
        return float(np.max(np.abs(col - col[0])) / ref) if ref > 0 else float(np.max(np.abs(col)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *self.columns])
            for t, row in zip(self.times, self.rows):
                w.writerow([_fmt(t)] + [_fmt(row.get(c, math.nan)) for c in self.columns])

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            series = cls(columns=list(header[1:]))
            for rec in reader:
                series.append(float(rec[0]), {k: float(v) for k, v in zip(header[1:], rec[1:])})
        return series


def _fmt(x) -> str:
    return "%.17g" % x


# ---------------------------------------------------------------------------
# flows


def _phase(k_squared: np.ndarray, t: float) -> np.ndarray:
    return np.exp(-1j * t * k_squared)


def free_flow(u: ComplexField, t: float) -> ComplexField:
    """e^{itΔ}u, exact on the grid."""
    if t == 0.0:
        return u.with_values(u.values, u.time_tag)
    u.check_finite()
    vals = np.fft.ifftn(_phase(u.grid.k_squared, t) * np.fft.fftn(u.values))
    return u.with_values(vals, u.time_tag + t)


def free_pullback(u: ComplexField, t: Optional[float] = None) -> ComplexField:
    """ψ = e^{-itΔ}u(t); t defaults to the field's time tag."""
    t = u.time_tag if t is None else t
    out = free_flow(u, -t)
    return out.with_values(out.values, u.time_tag - t)


def dealias_mask(grid: Grid) -> np.ndarray:
    mask = np.ones(grid.dims, dtype=bool)
    for k, n, h in zip(grid.wavenumbers, grid.dims, grid.spacing):
        kmax = math.pi / h
        mask = mask & (np.abs(k) <= (2.0 / 3.0) * kmax)
    return mask


def _nonlinear(values: np.ndarray, tau: float, pm1: float) -> np.ndarray:
    return values * np.exp(1j * tau * np.abs(values) ** pm1)


def _strang(values, k_squared, dt, pm1, mask=None):
    v = _nonlinear(values, 0.5 * dt, pm1)
    vh = _phase(k_squared, dt) * np.fft.fftn(v)
    if mask is not None:
        vh = vh * mask
    v = np.fft.ifftn(vh)
    v = _nonlinear(v, 0.5 * dt, pm1)
    if mask is not None:
        v = np.fft.ifftn(mask * np.fft.fftn(v))
    return v


def step(u: ComplexField, params: PhysicalParams, dt: float, dealias: bool = False) -> ComplexField:
    """One Strang step N(dt/2) L(dt) N(dt/2)."""
    u.check_finite()
    mask = dealias_mask(u.grid) if dealias else None
    with np.errstate(all="ignore"):
        vals = _strang(u.values, u.grid.k_squared, dt, params.p - 1.0, mask)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteField(f"non-finite values after step from t={u.time_tag}")
    return u.with_values(vals, u.time_tag + dt)


# ---------------------------------------------------------------------------
# driver


def record_row(u: ComplexField, params: PhysicalParams, ground: Optional["GroundStateProfile"]) -> dict:
    row = {}
    if ground is not None:
        rep = invariant_report(u, params, ground)
        row.update(
            mass=rep.mass,
            energy=rep.energy,
            grad_l2_sq=rep.gradient_l2_sq,
            potential_norm=rep.potential_norm,
            G=rep.renorm_gradient,
            ME=math.nan if rep.renorm_mass_energy is None else rep.renorm_mass_energy,
        )
        P = rep.momentum
    else:
        K = grad_l2_sq(u)
        V = potential_norm(u, params)
        row.update(
            mass=mass(u),
            energy=0.5 * K - V / (params.p + 1.0),
            grad_l2_sq=K,
            potential_norm=V,
            G=math.nan,
            ME=math.nan,
        )
        P = momentum(u)
    for name, val in zip(momentum_columns(u.grid.ndim), P):
        row[name] = float(val)
    row["sup_abs"] = u.sup()
    return row


def _gradient_norm_sq(vals: np.ndarray, grid: Grid) -> float:
    return grid.spectral_integrate(grid.k_squared * np.abs(np.fft.fftn(vals)) ** 2)


def evolve(
    u0: ComplexField,
    params: PhysicalParams,
    cfg: PropagatorConfig,
    observers: Sequence[Observer] = (),
    ground: Optional["GroundStateProfile"] = None,
) -> tuple:
    """Integrate to ``cfg.t_end``; returns (TimeSeries, final field, Outcome).

    Rows are recorded at multiples of ``cfg.record_interval``; adaptive steps
    are clipped so those instants are hit exactly.  The run stops early when
    the gradient ratio exceeds ``blowup_guard`` or the nonlinear length scale
    ``sup|u|^{-(p-1)/2}`` drops below ``resolution_guard`` grid spacings.
    """
    grid = u0.grid
    u0.check_finite()
    pm1 = params.p - 1.0
    d = grid.ndim
    series = TimeSeries(columns=["mass", "energy", *momentum_columns(d), "grad_l2_sq", "potential_norm", "G", "ME", "sup_abs"])
    mask = dealias_mask(grid) if cfg.dealias else None
    ksq = grid.k_squared
    dx = min(grid.spacing)

    def record(t, vals):
        f = ComplexField(grid, vals, t)
        row = record_row(f, params, ground)
        for obs in observers:
            row.update(obs(t, f))
        series.append(t, row)

    t = u0.time_tag
    t_stop = t + cfg.t_end
    vals = np.array(u0.values)
    sup0 = float(np.max(np.abs(vals)))
    grad0 = math.sqrt(_gradient_norm_sq(vals, grid))
    record(t, vals)
    interval = cfg.record_interval
    k_next = 1
    outcome = Outcome.REACHED_HORIZON
    steps = 0
    reason = None

    while t < t_stop:
        next_record = min(u0.time_tag + k_next * interval, t_stop)
        h = cfg.dt
        if cfg.adapt and sup0 > 0:
            sup = float(np.max(np.abs(vals)))
            h = cfg.dt / max(1.0, (sup / sup0) ** pm1)
        if t + h >= next_record * (1 - 1e-14) or next_record - (t + h) < 1e-12 * interval:
            h = next_record - t
            landing = True
        else:
            landing = False
        with np.errstate(all="ignore"):
            new = _strang(vals, ksq, h, pm1, mask)
        if not np.all(np.isfinite(new)):
            outcome = Outcome.CORRUPTED
            reason = f"non-finite values at t={t + h:.6g}"
            break
        vals = new
        t = next_record if landing else t + h
        steps += 1
        if grad0 > 0:
            ratio = math.sqrt(_gradient_norm_sq(vals, grid)) / grad0
            if ratio > cfg.blowup_guard:
                outcome = Outcome.BLOWUP_DETECTED
                reason = f"gradient ratio {ratio:.3g} exceeded {cfg.blowup_guard}"
        if outcome is Outcome.REACHED_HORIZON and cfg.resolution_guard > 0:
            sup = float(np.max(np.abs(vals)))
            if sup > 0 and sup ** (-pm1 / 2.0) < cfg.resolution_guard * dx:
                outcome = Outcome.BLOWUP_DETECTED
                reason = "nonlinear length scale below grid resolution"
        if outcome is not Outcome.REACHED_HORIZON:
            record(t, vals)
            break
        if landing:
            record(t, vals)
            k_next += 1

    series.meta.update(steps=steps, outcome=outcome.value, reason=reason, t_final=t)
    return series, ComplexField(grid, vals, t), outcome


def time_reversed(u: ComplexField) -> ComplexField:
    """Complex conjugation maps forward solutions to backward ones."""
    return u.with_values(np.conj(u.values))


# ---------------------------------------------------------------------------
# scattering diagnostics


def h1_distance(a: ComplexField, b: ComplexField) -> float:
    diff = np.fft.fftn(a.values - b.values)
    return math.sqrt(a.grid.spectral_integrate((1.0 + a.grid.k_squared) * np.abs(diff) ** 2))


def pullback_increments(fields: Iterable[ComplexField]) -> np.ndarray:
    """H¹ norms of ψ(t_{k+1}) - ψ(t_k) for consecutive fields."""
    psis = [free_pullback(f) for f in fields]
    return np.array([h1_distance(b, a) for a, b in zip(psis[:-1], psis[1:])])


def decay_exponent(params: PhysicalParams) -> float:
    return params.d * (params.p - 1.0) / (2.0 * (params.p + 1.0))


def decay_product(u: ComplexField, params: PhysicalParams) -> float:
    """‖u(t)‖_{p+1} t^{d(p-1)/(2(p+1))} at t = the field's time tag."""
    lp = potential_norm(u, params) ** (1.0 / (params.p + 1.0))
    return lp * abs(u.time_tag) ** decay_exponent(params)


def field_collector(every: int = 1) -> tuple:
    """Observer storing a copy of every ``every``-th recorded field."""
    store: list = []
    counter = {"n": 0}

    def obs(t: float, f: ComplexField) -> dict:
        if counter["n"] % every == 0:
            store.append(f)
        counter["n"] += 1
        return {}

    return obs, store
