"""Model parameters, sampled fields, conserved quantities and the threshold logic.

The focusing equation is ``i u_t + Δu + |u|^{p-1} u = 0`` on a periodic box
``[-L, L)^d`` standing in for R^d.  Every spatial derivative is spectral and
every integral is the rectangle rule on the uniform grid.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    EnergyCriticalOrSuper,
    InconsistentThreshold,
    NegativeEnergy,
    NonFiniteField,
    ParamMismatch,
    SubcriticalOrCritical,
    ZeroMass,
)

if TYPE_CHECKING:
    from .ground_state import GroundStateProfile

DEFAULT_TOL = 1e-6
EXPONENT_EPS = 1e-12


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class PhysicalParams:
    d: int
    p: float
    s: float
    alpha: float
    beta: float
    mu: int = 1

    @property
    def alpha_sq(self) -> float:
        return self.d * (self.p - 1.0) / 4.0

    @property
    def key(self) -> tuple:
        return (self.d, self.p)


def derive_params(d: int, p: float) -> PhysicalParams:
    """Build the parameter set for ``NLS_p(R^d)``.

    >>> derive_params(3, 3).s
    0.5
    """
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d!r}")
    d = int(d)
    p = float(p)
    if not p > 1.0:
        raise ValueError(f"nonlinearity power must exceed 1, got {p}")
    s = d / 2.0 - 2.0 / (p - 1.0)
    # rational p such as 7/3 arrives rounded; treat s within EXPONENT_EPS of 0 or 1 as critical
    if s <= EXPONENT_EPS:
        raise SubcriticalOrCritical(f"s = {s:.6g} <= 0 for d={d}, p={p}")
    if s >= 1.0 - EXPONENT_EPS:
        raise EnergyCriticalOrSuper(f"s = {s:.6g} >= 1 for d={d}, p={p}")
    alpha = math.sqrt(d * (p - 1.0)) / 2.0
    beta = 1.0 - (d - 2) * (p - 1.0) / 4.0
    return PhysicalParams(d=d, p=p, s=s, alpha=alpha, beta=beta)


# ---------------------------------------------------------------------------
# grids and fields


@dataclass(frozen=True)
class Grid:
    dims: tuple
    extent: tuple

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        extent = tuple(float(v) for v in self.extent)
        if len(dims) != len(extent) or not dims:
            raise ValueError("dims and extent must be non-empty and of equal length")
        for n in dims:
            if n < 8 or n % 2:
                raise ValueError(f"sample counts must be even and >= 8, got {n}")
        for v in extent:
            if not v > 0:
                raise ValueError(f"half-width must be positive, got {v}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "extent", extent)

    @classmethod
    def cube(cls, d: int, n: int, half_width: float) -> "Grid":
        return cls((n,) * d, (half_width,) * d)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def spacing(self) -> tuple:
        return tuple(2.0 * L / n for n, L in zip(self.dims, self.extent))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @cached_property
    def axes(self) -> tuple:
        return tuple(-L + np.arange(n) * h for n, L, h in zip(self.dims, self.extent, self.spacing))

    @cached_property
    def coords(self) -> tuple:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c**2 for c in self.coords))

    @cached_property
    def wavenumbers(self) -> tuple:
        """Per-axis angular wavenumbers, broadcastable against the field shape."""
        out = []
        for i, (n, h) in enumerate(zip(self.dims, self.spacing)):
            k = 2.0 * np.pi * np.fft.fftfreq(n, h)
            shape = [1] * self.ndim
            shape[i] = n
            out.append(k.reshape(shape))
        return tuple(out)

    @cached_property
    def derivative_wavenumbers(self) -> tuple:
        # Nyquist mode zeroed so that first derivatives of real fields stay real.
        out = []
        for i, k in enumerate(self.wavenumbers):
            k = k.copy()
            flat = k.reshape(-1)
            flat[self.dims[i] // 2] = 0.0
            out.append(k)
        return tuple(out)

    @cached_property
    def k_squared(self) -> np.ndarray:
        return sum(k**2 for k in self.wavenumbers)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values) * self.cell_volume)

    def spectral_integrate(self, values_hat_sq: np.ndarray) -> float:
        """Integral of |f|^2 given |f_hat|^2 of the unnormalized FFT."""
        return float(np.sum(values_hat_sq) * self.cell_volume / self.size)


@dataclass(frozen=True, eq=False)
class ComplexField:
    grid: Grid
    values: np.ndarray
    time_tag: float = 0.0

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.complex128)
        if vals.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} samples, got {vals.size}")
        vals = vals.reshape(self.grid.dims)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "time_tag", float(self.time_tag))

    @classmethod
    def from_function(cls, grid: Grid, fn, time_tag: float = 0.0) -> "ComplexField":
        return cls(grid, fn(*grid.coords), time_tag)

    def with_values(self, values, time_tag: Optional[float] = None) -> "ComplexField":
        return ComplexField(self.grid, values, self.time_tag if time_tag is None else time_tag)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def check_finite(self) -> "ComplexField":
        if not self.is_finite():
            raise NonFiniteField(f"field at t={self.time_tag} contains NaN or Inf")
        return self

    def __mul__(self, c) -> "ComplexField":
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def __add__(self, other: "ComplexField") -> "ComplexField":
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "ComplexField") -> "ComplexField":
        return self.with_values(self.values - other.values)

    def conj(self) -> "ComplexField":
        return self.with_values(np.conj(self.values))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


# ---------------------------------------------------------------------------
# spectral calculus


def fft(u: ComplexField) -> np.ndarray:
    return np.fft.fftn(u.values)


def gradient(u: ComplexField) -> list:
    """Spectral partial derivatives, one complex array per axis."""
    uh = fft(u)
    return [np.fft.ifftn(1j * k * uh) for k in u.grid.derivative_wavenumbers]


def grad_l2_sq(u: ComplexField) -> float:
    """||∇u||² from the physical-space spectral gradient."""
    return sum(u.grid.integrate(np.abs(g) ** 2) for g in gradient(u))


def grad_l2_sq_plancherel(u: ComplexField) -> float:
    uh2 = np.abs(fft(u)) ** 2
    ksq = sum(k**2 for k in u.grid.derivative_wavenumbers)
    return u.grid.spectral_integrate(ksq * uh2)


def h1_norm(u: ComplexField) -> float:
    uh2 = np.abs(fft(u)) ** 2
    return math.sqrt(u.grid.spectral_integrate((1.0 + u.grid.k_squared) * uh2))


# ---------------------------------------------------------------------------
# conserved quantities


def mass(u: ComplexField) -> float:
    u.check_finite()
    return u.grid.integrate(np.abs(u.values) ** 2)


def potential_norm(u: ComplexField, params: PhysicalParams) -> float:
    """||u||_{p+1}^{p+1}."""
    return u.grid.integrate(np.abs(u.values) ** (params.p + 1.0))


def energy(u: ComplexField, params: PhysicalParams) -> float:
    u.check_finite()
    return 0.5 * grad_l2_sq(u) - potential_norm(u, params) / (params.p + 1.0)


def energy_plancherel(u: ComplexField, params: PhysicalParams) -> float:
    u.check_finite()
    return 0.5 * grad_l2_sq_plancherel(u) - potential_norm(u, params) / (params.p + 1.0)


def momentum(u: ComplexField) -> np.ndarray:
    u.check_finite()
    conj = np.conj(u.values)
    return np.array([u.grid.integrate(np.imag(conj * g)) for g in gradient(u)])


# ---------------------------------------------------------------------------
# renormalized quantities


def _pow(x: float, a: float) -> float:
    """x**a for x >= 0 through exp/log; exact zero stays zero."""
    if x == 0.0:
        return 0.0
    if x < 0.0:
        raise ValueError(f"fractional power of negative number {x}")
    return math.exp(a * math.log(x))


@dataclass(frozen=True)
class InvariantReport:
    mass: float
    energy: float
    momentum: tuple
    renorm_gradient: float
    renorm_momentum: float
    renorm_mass_energy: Optional[float]
    gradient_l2_sq: float
    potential_norm: float

    @property
    def momentum_norm(self) -> float:
        return float(np.linalg.norm(self.momentum))


def _soliton_scale(ground: "GroundStateProfile") -> float:
    """||u_Q||^{1-s} ||∇u_Q||^s."""
    s = ground.params.s
    return _pow(ground.norms.l2_uQ, 1.0 - s) * _pow(ground.norms.grad_l2_uQ, s)


def invariant_report(u: ComplexField, params: PhysicalParams, ground: "GroundStateProfile") -> InvariantReport:
    if ground.params.key != params.key:
        raise ParamMismatch(f"ground state computed for {ground.params.key}, field uses {params.key}")
    s = params.s
    M = mass(u)
    K = grad_l2_sq(u)
    V = potential_norm(u, params)
    E = 0.5 * K - V / (params.p + 1.0)
    P = momentum(u)
    Pn = float(np.linalg.norm(P))
    scale = _soliton_scale(ground)
    G = _pow(M, (1.0 - s) / 2.0) * _pow(K, s / 2.0) / scale
    # ||u||^{1-2s} = M^{(1-2s)/2}; zero mass only occurs with zero momentum
    Pr = _pow(Pn, s) * (_pow(M, (1.0 - 2.0 * s) / 2.0) if M > 0 else 0.0) / scale
    if E >= 0.0:
        ME = _pow(M, 1.0 - s) * _pow(E, s) / (_pow(ground.mass_uQ, 1.0 - s) * _pow(ground.energy_uQ, s))
    else:
        ME = None
    return InvariantReport(
        mass=M,
        energy=E,
        momentum=tuple(float(x) for x in P),
        renorm_gradient=G,
        renorm_momentum=Pr,
        renorm_mass_energy=ME,
        gradient_l2_sq=K,
        potential_norm=V,
    )


# ---------------------------------------------------------------------------
# Galilean reduction


def galilean_boost(u: ComplexField, xi: Sequence[float]) -> ComplexField:
    """w(x) = e^{i x·ξ} u(x) at the field's time (t = 0 frame)."""
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.size != u.grid.ndim:
        raise ValueError(f"boost needs {u.grid.ndim} components, got {xi.size}")
    phase = sum(c * x for c, x in zip(xi, u.grid.coords))
    return u.with_values(np.exp(1j * phase) * u.values)


def zero_momentum_boost(u: ComplexField) -> tuple:
    M = mass(u)
    if M <= 0.0:
        raise ZeroMass("cannot remove momentum of a zero-mass field")
    xi0 = -momentum(u) / M
    return galilean_boost(u, xi0), xi0


# ---------------------------------------------------------------------------
# threshold geometry


def line_factor(lam: float, params: PhysicalParams) -> float:
    """(d/2s) λ^{2/s} (1 - λ^{p-1}/α²), written so that λ = 1 gives exactly 1.

    Uses the identity d/(2s) = α²/(α² - 1).
    """
    a2 = params.alpha_sq
    return _pow(lam, 2.0 / params.s) * (a2 - _pow(lam, params.p - 1.0)) / (a2 - 1.0)


class ThresholdBounds(NamedTuple):
    lower: float
    value: float
    upper: float


def _bounds_from(x_grad: float, me_pow: float, params: PhysicalParams) -> ThresholdBounds:
    # x_grad is G^{2/s}; G^{p-1} = x_grad^{s(p-1)/2}
    a2 = params.alpha_sq
    g_p = _pow(x_grad, params.s * (params.p - 1.0) / 2.0)
    upper = a2 / (a2 - 1.0) * x_grad
    lower = x_grad * (a2 - g_p) / (a2 - 1.0)
    return ThresholdBounds(lower, me_pow, upper)


def _ordered(b: ThresholdBounds, tol: float) -> bool:
    scale = max(1.0, abs(b.lower), abs(b.upper))
    return b.lower - tol * scale <= b.value <= b.upper + tol * scale


def threshold_bounds(report: InvariantReport, params: PhysicalParams, tol: float = DEFAULT_TOL) -> ThresholdBounds:
    """(lower, ℳℰ^{1/s}, upper) of the two-sided bound; raises if out of order."""
    if report.renorm_mass_energy is None or report.energy < 0:
        raise NegativeEnergy("mass-energy ratio is undefined for E < 0")
    x = _pow(report.renorm_gradient, 2.0 / params.s)
    b = _bounds_from(x, _pow(report.renorm_mass_energy, 1.0 / params.s), params)
    if not _ordered(b, tol):
        raise InconsistentThreshold(f"bound violated: {b}")
    return b


class Region(str, enum.Enum):
    SCATTER = "ScatterRegion"
    BLOWUP_FINITE_VARIANCE_OR_RADIAL = "BlowupRegionFiniteVarianceOrRadial"
    BLOWUP_WEAK = "BlowupRegionWeak"
    NEGATIVE_ENERGY_BLOWUP = "NegativeEnergyBlowup"
    AT_THRESHOLD = "AtThreshold"
    ABOVE_THRESHOLD = "AboveThreshold"
    FORBIDDEN_INCONSISTENT = "ForbiddenInconsistent"

    @property
    def is_blowup(self) -> bool:
        return self in (
            Region.BLOWUP_FINITE_VARIANCE_OR_RADIAL,
            Region.BLOWUP_WEAK,
            Region.NEGATIVE_ENERGY_BLOWUP,
        )


@dataclass(frozen=True)
class Classification:
    region: Region
    me_value: Optional[float]
    grad_value: float
    used_galilean: bool
    caveats: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "region": self.region.value,
            "me_value": self.me_value,
            "grad_value": self.grad_value,
            "used_galilean": self.used_galilean,
            "caveats": list(self.caveats),
        }


def classify(
    report: InvariantReport,
    params: PhysicalParams,
    finite_variance_or_radial: bool = True,
    tol: float = DEFAULT_TOL,
) -> Classification:
    s, d = params.s, params.d
    P2 = _pow(report.renorm_momentum, 2.0 / s)
    grad_value = _pow(report.renorm_gradient, 2.0 / s) - P2
    used_galilean = report.momentum_norm > 0.0
    caveats = []
    if d == 2 and finite_variance_or_radial and not (3.0 < params.p <= 5.0):
        caveats.append("d=2 radial blowup statement only covers 3 < p <= 5")

    if report.renorm_mass_energy is None:
        return Classification(Region.NEGATIVE_ENERGY_BLOWUP, None, grad_value, used_galilean, tuple(caveats))
    me_value = _pow(report.renorm_mass_energy, 1.0 / s) - d / (2.0 * s) * P2
    if me_value < 0.0:
        # momentum-reduced energy is negative
        return Classification(Region.NEGATIVE_ENERGY_BLOWUP, me_value, grad_value, used_galilean, tuple(caveats))

    b = _bounds_from(max(grad_value, 0.0), me_value, params)
    if not _ordered(b, tol):
        region = Region.FORBIDDEN_INCONSISTENT
    elif abs(me_value - 1.0) <= tol:
        region = Region.AT_THRESHOLD
    elif me_value > 1.0:
        region = Region.ABOVE_THRESHOLD
    elif grad_value < 1.0 - tol:
        region = Region.SCATTER
    elif grad_value > 1.0 + tol:
        region = (
            Region.BLOWUP_FINITE_VARIANCE_OR_RADIAL if finite_variance_or_radial else Region.BLOWUP_WEAK
        )
    else:
        # below the threshold the gradient cannot sit on 1
        region = Region.FORBIDDEN_INCONSISTENT
    return Classification(region, me_value, grad_value, used_galilean, tuple(caveats))
