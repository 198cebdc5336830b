"""Exact arithmetic for Strichartz exponent pairs and Hölder splits.

All exponents are :class:`fractions.Fraction` values or the sentinel
:data:`INF`; floats are rejected at the boundary so every comparison is exact.

Window endpoints written as ``a⁺`` or ``a⁻`` ("slightly larger/smaller than
a") are modelled as strict inequalities against ``a``.  Consequently the
conjugate ``(a⁺)'`` of such an endpoint is treated as ``+∞`` approached from
below.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Union

from .errors import DegenerateExponent, EnergyCriticalOrSuper, SubcriticalOrCritical


class _Infinity:
    """The value +∞ for exponents; 1/∞ = 0."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "INF"

    __str__ = lambda self: "inf"

    def __eq__(self, other) -> bool:
        return other is self

    def __hash__(self) -> int:
        return hash("nlslab-infinity")

    def __lt__(self, other) -> bool:
        return False

    def __le__(self, other) -> bool:
        return other is self

    def __gt__(self, other) -> bool:
        return other is not self

    def __ge__(self, other) -> bool:
        return True

    def __reduce__(self):
        return (_Infinity, ())


INF = _Infinity()
Exponent = Union[Fraction, _Infinity]


def as_rational(x) -> Exponent:
    """Exact conversion; floats are refused so no rounding sneaks in."""
    if x is INF:
        return INF
    if isinstance(x, bool):
        raise TypeError("booleans are not exponents")
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        if x.strip().lower() in ("inf", "infinity", "∞"):
            return INF
        return Fraction(x.strip())
    raise TypeError(f"exact rational required, got {type(x).__name__} {x!r}")


def recip(x: Exponent) -> Fraction:
    if x is INF:
        return Fraction(0)
    if x == 0:
        raise DegenerateExponent("reciprocal of zero exponent")
    return 1 / x


def from_recip(y: Fraction) -> Exponent:
    return INF if y == 0 else 1 / y


def conjugate(x: Exponent) -> Exponent:
    """Hölder conjugate x' with 1/x + 1/x' = 1."""
    return from_recip(1 - recip(x))


def _lt(a: Exponent, b: Exponent) -> bool:
    if a is INF:
        return False
    if b is INF:
        return True
    return a < b


def _le(a: Exponent, b: Exponent) -> bool:
    return a == b or _lt(a, b)


@dataclass(frozen=True)
class ExponentPair:
    q: Exponent
    r: Exponent

    def __post_init__(self):
        q, r = as_rational(self.q), as_rational(self.r)
        for name, v in (("q", q), ("r", r)):
            if v is not INF and v < 1:
                raise ValueError(f"exponent {name} = {v} is below 1")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)

    def conjugate(self) -> "ExponentPair":
        return ExponentPair(conjugate(self.q), conjugate(self.r))

    def as_strings(self) -> tuple:
        return (str(self.q), str(self.r))

    def __str__(self) -> str:
        return f"({self.q}, {self.r})"


# ---------------------------------------------------------------------------
# parameters


def exact_s(d: int, p) -> Fraction:
    """s = d/2 - 2/(p-1) as a rational; p must be exact."""
    p = as_rational(p)
    if p is INF or p <= 1:
        raise ValueError(f"need a finite p > 1, got {p}")
    s = Fraction(d, 2) - 2 / (p - 1)
    if s <= 0:
        raise SubcriticalOrCritical(f"s = {s} <= 0")
    if s >= 1:
        raise EnergyCriticalOrSuper(f"s = {s} >= 1")
    return s


# ---------------------------------------------------------------------------
# classes of pairs


def _scaling(pair: ExponentPair, d: int) -> Fraction:
    return 2 * recip(pair.q) + d * recip(pair.r)


def is_L2_admissible(pair: ExponentPair, d: int) -> bool:
    if _scaling(pair, d) != Fraction(d, 2):
        return False
    if not (_le(2, pair.q) and _le(2, pair.r)):
        return False
    return not (pair.q == 2 and pair.r is INF and d == 2)


def hs_window(d: int, s: Fraction) -> dict:
    """Window of the Ḣ^s Strichartz space as (lo, lo_strict, hi, hi_strict) per exponent."""
    s = Fraction(s)
    if d >= 3:
        return {
            "q": (Fraction(2) / (1 - s), True, INF, False),
            "r": (Fraction(2 * d) / (d - 2 * s), False, Fraction(2 * d, d - 2), True),
        }
    if d == 2:
        return {
            "q": (Fraction(2) / (1 - s), True, INF, False),
            "r": (Fraction(2) / (1 - s), False, INF, True),
        }
    if d == 1:
        if s >= Fraction(1, 2):
            raise ValueError("the one-dimensional window needs s < 1/2")
        return {
            "q": (Fraction(4) / (1 - 2 * s), False, INF, False),
            # the open question of whether r = ∞ is attained: treated as attained
            "r": (Fraction(2) / (1 - 2 * s), False, INF, False),
        }
    raise ValueError(f"unsupported dimension {d}")


def hminus_window(d: int, s: Fraction) -> dict:
    s = Fraction(s)
    q = (Fraction(2) / (1 + s), True, 1 / s, True)
    if d >= 3:
        return {"q": q, "r": (Fraction(2 * d) / (d - 2 * s), True, Fraction(2 * d, d - 2), True)}
    if d == 2:
        return {"q": q, "r": (Fraction(2) / (1 - s), True, INF, True)}
    if d == 1:
        return {"q": (Fraction(2) / (1 + 2 * s), False, 1 / s, True), "r": (Fraction(2) / (1 - s), True, INF, False)}
    raise ValueError(f"unsupported dimension {d}")


def _in_range(x: Exponent, bounds: tuple) -> bool:
    lo, lo_strict, hi, hi_strict = bounds
    above = _lt(lo, x) if lo_strict else _le(lo, x)
    below = _lt(x, hi) if hi_strict else _le(x, hi)
    return above and below


def in_window(pair: ExponentPair, window: dict) -> bool:
    return _in_range(pair.q, window["q"]) and _in_range(pair.r, window["r"])


def is_Hs_admissible(pair: ExponentPair, d: int, s, window: bool = True) -> bool:
    """2/q + d/r = d/2 - s with the admissibility ranges and, optionally, the Strichartz window."""
    s = as_rational(s)
    if _scaling(pair, d) != Fraction(d, 2) - s:
        return False
    if not (_le(2, pair.q) and _le(2, pair.r)):
        return False
    if pair.q == 2 and pair.r is INF and d == 2:
        return False
    if window and s != 0:
        return in_window(pair, hs_window(d, s))
    return True


def is_Hminus_s_admissible(pair: ExponentPair, d: int, s) -> bool:
    """2/q + d/r = d/2 + s inside the dual Strichartz window (q may drop below 2 there)."""
    s = as_rational(s)
    if _scaling(pair, d) != Fraction(d, 2) + s:
        return False
    return in_window(pair, hminus_window(d, s))


def is_L2_dual_admissible(dual: ExponentPair, d: int) -> bool:
    """(q', r') whose conjugate pair is L²-admissible."""
    return is_L2_admissible(dual.conjugate(), d)


def is_Hminus_s_dual(dual: ExponentPair, d: int, s) -> bool:
    return is_Hminus_s_admissible(dual.conjugate(), d, s)


def is_acceptable(pair: ExponentPair, d: int) -> bool:
    """d/2-acceptable: 1/q < d(1/2 - 1/r), or the pair (∞, 2)."""
    if pair.q is INF and pair.r == 2:
        return True
    return recip(pair.q) < d * (Fraction(1, 2) - recip(pair.r))


# ---------------------------------------------------------------------------
# Hölder splits


def holder_balance(target: Exponent, parts: Iterable[tuple]) -> tuple:
    """(Σ mᵢ/eᵢ, 1/target) without any range checks."""
    total = sum((as_rational(m) * recip(as_rational(e)) for e, m in parts), Fraction(0))
    return total, recip(as_rational(target))


def verify_holder_split(target_dual, parts: Iterable[tuple]) -> bool:
    """True iff Σ multiplicityᵢ / exponentᵢ = 1 / target_dual exactly."""
    parts = [(as_rational(e), as_rational(m)) for e, m in parts]
    for e, _ in parts:
        if e is not INF and e < 1:
            raise ValueError(f"Hölder exponent {e} below 1")
    total, want = holder_balance(target_dual, parts)
    return total == want


# ---------------------------------------------------------------------------
# catalogue of named pairs


def _div(num: Fraction, den: Fraction, what: str) -> Fraction:
    if den == 0:
        raise DegenerateExponent(f"vanishing denominator in {what}")
    return Fraction(num) / Fraction(den)


@dataclass
class CatalogEntry:
    name: str
    claimed: str
    q: Fraction
    r: Fraction
    passed: bool
    checks: dict = field(default_factory=dict)
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "claimed": self.claimed,
            "q": str(self.q),
            "r": str(self.r),
            "passed": self.passed,
            "checks": self.checks,
            "note": self.note,
        }


@dataclass
class SplitEntry:
    name: str
    target: Fraction
    parts: list
    balanced: bool
    exponents_valid: bool
    lhs: Fraction
    rhs: Fraction

    @property
    def passed(self) -> bool:
        return self.balanced and self.exponents_valid

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "target": str(self.target),
            "parts": [[str(e), str(m)] for e, m in self.parts],
            "balanced": self.balanced,
            "exponents_valid": self.exponents_valid,
            "sum_of_reciprocals": str(self.lhs),
            "target_reciprocal": str(self.rhs),
            "passed": self.passed,
        }


@dataclass
class CatalogReport:
    d: int
    p: Fraction
    s: Fraction
    pairs: list
    splits: list
    flags: list = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(e.passed for e in self.pairs) and all(e.passed for e in self.splits)

    def failures(self) -> list:
        return [e.name for e in self.pairs if not e.passed] + [e.name for e in self.splits if not e.passed]

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "p": str(self.p),
            "s": str(self.s),
            "all_passed": self.all_passed,
            "pairs": [e.to_dict() for e in self.pairs],
            "splits": [e.to_dict() for e in self.splits],
            "flags": self.flags,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        lines = [f"d={self.d} p={self.p} s={self.s}"]
        w = max(len(e.name) for e in self.pairs + self.splits)
        for e in self.pairs:
            mark = "PASS" if e.passed else "FAIL"
            extra = f"  [{e.note}]" if e.note else ""
            lines.append(f"  {mark}  {e.name:<{w}}  {e.claimed:<14} ({e.q}, {e.r}){extra}")
        for e in self.splits:
            mark = "PASS" if e.passed else "FAIL"
            terms = " + ".join(f"{m}/{_paren(x)}" for x, m in e.parts)
            bad = "" if e.exponents_valid else "  [exponent below 1]"
            lines.append(f"  {mark}  {e.name:<{w}}  split          1/{_paren(e.target)} = {e.rhs}; {terms} = {e.lhs}{bad}")
        for f in self.flags:
            lines.append(f"  note: {f}")
        return "\n".join(lines)


def _paren(x) -> str:
    text = str(x)
    return f"({text})" if "/" in text else text


_CLASS_LABEL = {
    "L2": "L2-admissible",
    "Hs": "Hs-admissible",
    "L2dual": "L2-dual",
    "Hminus": "H^-s dual",
}


def _certify(name: str, claimed: str, q: Fraction, r: Fraction, d: int, s: Fraction) -> CatalogEntry:
    checks = {}
    note = ""
    try:
        pair = ExponentPair(q, r)
    except ValueError as exc:
        return CatalogEntry(name, _CLASS_LABEL[claimed], q, r, False, {"exponents_valid": False}, str(exc))
    checks["exponents_valid"] = True
    if claimed == "L2":
        checks["scaling"] = _scaling(pair, d) == Fraction(d, 2)
        ok = is_L2_admissible(pair, d)
    elif claimed == "Hs":
        checks["scaling"] = _scaling(pair, d) == Fraction(d, 2) - s
        checks["window"] = in_window(pair, hs_window(d, s))
        ok = is_Hs_admissible(pair, d, s)
    elif claimed == "L2dual":
        try:
            conj = pair.conjugate()
        except ValueError as exc:
            return CatalogEntry(name, _CLASS_LABEL[claimed], q, r, False, checks, f"conjugate invalid: {exc}")
        checks["scaling"] = _scaling(conj, d) == Fraction(d, 2)
        ok = is_L2_admissible(conj, d)
        checks["acceptable"] = is_acceptable(conj, d)
        note = f"conjugate ({conj.q}, {conj.r})"
    elif claimed == "Hminus":
        try:
            conj = pair.conjugate()
        except ValueError as exc:
            return CatalogEntry(name, _CLASS_LABEL[claimed], q, r, False, checks, f"conjugate invalid: {exc}")
        checks["scaling"] = _scaling(conj, d) == Fraction(d, 2) + s
        checks["window"] = in_window(conj, hminus_window(d, s))
        ok = is_Hminus_s_admissible(conj, d, s)
        note = f"conjugate ({conj.q}, {conj.r})"
    else:
        raise ValueError(claimed)
    return CatalogEntry(name, _CLASS_LABEL[claimed], q, r, bool(ok), checks, note)


def named_pairs(d: int, p) -> list:
    """(name, claimed class, q, r) for each pair appearing in the local theory."""
    p = as_rational(p)
    s = exact_s(d, p)
    F = Fraction
    out = [
        ("strichartz_L2", "L2", _div(d * p, 2 * s, "dp/2s"), _div(2 * d * d * p, d * d * p - 8 * s, "2d²p/(d²p-8s)")),
        ("strichartz_Hs", "Hs", _div(d * p, 2 * s, "dp/2s"), _div(d * d * p * (p - 1), 2 * (d + 4), "d²p(p-1)/(2(d+4))")),
        ("dual_L2", "L2dual", _div(F(d), 2 * s, "d/2s"), _div(2 * d * d * (p - 1), d * d * (p - 1) + 16, "2d²(p-1)/(d²(p-1)+16)")),
        ("perturb_Hs_6", "Hs", _div(F(6), 1 - s, "6/(1-s)"), _div(F(6 * d), 3 * d - 4 * s - 2, "6d/(3d-4s-2)")),
        ("perturb_Hs_4", "Hs", _div(F(4), 1 - s, "4/(1-s)"), _div(F(2 * d), d - s - 1, "2d/(d-s-1)")),
        ("gradient_L2", "L2", _div(F(d), s, "d/s"), _div(F(2 * d * d), d * d - 4 * s, "2d²/(d²-4s)")),
        (
            "dual_Hminus_s",
            "Hminus",
            _div(12 * (d - 2 * s), (8 + 3 * d - 6 * s) * (1 - s), "q' of the H^-s pair"),
            _div(6 * d * (d - 2 * s), 3 * (d * d + 2 * s * s) + 9 * d * (1 - s) - 2 * (5 * s + 4), "r' of the H^-s pair"),
        ),
    ]
    return out


def named_splits(d: int, p) -> list:
    """(name, target exponent, parts) for the Hölder splits used with the pairs above."""
    p = as_rational(p)
    s = exact_s(d, p)
    pairs = {name: (q, r) for name, _, q, r in named_pairs(d, p)}
    q1, r1 = pairs["strichartz_L2"]
    q2, r2 = pairs["strichartz_Hs"]
    qd, rd = pairs["dual_L2"]
    q6, r6 = pairs["perturb_Hs_6"]
    q4, r4 = pairs["perturb_Hs_4"]
    qm, rm = pairs["dual_Hminus_s"]
    return [
        ("contraction_space", rd, [(r1, Fraction(1)), (r2, p - 1)]),
        ("contraction_time", qd, [(q1, Fraction(1)), (q2, p - 1)]),
        ("perturbation_space", rm, [(r4, Fraction(1)), (r6, p - 1)]),
        ("perturbation_time", qm, [(q4, Fraction(1)), (q6, p - 1)]),
    ]


def catalog_paper_pairs(d: int, p) -> CatalogReport:
    """Certify every named pair against its claimed class and check each split."""
    p = as_rational(p)
    s = exact_s(d, p)
    entries = [_certify(name, cls, q, r, d, s) for name, cls, q, r in named_pairs(d, p)]
    splits = []
    for name, target, parts in named_splits(d, p):
        lhs, rhs = holder_balance(target, parts)
        valid = all(e is INF or e >= 1 for e, _ in parts) and (target is INF or target >= 1)
        splits.append(SplitEntry(name, target, parts, lhs == rhs, valid, lhs, rhs))
    flags = []
    if d == 1:
        flags.append("r = inf treated as attained in the one-dimensional Hs window")
    return CatalogReport(d=d, p=p, s=s, pairs=entries, splits=splits, flags=flags)


# ---------------------------------------------------------------------------
# lattice check


def small_rationals(limit: int = 20, max_den: int = 1) -> list:
    vals = {Fraction(n, m) for m in range(1, max_den + 1) for n in range(m, limit * m + 1)}
    return sorted(vals) + [INF]


def lattice_counterexamples(d: int, limit: int = 20, max_den: int = 1) -> list:
    """Pairs on the lattice that are L²-admissible but not d/2-acceptable."""
    vals = small_rationals(limit, max_den)
    bad = []
    for q in vals:
        for r in vals:
            pair = ExponentPair(q, r)
            if is_L2_admissible(pair, d) and not is_acceptable(pair, d):
                bad.append(pair)
    return bad


def lattice_admissible_count(d: int, limit: int = 20, max_den: int = 1) -> int:
    vals = small_rationals(limit, max_den)
    return sum(is_L2_admissible(ExponentPair(q, r), d) for q in vals for r in vals)
