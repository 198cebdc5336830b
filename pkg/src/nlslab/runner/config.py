"""YAML experiment configuration: parsing, validation, overrides and hashing."""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional

import yaml

from ..errors import NLSError, ParseError, ValidationError
from ..evolution import PropagatorConfig
from ..model import PhysicalParams, derive_params

INITIAL_KINDS = ("soliton_multiple", "gaussian", "from_snapshot")

ALIASES = {
    "c": "initial_data.c",
    "dt": "propagator.dt",
    "t_end": "propagator.t_end",
    "N": "grid.N",
    "L": "grid.L",
    "d": "params.d",
    "p": "params.p",
    "seed": "seed",
}

DEFAULTS: dict = {
    "name": "run",
    "params": {"d": 1, "p": 7},
    "grid": {"N": 2048, "L": 20.0},
    "initial_data": {
        "kind": "soliton_multiple",
        "c": 1.0,
        "amplitude": 1.0,
        "width": 1.0,
        "phase_frequency": None,
        "path": None,
    },
    "propagator": {
        "dt": 1e-3,
        "t_end": 1.0,
        "adapt": True,
        "blowup_guard": 10.0,
        "resolution_guard": 0.5,
        "snapshot_every": 100,
        "dealias": False,
    },
    "diagnostics": {
        "virial_radii": [],
        "snapshot_cadence": 0,
        "gbg_window": None,
        "modulation_fit": False,
        "kappa": None,
    },
    "ground_state": {"tol": 1e-12, "max_iter": 500, "method": "auto"},
    "seed": 0,
}

# fields that do not change what is computed
NON_SEMANTIC = ("name",)


@dataclass(frozen=True)
class ParamsConfig:
    d: int
    p: float
    p_text: str

    def physical(self) -> PhysicalParams:
        return derive_params(self.d, self.p)


@dataclass(frozen=True)
class GridConfig:
    N: int
    L: float


@dataclass(frozen=True)
class InitialData:
    kind: str
    c: float = 1.0
    amplitude: float = 1.0
    width: float = 1.0
    phase_frequency: Optional[tuple] = None
    path: Optional[str] = None


@dataclass(frozen=True)
class DiagnosticsConfig:
    virial_radii: tuple = ()
    snapshot_cadence: int = 0
    gbg_window: Optional[tuple] = None
    modulation_fit: bool = False
    kappa: Optional[float] = None


@dataclass(frozen=True)
class GroundStateConfig:
    tol: float = 1e-12
    max_iter: int = 500
    method: str = "auto"


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    params: ParamsConfig
    grid: GridConfig
    initial_data: InitialData
    propagator: PropagatorConfig
    diagnostics: DiagnosticsConfig
    ground_state: GroundStateConfig
    seed: int
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def config_hash(self) -> str:
        return config_hash(self.raw)

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        for key, value in overrides.items():
            set_dotted(raw, key, value)
        return validate(raw, base_dir=None)


# ---------------------------------------------------------------------------
# raw dictionaries


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_key(key: str) -> str:
    return ALIASES.get(key, key)


def set_dotted(raw: dict, key: str, value: Any) -> None:
    parts = resolve_key(key).split(".")
    node = raw
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            node[part] = {}
        node = node[part]
    node[parts[-1]] = value


def get_dotted(raw: dict, key: str) -> Any:
    node = raw
    for part in resolve_key(key).split("."):
        node = node[part]
    return node


def parse_override(text: str) -> tuple:
    """'key=value' with the value read as YAML (so numbers and lists work)."""
    if "=" not in text:
        raise ParseError(f"override {text!r} is not of the form key=value")
    key, _, value = text.partition("=")
    try:
        parsed = yaml.safe_load(value) if value.strip() else None
    except yaml.YAMLError as exc:
        raise ParseError(f"cannot parse override value {value!r}: {exc}") from exc
    return key.strip(), parsed


def canonical_json(raw: dict) -> str:
    clean = {k: v for k, v in raw.items() if k not in NON_SEMANTIC}
    return json.dumps(clean, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(raw: dict) -> str:
    return hashlib.sha256(canonical_json(raw).encode()).hexdigest()


# ---------------------------------------------------------------------------
# loading


def parse_yaml(text: str) -> dict:
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ParseError(f"malformed configuration: {exc.problem or exc}", line, col) from exc
    except yaml.YAMLError as exc:
        raise ParseError(f"malformed configuration: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ParseError("top level of the configuration must be a mapping", 1, 1)
    return data


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    raw = parse_yaml(text)
    for key, value in (overrides or {}).items():
        set_dotted(raw, key, value)
    return validate(raw, base_dir=os.path.dirname(os.path.abspath(path)))


def loads_config(text: str, overrides: Optional[dict] = None, base_dir: Optional[str] = None) -> ExperimentConfig:
    raw = parse_yaml(text)
    for key, value in (overrides or {}).items():
        set_dotted(raw, key, value)
    return validate(raw, base_dir=base_dir)


# ---------------------------------------------------------------------------
# validation


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def _number(errors, where, value, positive=False, nonneg=False) -> Optional[float]:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        errors.append(f"{where}: expected a number, got {value!r}")
        return None
    v = float(value)
    if positive and not v > 0:
        errors.append(f"{where}: must be positive, got {value!r}")
    if nonneg and not v >= 0:
        errors.append(f"{where}: must be non-negative, got {value!r}")
    return v


def _integer(errors, where, value) -> Optional[int]:
    if isinstance(value, bool) or not isinstance(value, int):
        errors.append(f"{where}: expected an integer, got {value!r}")
        return None
    return value


def _parse_p(errors, value) -> tuple:
    if isinstance(value, str):
        try:
            frac = Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            errors.append(f"params.p: cannot read {value!r} as a number")
            return None, None
        return float(frac), str(frac)
    v = _number(errors, "params.p", value)
    if v is None:
        return None, None
    return v, str(Fraction(value).limit_denominator(10**6)) if isinstance(value, float) else str(value)


def _unknown(errors, section: str, given: dict, allowed: dict) -> None:
    for key in given:
        if key not in allowed:
            errors.append(f"{section}{key}: unknown key")


def validate(raw_in: dict, base_dir: Optional[str] = None) -> ExperimentConfig:
    """Fill defaults, check every field and collect all problems at once."""
    errors: list = []
    _unknown(errors, "", raw_in, DEFAULTS)
    for section in ("params", "grid", "initial_data", "propagator", "diagnostics", "ground_state"):
        val = raw_in.get(section, {})
        if val is not None and not isinstance(val, dict):
            errors.append(f"{section}: expected a mapping")
            raw_in = {**raw_in, section: {}}
        else:
            _unknown(errors, f"{section}.", val or {}, DEFAULTS[section])
    raw = _merge(DEFAULTS, {k: v for k, v in raw_in.items() if k in DEFAULTS and v is not None})

    # params
    d = _integer(errors, "params.d", raw["params"]["d"])
    p, p_text = _parse_p(errors, raw["params"]["p"])
    params_cfg = None
    if d is not None and p is not None:
        if not 1 <= d <= 3:
            errors.append(f"params.d: only dimensions 1-3 are supported, got {d}")
        else:
            try:
                derive_params(d, p)
                params_cfg = ParamsConfig(d, p, p_text)
            except (NLSError, ValueError) as exc:
                errors.append(f"params: {type(exc).__name__}: {exc}")

    # grid
    N = _integer(errors, "grid.N", raw["grid"]["N"])
    if N is not None and (not _is_power_of_two(N) or N < 8):
        errors.append(f"grid.N: must be a power of two >= 8, got {N}")
    L = _number(errors, "grid.L", raw["grid"]["L"], positive=True)

    # initial data
    ic = raw["initial_data"]
    kind = ic["kind"]
    if kind not in INITIAL_KINDS:
        errors.append(f"initial_data.kind: expected one of {INITIAL_KINDS}, got {kind!r}")
    c = _number(errors, "initial_data.c", ic["c"])
    if kind == "soliton_multiple" and c is not None and not c > 0:
        errors.append(f"initial_data.c: must be positive, got {ic['c']!r}")
    amp = _number(errors, "initial_data.amplitude", ic["amplitude"])
    width = _number(errors, "initial_data.width", ic["width"], positive=True)
    freq = ic["phase_frequency"]
    if freq is not None:
        if not isinstance(freq, (list, tuple)) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in freq):
            errors.append("initial_data.phase_frequency: expected a list of numbers")
            freq = None
        elif d is not None and len(freq) != d:
            errors.append(f"initial_data.phase_frequency: need {d} components, got {len(freq)}")
        else:
            freq = tuple(float(v) for v in freq)
    path = ic["path"]
    if kind == "from_snapshot":
        if not path:
            errors.append("initial_data.path: required for from_snapshot")
        else:
            full = path if os.path.isabs(path) or base_dir is None else os.path.join(base_dir, path)
            if not os.path.exists(full):
                errors.append(f"initial_data.path: file {path!r} does not exist")
            path = full

    # propagator
    pr = raw["propagator"]
    prop = None
    dt = _number(errors, "propagator.dt", pr["dt"], positive=True)
    t_end = _number(errors, "propagator.t_end", pr["t_end"], nonneg=True)
    guard = _number(errors, "propagator.blowup_guard", pr["blowup_guard"])
    if guard is not None and not guard > 1:
        errors.append(f"propagator.blowup_guard: must exceed 1, got {guard}")
    rguard = _number(errors, "propagator.resolution_guard", pr["resolution_guard"], nonneg=True)
    every = _integer(errors, "propagator.snapshot_every", pr["snapshot_every"])
    if every is not None and every < 1:
        errors.append("propagator.snapshot_every: must be >= 1")
    for flag in ("adapt", "dealias"):
        if not isinstance(pr[flag], bool):
            errors.append(f"propagator.{flag}: expected true/false")
    if not errors:
        prop = PropagatorConfig(
            dt=dt, t_end=t_end, adapt=pr["adapt"], blowup_guard=guard, resolution_guard=rguard,
            snapshot_every=every, dealias=pr["dealias"],
        )

    # diagnostics
    dg = raw["diagnostics"]
    radii = dg["virial_radii"] or []
    if not isinstance(radii, (list, tuple)):
        errors.append("diagnostics.virial_radii: expected a list")
        radii = []
    for R in radii:
        v = _number(errors, "diagnostics.virial_radii", R, positive=True)
        if v is not None and L is not None and v > L / 2:
            errors.append(f"diagnostics.virial_radii: R = {R} exceeds L/2 = {L / 2}")
    cadence = _integer(errors, "diagnostics.snapshot_cadence", dg["snapshot_cadence"])
    if cadence is not None and cadence < 0:
        errors.append("diagnostics.snapshot_cadence: must be >= 0")
    window = dg["gbg_window"]
    if window is not None:
        if not isinstance(window, (list, tuple)) or len(window) != 2:
            errors.append("diagnostics.gbg_window: expected [lambda, sigma]")
            window = None
        else:
            lo = _number(errors, "diagnostics.gbg_window", window[0])
            hi = _number(errors, "diagnostics.gbg_window", window[1])
            if lo is not None and hi is not None and lo > hi:
                errors.append("diagnostics.gbg_window: lambda exceeds sigma")
            window = (lo, hi)
    if not isinstance(dg["modulation_fit"], bool):
        errors.append("diagnostics.modulation_fit: expected true/false")
    kappa = dg["kappa"]
    if kappa is not None:
        kappa = _number(errors, "diagnostics.kappa", kappa, positive=True)

    # ground state
    gs = raw["ground_state"]
    tol = _number(errors, "ground_state.tol", gs["tol"], positive=True)
    max_iter = _integer(errors, "ground_state.max_iter", gs["max_iter"])
    if gs["method"] not in ("auto", "grid", "radial"):
        errors.append(f"ground_state.method: expected auto, grid or radial, got {gs['method']!r}")
    seed = _integer(errors, "seed", raw["seed"])
    if not isinstance(raw["name"], str):
        errors.append("name: expected a string")

    if errors:
        raise ValidationError(errors)

    raw["initial_data"]["path"] = path
    return ExperimentConfig(
        name=raw["name"],
        params=params_cfg,
        grid=GridConfig(N, L),
        initial_data=InitialData(kind, c, amp, width, freq, path),
        propagator=prop,
        diagnostics=DiagnosticsConfig(tuple(float(r) for r in radii), cadence, window, dg["modulation_fit"], kappa),
        ground_state=GroundStateConfig(tol, max_iter, gs["method"]),
        seed=seed,
        raw=raw,
    )


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.raw, sort_keys=True)
