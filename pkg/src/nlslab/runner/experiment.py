"""Run orchestration: ground-state cache, single runs, sweeps and reports."""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import os
import shutil
import tempfile
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
import yaml

from .. import __version__
from ..diagnostics import (
    CutoffFunction,
    KAPPA0,
    SearchRanges,
    blowup_time_bound,
    gbg_window,
    line_parameter,
    localized_variance,
    soliton_distance,
    virial_observer,
)
from ..errors import NLSError, RunError
from ..evolution import Outcome, evolve
from ..ground_state import GroundStateNorms, GroundStateProfile, solve_ground_state
from ..model import ComplexField, Grid, PhysicalParams, classify, invariant_report, threshold_bounds
from .config import ExperimentConfig, canonical_json, dump_config, get_dotted, validate
from .snapshot import atomic_write_bytes, read_snapshot, write_snapshot

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BLOWUP = 2

_EXIT = {Outcome.REACHED_HORIZON: EXIT_OK, Outcome.BLOWUP_DETECTED: EXIT_BLOWUP, Outcome.CORRUPTED: EXIT_ERROR}


# ---------------------------------------------------------------------------
# ground-state cache


def _cache_key(params: PhysicalParams, grid: Grid, tol: float, method: str) -> str:
    key = json.dumps([params.d, params.p, list(grid.dims), list(grid.extent), tol, method])
    return "gs-" + hashlib.sha256(key.encode()).hexdigest()[:20]


def _profile_meta(gs: GroundStateProfile) -> dict:
    return {
        "d": gs.params.d,
        "p": gs.params.p,
        "dims": list(gs.grid.dims),
        "extent": list(gs.grid.extent),
        "norms": gs.norms.as_dict(),
        "c_gn": gs.c_gn,
        "pohozhaev_residuals": list(gs.pohozhaev_residuals),
        "iterations": gs.iterations,
        "method": gs.method,
        "tol": gs.tol,
        "profile_r": gs.profile_r.tolist(),
        "profile_q": gs.profile_q.tolist(),
        "uq_profile_r": gs.uq_profile_r.tolist(),
        "uq_profile": gs.uq_profile.tolist(),
    }


def save_ground_state(gs: GroundStateProfile, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    write_snapshot(os.path.join(directory, "q.nlsf"), gs.q_field)
    write_snapshot(os.path.join(directory, "uq.nlsf"), gs.uq_field)
    atomic_write_bytes(os.path.join(directory, "ground_state.json"), json.dumps(_profile_meta(gs)).encode())


def load_ground_state(directory: str, params: PhysicalParams) -> GroundStateProfile:
    with open(os.path.join(directory, "ground_state.json")) as fh:
        meta = json.load(fh)
    return GroundStateProfile(
        params=params,
        grid=Grid(meta["dims"], meta["extent"]),
        q_field=read_snapshot(os.path.join(directory, "q.nlsf")),
        uq_field=read_snapshot(os.path.join(directory, "uq.nlsf")),
        norms=GroundStateNorms(**meta["norms"]),
        c_gn=meta["c_gn"],
        pohozhaev_residuals=tuple(meta["pohozhaev_residuals"]),
        iterations=meta["iterations"],
        method=meta["method"],
        profile_r=np.array(meta["profile_r"]),
        profile_q=np.array(meta["profile_q"]),
        uq_profile_r=np.array(meta["uq_profile_r"]),
        uq_profile=np.array(meta["uq_profile"]),
        tol=meta["tol"],
    )


def cached_ground_state(
    params: PhysicalParams,
    grid: Grid,
    cache_dir: Optional[str],
    tol: float = 1e-12,
    max_iter: int = 500,
    method: str = "auto",
) -> GroundStateProfile:
    """Solve once per (d, p, N, L, tol); entries appear atomically via rename."""
    if cache_dir is None:
        return solve_ground_state(params, grid, tol=tol, max_iter=max_iter, method=method)
    final = os.path.join(cache_dir, _cache_key(params, grid, tol, method))
    if os.path.isdir(final):
        return load_ground_state(final, params)
    gs = solve_ground_state(params, grid, tol=tol, max_iter=max_iter, method=method)
    os.makedirs(cache_dir, exist_ok=True)
    tmp = tempfile.mkdtemp(dir=cache_dir, prefix=".tmp-")
    try:
        save_ground_state(gs, tmp)
        os.rename(tmp, final)
    except OSError:
        # another worker won the race
        shutil.rmtree(tmp, ignore_errors=True)
    return gs


# ---------------------------------------------------------------------------
# initial data


def build_grid(cfg: ExperimentConfig) -> Grid:
    return Grid.cube(cfg.params.d, cfg.grid.N, cfg.grid.L)


def build_initial(cfg: ExperimentConfig, ground: GroundStateProfile) -> ComplexField:
    ic = cfg.initial_data
    grid = ground.grid
    if ic.kind == "soliton_multiple":
        return ic.c * ground.uq_field
    if ic.kind == "gaussian":
        r2 = grid.radius**2
        vals = ic.amplitude * np.exp(-r2 / (2.0 * ic.width**2))
        if ic.phase_frequency:
            vals = vals * np.exp(1j * sum(k * x for k, x in zip(ic.phase_frequency, grid.coords)))
        return ComplexField(grid, vals)
    if ic.kind == "from_snapshot":
        field_ = read_snapshot(ic.path)
        if field_.grid != grid:
            raise ValueError(f"snapshot grid {field_.grid} does not match configured grid {grid}")
        return ComplexField(grid, field_.values, 0.0)
    raise ValueError(f"unknown initial data kind {ic.kind!r}")


# ---------------------------------------------------------------------------
# classification


def _finite(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def classification_record(u: ComplexField, params: PhysicalParams, ground: GroundStateProfile) -> dict:
    """Analytic classification of the initial data plus its supporting numbers.

    Fields sampled on a bounded box always have finite variance, so the
    finite-variance blowup branch is reported.
    """
    rep = invariant_report(u, params, ground)
    cls = classify(rep, params, finite_variance_or_radial=True)
    out = cls.to_dict()
    out["report"] = {
        "mass": rep.mass,
        "energy": rep.energy,
        "momentum": list(rep.momentum),
        "renorm_gradient": rep.renorm_gradient,
        "renorm_momentum": rep.renorm_momentum,
        "renorm_mass_energy": rep.renorm_mass_energy,
        "gradient_l2_sq": rep.gradient_l2_sq,
        "potential_norm": rep.potential_norm,
    }
    try:
        out["threshold_bounds"] = list(threshold_bounds(rep, params))
    except NLSError as exc:
        out["threshold_bounds"] = None
        out["threshold_note"] = f"{type(exc).__name__}: {exc}"
    try:
        out["line_lambda"] = line_parameter(rep, ground)
    except ValueError:
        out["line_lambda"] = None
    return out


# ---------------------------------------------------------------------------
# manifests


@dataclass
class RunManifest:
    name: str
    config_hash: str
    code_version: str
    start_time: str
    end_time: str = ""
    outcome: str = ""
    exit_code: int = EXIT_ERROR
    run_dir: str = ""
    files: list = field(default_factory=list)
    error: Optional[str] = None
    t_final: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, path: str) -> None:
        atomic_write_bytes(path, json.dumps(self.to_dict(), indent=2).encode())

    @classmethod
    def read(cls, path: str) -> "RunManifest":
        with open(path) as fh:
            return cls(**json.load(fh))


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def _inventory(run_dir: str) -> list:
    out = []
    for root, _, files in os.walk(run_dir):
        for name in sorted(files):
            if name == "manifest.json" or name.startswith(".tmp-"):
                continue
            full = os.path.join(root, name)
            with open(full, "rb") as fh:
                digest = hashlib.sha256(fh.read()).hexdigest()
            out.append({"path": os.path.relpath(full, run_dir), "bytes": os.path.getsize(full), "sha256": digest})
    return sorted(out, key=lambda e: e["path"])


def _write_json(path: str, data: dict) -> None:
    atomic_write_bytes(path, json.dumps(data, indent=2, default=_json_default).encode())


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


# ---------------------------------------------------------------------------
# single run


def run(cfg: ExperimentConfig, out_dir: str, cache_dir: Optional[str] = None) -> RunManifest:
    """Execute one experiment into ``out_dir``; the manifest is always written."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = RunManifest(
        name=cfg.name,
        config_hash=cfg.config_hash(),
        code_version=__version__,
        start_time=_now(),
        run_dir=os.path.abspath(out_dir),
    )
    atomic_write_bytes(os.path.join(out_dir, "config.yaml"), dump_config(cfg).encode())
    try:
        _execute(cfg, out_dir, cache_dir, manifest)
    except Exception as exc:
        manifest.outcome = "Error"
        manifest.exit_code = EXIT_ERROR
        manifest.error = f"{type(exc).__name__}: {exc}"
        manifest.end_time = _now()
        manifest.files = _inventory(out_dir)
        manifest.write(os.path.join(out_dir, "manifest.json"))
        with open(os.path.join(out_dir, "error.txt"), "w") as fh:
            fh.write(traceback.format_exc())
        raise RunError(f"run {cfg.name!r} failed: {manifest.error}", manifest) from exc
    manifest.end_time = _now()
    manifest.files = _inventory(out_dir)
    manifest.write(os.path.join(out_dir, "manifest.json"))
    return manifest


def _execute(cfg: ExperimentConfig, out_dir: str, cache_dir: Optional[str], manifest: RunManifest) -> None:
    params = cfg.params.physical()
    grid = build_grid(cfg)
    gs_cfg = cfg.ground_state
    ground = cached_ground_state(params, grid, cache_dir, gs_cfg.tol, gs_cfg.max_iter, gs_cfg.method)
    u0 = build_initial(cfg, ground)

    record = classification_record(u0, params, ground)
    _write_json(os.path.join(out_dir, "classification.json"), record)

    diag = cfg.diagnostics
    snap_dir = os.path.join(out_dir, "snapshots")
    write_snapshot(os.path.join(snap_dir, "initial.nlsf"), u0)
    observers = []
    cutoff = CutoffFunction()
    virial_store = {}
    if diag.virial_radii:
        obs, virial_store = virial_observer(params, diag.virial_radii, cutoff)
        observers.append(obs)
    if diag.snapshot_cadence:
        counter = {"n": 0}

        def snap(t, f):
            if counter["n"] % diag.snapshot_cadence == 0:
                write_snapshot(os.path.join(snap_dir, f"u_{counter['n']:06d}.nlsf"), f)
            counter["n"] += 1
            return {}

        observers.append(snap)

    series, final, outcome = evolve(u0, params, cfg.propagator, observers=observers, ground=ground)
    series.to_csv(os.path.join(out_dir, "timeseries.csv"))
    write_snapshot(os.path.join(snap_dir, "final.nlsf"), final)

    dynamics = {
        "outcome": outcome.value,
        "reason": series.meta.get("reason"),
        "t_final": series.meta.get("t_final"),
        "steps": series.meta.get("steps"),
        "mass_drift": series.relative_drift("mass"),
        "energy_drift": series.relative_drift("energy"),
    }
    if diag.gbg_window is not None:
        w = gbg_window(series, *diag.gbg_window)
        dynamics["gbg_window"] = asdict(w)
    lam = record.get("line_lambda")
    if lam is not None and lam > 1.0:
        kappa = diag.kappa if diag.kappa is not None else min(0.5 * (lam - 1.0), 0.5 * KAPPA0)
        R = diag.virial_radii[0] if diag.virial_radii else min(grid.extent) / 2.0
        z0, zp0 = localized_variance(u0, R, cutoff)
        try:
            bound = blowup_time_bound(z0, zp0, params, lam, kappa, ground)
            dynamics["blowup_bound"] = {**bound.to_dict(), "radius": R, "z0": z0, "z0_prime": zp0}
        except NLSError as exc:
            dynamics["blowup_bound"] = {"error": f"{type(exc).__name__}: {exc}"}
    if diag.modulation_fit:
        fit = soliton_distance(final, ground, SearchRanges())
        dynamics["modulation_fit"] = asdict(fit)
    _write_json(os.path.join(out_dir, "dynamics.json"), dynamics)

    manifest.outcome = outcome.value
    manifest.exit_code = _EXIT[outcome]
    manifest.t_final = series.meta.get("t_final")


# ---------------------------------------------------------------------------
# sweeps


def _value_label(value) -> str:
    text = str(value).replace("/", "_").replace(" ", "")
    return text


def _sweep_worker(task: tuple) -> dict:
    raw, axis, value, run_dir, cache_dir = task
    try:
        cfg = validate(raw)
        m = run(cfg, run_dir, cache_dir)
        return {"manifest": m.to_dict(), "error": None}
    except RunError as exc:
        return {"manifest": exc.manifest.to_dict() if exc.manifest else None, "error": str(exc)}
    except Exception as exc:
        return {"manifest": None, "error": f"{type(exc).__name__}: {exc}"}


def sweep(
    base: ExperimentConfig,
    axis: str,
    values: Sequence,
    out_dir: str,
    jobs: int = 1,
    cache_dir: Optional[str] = None,
) -> list:
    """One isolated run per value; failures are recorded and do not stop the sweep."""
    values = list(values)
    os.makedirs(out_dir, exist_ok=True)
    cache_dir = cache_dir or os.path.join(out_dir, "gs_cache")
    tasks = []
    errors = []
    for value in values:
        run_dir = os.path.join(out_dir, f"{axis.replace('.', '_')}={_value_label(value)}")
        try:
            cfg = base.with_overrides({axis: value})
            raw = cfg.raw
            raw = {**raw, "name": f"{base.name}[{axis}={value}]"}
            tasks.append((raw, axis, value, run_dir, cache_dir))
            errors.append(None)
        except NLSError as exc:
            tasks.append(None)
            errors.append(f"{type(exc).__name__}: {exc}")

    live = [t for t in tasks if t is not None]
    if jobs > 1 and len(live) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_worker, live))
    else:
        results = [_sweep_worker(t) for t in live]

    it = iter(results)
    rows, manifests = [], []
    for value, task, err in zip(values, tasks, errors):
        res = next(it) if task is not None else {"manifest": None, "error": err}
        m = RunManifest(**res["manifest"]) if res["manifest"] else None
        manifests.append(m)
        rows.append(_summary_row(axis, value, m, res["error"]))
    _write_summary(os.path.join(out_dir, "summary.csv"), rows)
    return manifests


SUMMARY_COLUMNS = ("axis", "value", "outcome", "exit_code", "region", "t_final", "final_G", "final_ME", "run_dir", "error")


def _summary_row(axis, value, manifest: Optional[RunManifest], error) -> dict:
    row = {"axis": axis, "value": value, "outcome": "", "exit_code": EXIT_ERROR, "region": "",
           "t_final": "", "final_G": "", "final_ME": "", "run_dir": "", "error": error or ""}
    if manifest is None:
        return row
    row.update(outcome=manifest.outcome, exit_code=manifest.exit_code, run_dir=manifest.run_dir,
               t_final="" if manifest.t_final is None else "%.17g" % manifest.t_final)
    cls_path = os.path.join(manifest.run_dir, "classification.json")
    if os.path.exists(cls_path):
        with open(cls_path) as fh:
            row["region"] = json.load(fh)["region"]
    ts = os.path.join(manifest.run_dir, "timeseries.csv")
    if os.path.exists(ts):
        last = _last_row(ts)
        row["final_G"] = last.get("G", "")
        row["final_ME"] = last.get("ME", "")
    return row


def _last_row(path: str) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows[-1] if rows else {}


def _write_summary(path: str, rows: list) -> None:
    with open(path + ".tmp", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow(row)
    os.replace(path + ".tmp", path)


# ---------------------------------------------------------------------------
# reports


def report(directory: str) -> str:
    """Summary table for a sweep or run directory; also writes dichotomy plot data."""
    lines = []
    summary = os.path.join(directory, "summary.csv")
    if os.path.exists(summary):
        with open(summary, newline="") as fh:
            rows = list(csv.DictReader(fh))
        lines.append(f"{'value':>10}  {'outcome':<16} {'region':<36} {'final G':>12} {'final ME':>12}")
        for r in rows:
            lines.append(
                f"{r['value']:>10}  {r['outcome'] or 'Error':<16} {r['region']:<36} "
                f"{_short(r['final_G']):>12} {_short(r['final_ME']):>12}"
            )
            if r["run_dir"] and os.path.isdir(r["run_dir"]):
                _plot_data(r["run_dir"])
        return "\n".join(lines)
    if os.path.exists(os.path.join(directory, "timeseries.csv")):
        path = _plot_data(directory)
        rows = _read_rows(os.path.join(directory, "timeseries.csv"))
        first, last = rows[0], rows[-1]
        lines.append(f"{'quantity':<16} {'initial':>22} {'final':>22}")
        for key in first:
            lines.append(f"{key:<16} {_short(first[key]):>22} {_short(last[key]):>22}")
        if path:
            lines.append(f"plot data: {path}")
        return "\n".join(lines)
    raise FileNotFoundError(f"no summary.csv or timeseries.csv in {directory}")


def _read_rows(path: str) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _short(text) -> str:
    try:
        return "%.6g" % float(text)
    except (TypeError, ValueError):
        return str(text)


def _plot_data(run_dir: str) -> Optional[str]:
    """Write (t, G^{2/s}, ME^{1/s}) coordinates of the dichotomy diagram."""
    cfg_path = os.path.join(run_dir, "config.yaml")
    ts = os.path.join(run_dir, "timeseries.csv")
    if not (os.path.exists(cfg_path) and os.path.exists(ts)):
        return None
    with open(cfg_path) as fh:
        raw = yaml.safe_load(fh)
    s = validate(raw).params.physical().s
    out = os.path.join(run_dir, "dichotomy_plot.csv")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x_grad", "y_mass_energy"])
        for r in _read_rows(ts):
            G, ME = float(r["G"]), float(r["ME"])
            w.writerow(["%.17g" % float(r["t"]), "%.17g" % G ** (2.0 / s), "%.17g" % (ME ** (1.0 / s) if ME == ME else math.nan)])
    return out
