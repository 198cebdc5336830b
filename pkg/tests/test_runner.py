import json
import os

import numpy as np
import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nlslab.errors import ParseError, RunError, ValidationError
from nlslab.evolution import TimeSeries
from nlslab.model import ComplexField, Grid, derive_params
from nlslab.runner.cli import main
from nlslab.runner.config import (
    DEFAULTS,
    canonical_json,
    config_hash,
    load_config,
    loads_config,
    parse_override,
)
from nlslab.runner.experiment import (
    EXIT_BLOWUP,
    EXIT_OK,
    RunManifest,
    cached_ground_state,
    report,
    run,
    sweep,
)
from nlslab.runner.snapshot import SnapshotFormatError, decode, encode, read_snapshot, write_snapshot

SMALL = """
name: small
params: {d: 1, p: 7}
grid: {N: 512, L: 20.0}
initial_data: {kind: soliton_multiple, c: 0.5}
propagator: {dt: 0.002, t_end: 0.2, snapshot_every: 10}
diagnostics: {virial_radii: [5.0, 10.0]}
"""


@pytest.fixture
def small():
    return loads_config(SMALL)


# ---------------------------------------------------------------------------
# configuration


def test_minimal_config_parses():
    cfg = loads_config("params: {d: 1, p: 7}\ninitial_data: {kind: soliton_multiple, c: 1.0}\n")
    assert cfg.params.d == 1 and cfg.params.p == 7.0
    assert cfg.initial_data.c == 1.0
    assert cfg.propagator.resolution_guard == DEFAULTS["propagator"]["resolution_guard"]


def test_n_not_power_of_two():
    with pytest.raises(ValidationError) as exc:
        loads_config("grid: {N: 1000, L: 20}")
    assert any("power of two" in e for e in exc.value.errors)


def test_s_negative_surfaced():
    with pytest.raises(ValidationError) as exc:
        loads_config("params: {d: 3, p: 2}")
    assert any("SubcriticalOrCritical" in e for e in exc.value.errors)


def test_all_errors_aggregated(tmp_path):
    text = """
bogus: 1
params: {d: 1, p: 7, q: 2}
grid: {N: 100, L: -1}
initial_data: {kind: soliton_multiple, c: -0.5}
propagator: {dt: 0, blowup_guard: 0.5}
diagnostics: {virial_radii: [50.0], gbg_window: [2.0, 1.0]}
"""
    with pytest.raises(ValidationError) as exc:
        loads_config(text)
    errs = exc.value.errors
    assert len(errs) >= 8
    for needle in ("bogus", "params.q", "grid.N", "grid.L", "initial_data.c", "propagator.dt", "blowup_guard", "exceeds L/2", "gbg_window"):
        assert any(needle in e for e in errs), needle


def test_snapshot_path_must_exist(tmp_path):
    with pytest.raises(ValidationError):
        loads_config("initial_data: {kind: from_snapshot, path: missing.nlsf}", base_dir=str(tmp_path))


def test_parse_error_location():
    with pytest.raises(ParseError) as exc:
        loads_config("params:\n  d: 1\n  p: [7\n")
    assert exc.value.line is not None and exc.value.column is not None
    with pytest.raises(ParseError):
        loads_config("- just\n- a list\n")


def test_rational_p_text():
    cfg = loads_config("params: {d: 3, p: '10/3'}\ngrid: {N: 32, L: 8}")
    assert cfg.params.p_text == "10/3"
    assert cfg.params.physical().s == pytest.approx(1.5 - 2 / (7 / 3))


def test_overrides_and_aliases(tmp_path, small):
    path = tmp_path / "c.yaml"
    path.write_text(SMALL)
    cfg = load_config(path, dict([parse_override("c=1.2"), parse_override("propagator.dt=0.001")]))
    assert cfg.initial_data.c == 1.2 and cfg.propagator.dt == 0.001
    assert parse_override("diagnostics.virial_radii=[1, 2]") == ("diagnostics.virial_radii", [1, 2])
    with pytest.raises(ParseError):
        parse_override("novalue")
    assert small.with_overrides({"N": 256}).grid.N == 256


def _shuffle(obj, rng):
    if isinstance(obj, dict):
        keys = list(obj)
        rng.shuffle(keys)
        return {k: _shuffle(obj[k], rng) for k in keys}
    return obj


@given(seed=st.integers(0, 10_000))
def test_hash_stable_under_reordering(seed, small):
    raw = small.raw
    shuffled = _shuffle(raw, np.random.default_rng(seed))
    assert canonical_json(shuffled) == canonical_json(raw)
    assert config_hash(shuffled) == small.config_hash()


@given(
    key=st.sampled_from(["initial_data.c", "propagator.dt", "grid.L", "seed", "propagator.t_end"]),
    value=st.floats(0.001, 0.01),
)
def test_hash_changes_with_semantic_fields(key, value, small):
    base = {"initial_data.c": 0.5, "propagator.dt": 0.002, "grid.L": 20.0, "seed": 0, "propagator.t_end": 0.2}[key]
    changed = small.with_overrides({key: 7 if key == "seed" else base + value})
    assert changed.config_hash() != small.config_hash()


def test_hash_ignores_name(small):
    assert small.with_overrides({"name": "other"}).config_hash() == small.config_hash()


# ---------------------------------------------------------------------------
# snapshots


@given(
    vals=arrays(np.complex128, (16, 8), elements=st.complex_numbers(allow_nan=False, allow_infinity=False, max_magnitude=1e300)),
    t=st.floats(-1e6, 1e6),
)
def test_snapshot_round_trip_is_byte_exact(vals, t):
    f = ComplexField(Grid((16, 8), (2.0, 3.5)), vals, t)
    blob = encode(f)
    back = decode(blob)
    assert back.grid == f.grid and back.time_tag == t
    assert np.array_equal(back.values, f.values)
    assert encode(back) == blob


def test_snapshot_header_layout(tmp_path):
    f = ComplexField(Grid.cube(1, 8, 1.0), np.arange(8) + 1j, 0.5)
    path = tmp_path / "f.nlsf"
    write_snapshot(path, f)
    blob = path.read_bytes()
    assert blob[:4] == b"NLSF"
    assert len(blob) == 4 + 4 + 4 + 4 + 8 + 8 + 16 * 8
    assert np.array_equal(read_snapshot(path).values, f.values)
    with pytest.raises(SnapshotFormatError):
        decode(b"XXXX" + blob[4:])
    with pytest.raises(SnapshotFormatError):
        decode(blob[:-1])


# ---------------------------------------------------------------------------
# runs


def test_run_scatter_case(tmp_path, small):
    m = run(small, str(tmp_path / "run"), str(tmp_path / "cache"))
    assert m.outcome == "ReachedHorizon" and m.exit_code == EXIT_OK
    out = tmp_path / "run"
    cls = json.loads((out / "classification.json").read_text())
    assert cls["region"] == "ScatterRegion"
    names = {f["path"] for f in m.files}
    assert {"classification.json", "timeseries.csv", "config.yaml", "dynamics.json", "snapshots/initial.nlsf", "snapshots/final.nlsf"} <= names
    ts = TimeSeries.from_csv(out / "timeseries.csv")
    assert ts.columns[:3] == ["mass", "energy", "px"]
    assert {"z_R5", "z_dprime_R5", "z_R10", "z_dprime_R10"} <= set(ts.columns)
    on_disk = RunManifest.read(out / "manifest.json")
    assert on_disk.config_hash == small.config_hash()
    assert on_disk.start_time <= on_disk.end_time


def test_run_blowup_case(tmp_path, small):
    cfg = small.with_overrides({"c": 1.2, "t_end": 1.0})
    m = run(cfg, str(tmp_path / "run"), str(tmp_path / "cache"))
    assert m.outcome == "BlowupDetected" and m.exit_code == EXIT_BLOWUP
    cls = json.loads((tmp_path / "run" / "classification.json").read_text())
    assert cls["region"] in ("NegativeEnergyBlowup", "BlowupRegionFiniteVarianceOrRadial")
    dyn = json.loads((tmp_path / "run" / "dynamics.json").read_text())
    assert dyn["blowup_bound"]["t_b"] > 0


def test_from_snapshot_reload_is_bitwise(tmp_path, small):
    first = tmp_path / "first"
    run(small, str(first), str(tmp_path / "cache"))
    src = first / "snapshots" / "initial.nlsf"
    cfg = small.with_overrides({"initial_data.kind": "from_snapshot", "initial_data.path": str(src)})
    second = tmp_path / "second"
    run(cfg, str(second), str(tmp_path / "cache"))
    assert (second / "snapshots" / "initial.nlsf").read_bytes() == src.read_bytes()


def test_runs_are_deterministic(tmp_path, small):
    run(small, str(tmp_path / "a"), str(tmp_path / "cache"))
    run(small, str(tmp_path / "b"), str(tmp_path / "cache"))
    assert (tmp_path / "a" / "timeseries.csv").read_bytes() == (tmp_path / "b" / "timeseries.csv").read_bytes()


def test_failed_run_keeps_manifest(tmp_path, small):
    other = tmp_path / "other.nlsf"
    write_snapshot(other, ComplexField(Grid.cube(1, 64, 20.0), np.zeros(64)))
    cfg = small.with_overrides({"initial_data.kind": "from_snapshot", "initial_data.path": str(other)})
    with pytest.raises(RunError) as exc:
        run(cfg, str(tmp_path / "bad"), str(tmp_path / "cache"))
    assert exc.value.manifest.outcome == "Error"
    m = json.loads((tmp_path / "bad" / "manifest.json").read_text())
    assert m["exit_code"] == 1 and "does not match" in m["error"]
    assert (tmp_path / "bad" / "classification.json").exists() is False
    assert (tmp_path / "bad" / "error.txt").exists()


def test_ground_state_cache(tmp_path):
    P = derive_params(1, 7)
    g = Grid.cube(1, 256, 20.0)
    a = cached_ground_state(P, g, str(tmp_path))
    entries = [e for e in os.listdir(tmp_path) if not e.startswith(".")]
    assert len(entries) == 1
    b = cached_ground_state(P, g, str(tmp_path))
    assert np.array_equal(a.uq_field.values, b.uq_field.values)
    assert a.norms == b.norms and a.c_gn == b.c_gn
    assert np.array_equal(a.profile_q, b.profile_q)
    assert not [e for e in os.listdir(tmp_path) if e.startswith(".tmp-")]


# ---------------------------------------------------------------------------
# sweeps


def test_empty_sweep(tmp_path, small):
    assert sweep(small, "c", [], str(tmp_path)) == []


def test_sweep_flips_outcome(tmp_path, small):
    cfg = small.with_overrides({"t_end": 0.5, "diagnostics.virial_radii": []})
    ms = sweep(cfg, "c", [0.5, 0.8, 1.0, 1.2], str(tmp_path), jobs=2)
    assert [m.outcome for m in ms] == ["ReachedHorizon"] * 3 + ["BlowupDetected"]
    rows = (tmp_path / "summary.csv").read_text().splitlines()
    assert len(rows) == 5 and rows[0].startswith("axis,value,outcome")
    table = report(str(tmp_path))
    assert "ScatterRegion" in table and "BlowupDetected" in table


def test_sweep_isolates_errors(tmp_path, small):
    ms = sweep(small, "c", [-1.0, 0.5], str(tmp_path))
    assert ms[0] is None and ms[1].outcome == "ReachedHorizon"
    summary = (tmp_path / "summary.csv").read_text()
    assert "initial_data.c" in summary


def test_dt_halving_sweep_is_second_order(tmp_path, small):
    cfg = small.with_overrides({"c": 0.8, "t_end": 0.5, "propagator.adapt": False, "diagnostics.virial_radii": []})
    ms = sweep(cfg, "dt", [2e-3, 1e-3, 5e-4], str(tmp_path))
    drifts = [TimeSeries.from_csv(os.path.join(m.run_dir, "timeseries.csv")).relative_drift("energy") for m in ms]
    for a, b in zip(drifts, drifts[1:]):
        assert 3.0 < a / b < 5.0


# ---------------------------------------------------------------------------
# command line


def test_cli_evolve_and_report(tmp_path, capsys):
    path = tmp_path / "c.yaml"
    path.write_text(SMALL)
    out = tmp_path / "runs" / "one"
    assert main(["evolve", str(path), "--out", str(out)]) == 0
    assert main(["evolve", str(path), "--out", str(tmp_path / "runs" / "two"), "--set", "c=1.2", "--set", "t_end=1"]) == 2
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    assert "mass" in capsys.readouterr().out
    assert (out / "dichotomy_plot.csv").exists()


def test_cli_errors_exit_one(tmp_path, capsys):
    path = tmp_path / "c.yaml"
    path.write_text(SMALL)
    assert main(["evolve", str(path), "--out", str(tmp_path / "x"), "--set", "N=1000"]) == 1
    assert "power of two" in capsys.readouterr().err
    assert main(["classify", str(tmp_path / "missing.yaml")]) == 1


def test_cli_classify_and_ground_state(tmp_path, capsys):
    path = tmp_path / "c.yaml"
    path.write_text(SMALL)
    assert main(["classify", str(path), "--out", str(tmp_path / "o")]) == 0
    assert json.loads(capsys.readouterr().out)["region"] == "ScatterRegion"
    assert main(["ground-state", str(path), "--out", str(tmp_path / "o")]) == 0
    data = json.loads(capsys.readouterr().out)
    assert max(data["pohozhaev_residuals"]) < 1e-6


def test_cli_admissibility_json(capsys):
    code = main(["admissibility", "--d", "3", "--p", "3", "--json"])
    payload = json.loads(capsys.readouterr().out)
    assert payload["s"] == "1/2" and payload["lattice_counterexamples"] == []
    assert code == (0 if payload["all_passed"] else 1)


def test_cli_sweep(tmp_path, capsys):
    path = tmp_path / "c.yaml"
    path.write_text(SMALL)
    assert main(["sweep", str(path), "--axis", "c", "--values", "0.5,1.2", "--set", "t_end=0.5", "--out", str(tmp_path / "sw")]) == 0
    text = capsys.readouterr().out
    assert "BlowupDetected" in text and "ReachedHorizon" in text
    assert yaml.safe_load((tmp_path / "sw" / "c=0.5" / "config.yaml").read_text())["initial_data"]["c"] == 0.5
