"""Command-line interface: scenario files in, machine-readable results out.

Scenario files are YAML documents with a versioned schema (see
:func:`parse_scenario`).  Five subcommands cover the library's
capabilities:

``validate``
    check a scenario file and report problems
``stability``
    closed-form per-vehicle and platoon-level stability report (JSON)
``chart``
    critical-delay curve over the feedback-weight axis (CSV)
``simulate``
    direct integration, trajectory CSV
``sweep``
    bifurcation diagram CSV plus per-curve onset classification

File-writing commands place their outputs under ``--out`` and drop a
``manifest.json`` beside them recording the tool version, scenario hash,
timestamp, and output list.  Data files are deterministic: the same
scenario and version produce byte-identical CSV/JSON outputs (only the
manifest timestamp varies).

Exit codes: 0 success, 1 domain or validation failure, 2 I/O or parse
failure, 3 numerical failure during integration.

Vehicle indices in scenario files and in all outputs are 1-based (the
first follower is vehicle 1); the Python API is 0-based.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import yaml

from . import __version__
from .analysis import (
    UncertainBeta,
    frequency_comparison,
    is_locally_stable,
    non_oscillation_check,
    robust_stability_bound,
    stability_chart,
    string_stability_report,
)
from .dde import (
    InitialHistory,
    IntegrationSettings,
    NumericalFault,
    Trajectory,
    equilibrium_history,
    harmonic_history,
    integrate_neutral,
    perturbation_history,
)
from .model import (
    ConfigError,
    LeaderProfile,
    ModelExponents,
    PlatoonConfig,
    VehicleParams,
    equilibrium_coefficients,
    validate_config,
)
from .sweep import (
    CalibrationTarget,
    SweepSpec,
    bifurcation_diagram,
    classify_bifurcation,
)

__all__ = [
    "ScenarioError",
    "ScenarioParseError",
    "Scenario",
    "parse_scenario",
    "load_scenario",
    "serialize_scenario",
    "scenario_hash",
    "main",
]

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_IO = 2
EXIT_NUMERIC = 3

SCHEMA_VERSION = 1

_DEFAULT_GAMMA_GRID = "1e-6:0.999999:200"
_GAMMA_MIN = 1e-6
_GAMMA_MAX = 1.0 - 1e-6


class ScenarioError(ValueError):
    """A scenario document violates the schema or the model's domain."""


class ScenarioParseError(ValueError):
    """A scenario document is not well-formed YAML."""

    def __init__(self, message: str, line: Optional[int], column: Optional[int]):
        self.line = line
        self.column = column
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"parse error{where}: {message}")


# ---------------------------------------------------------------------------
# schema helpers

def _expect_map(node, where: str, required: Sequence[str], optional: Sequence[str]) -> dict:
    if not isinstance(node, dict):
        raise ScenarioError(f"{where} must be a mapping")
    allowed = set(required) | set(optional)
    unknown = sorted(set(node) - allowed)
    if unknown:
        raise ScenarioError(f"{where}: unknown key(s) {', '.join(map(repr, unknown))}")
    missing = sorted(k for k in required if k not in node)
    if missing:
        raise ScenarioError(f"{where}: missing required key(s) {', '.join(map(repr, missing))}")
    return node


def _as_float(node, where: str) -> float:
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ScenarioError(f"{where} must be a number")
    return float(node)


def _as_int(node, where: str) -> int:
    if isinstance(node, bool) or not isinstance(node, int):
        raise ScenarioError(f"{where} must be an integer")
    return node


def _vehicle_index(node, where: str, n: int) -> int:
    """1-based scenario index to 0-based internal index."""
    k = _as_int(node, where)
    if not 1 <= k <= n:
        raise ScenarioError(f"{where} must be between 1 and {n}, got {k}")
    return k - 1


# ---------------------------------------------------------------------------
# scenario model

@dataclass
class AnalysisOptions:
    beta_star: float = 1.0
    gain_points: int = 2000
    window: float = 4.0
    uncertain: Optional[UncertainBeta] = None


@dataclass
class Scenario:
    """Parsed scenario: model objects plus the normalized document."""

    config: PlatoonConfig
    settings: Optional[IntegrationSettings]
    history_kind: str
    history_args: dict
    sweep: Optional[SweepSpec]
    analysis: AnalysisOptions
    canonical: dict

    def history(self) -> InitialHistory:
        n = self.config.n
        if self.history_kind == "equilibrium":
            return equilibrium_history(n)
        if self.history_kind == "perturb":
            return perturbation_history(n, self.history_args["vehicle"],
                                        self.history_args["delta"])
        return harmonic_history(n, self.history_args["vehicle"],
                                self.history_args["amplitude"],
                                self.history_args["omega"])


def parse_scenario(doc) -> Scenario:
    """Build a :class:`Scenario` from a loaded YAML document.

    The schema is strict: unknown keys anywhere are rejected, so typos
    fail loudly instead of silently falling back to defaults.  All
    defaults are materialized into the scenario's canonical form, which
    is what :func:`scenario_hash` digests and
    :func:`serialize_scenario` emits; parsing a serialized scenario
    therefore reproduces the canonical form exactly.
    """
    top = _expect_map(doc, "scenario", ["schema_version", "platoon", "leader"],
                      ["integration", "history", "sweep", "analysis"])
    version = _as_int(top["schema_version"], "schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {version}; this tool reads "
                            f"version {SCHEMA_VERSION}")

    platoon = _expect_map(top["platoon"], "platoon", ["exponents", "vehicles"], [])
    exp_map = _expect_map(platoon["exponents"], "platoon.exponents", ["m"], ["l"])
    exponents = ModelExponents(m=_as_float(exp_map["m"], "platoon.exponents.m"),
                               l=_as_float(exp_map.get("l", 1.0), "platoon.exponents.l"))
    if not isinstance(platoon["vehicles"], list) or not platoon["vehicles"]:
        raise ScenarioError("platoon.vehicles must be a non-empty list")
    vehicles = []
    for k, vnode in enumerate(platoon["vehicles"], start=1):
        vmap = _expect_map(vnode, f"platoon.vehicles[{k}]", ["alpha", "tau"],
                           ["gamma", "b"])
        vehicles.append(VehicleParams(
            alpha=_as_float(vmap["alpha"], f"vehicle {k} alpha"),
            tau=_as_float(vmap["tau"], f"vehicle {k} tau"),
            gamma=_as_float(vmap.get("gamma", 0.0), f"vehicle {k} gamma"),
            b=_as_float(vmap.get("b", 1.0), f"vehicle {k} b"),
        ))

    leader_map = _expect_map(top["leader"], "leader", ["kind"],
                             ["velocity", "initial", "terminal", "start", "end"])
    kind = leader_map["kind"]
    if kind == "settled":
        _expect_map(leader_map, "leader", ["kind", "velocity"], [])
        leader = LeaderProfile.settled(_as_float(leader_map["velocity"], "leader.velocity"))
        leader_canon = {"kind": "settled", "velocity": leader.terminal_velocity}
    elif kind == "ramp":
        _expect_map(leader_map, "leader", ["kind", "initial", "terminal", "start", "end"], [])
        v0 = _as_float(leader_map["initial"], "leader.initial")
        v1 = _as_float(leader_map["terminal"], "leader.terminal")
        t0 = _as_float(leader_map["start"], "leader.start")
        t1 = _as_float(leader_map["end"], "leader.end")
        if not t1 > t0:
            raise ScenarioError("leader.end must be greater than leader.start")
        leader = LeaderProfile.ramp(v0, v1, t0, t1)
        leader_canon = {"kind": "ramp", "initial": v0, "terminal": v1,
                        "start": t0, "end": t1}
    else:
        raise ScenarioError(f"leader.kind must be 'settled' or 'ramp', got {kind!r}")

    config = PlatoonConfig(vehicles=tuple(vehicles), exponents=exponents, leader=leader)
    n = config.n

    settings = None
    settings_canon = None
    if "integration" in top:
        imap = _expect_map(top["integration"], "integration", ["h", "horizon"],
                           ["transient_cut", "separation_floor"])
        settings = IntegrationSettings(
            h=_as_float(imap["h"], "integration.h"),
            horizon=_as_float(imap["horizon"], "integration.horizon"),
            transient_cut=(_as_float(imap["transient_cut"], "integration.transient_cut")
                           if "transient_cut" in imap else None),
            separation_floor=_as_float(imap.get("separation_floor", 1e-6),
                                       "integration.separation_floor"),
        )
        settings_canon = {"h": settings.h, "horizon": settings.horizon,
                          "separation_floor": settings.separation_floor}
        if settings.transient_cut is not None:
            settings_canon["transient_cut"] = settings.transient_cut

    history_kind = "equilibrium"
    history_args: dict = {}
    if "history" in top:
        hmap = _expect_map(top["history"], "history", ["kind"],
                           ["vehicle", "delta", "amplitude", "omega"])
        history_kind = hmap["kind"]
        if history_kind == "equilibrium":
            _expect_map(hmap, "history", ["kind"], [])
        elif history_kind == "perturb":
            _expect_map(hmap, "history", ["kind", "vehicle"], ["delta"])
            history_args = {
                "vehicle": _vehicle_index(hmap["vehicle"], "history.vehicle", n),
                "delta": _as_float(hmap.get("delta", 0.01), "history.delta"),
            }
        elif history_kind == "harmonic":
            _expect_map(hmap, "history", ["kind", "vehicle", "amplitude", "omega"], [])
            history_args = {
                "vehicle": _vehicle_index(hmap["vehicle"], "history.vehicle", n),
                "amplitude": _as_float(hmap["amplitude"], "history.amplitude"),
                "omega": _as_float(hmap["omega"], "history.omega"),
            }
        else:
            raise ScenarioError("history.kind must be 'equilibrium', 'perturb', "
                                f"or 'harmonic', got {history_kind!r}")
    history_canon = {"kind": history_kind}
    if history_args:
        history_canon.update(history_args)
        history_canon["vehicle"] = history_args["vehicle"] + 1

    sweep_spec = None
    sweep_canon = None
    if "sweep" in top:
        smap = _expect_map(top["sweep"], "sweep", ["parameter", "vehicle", "grid"],
                           ["gamma_family", "calibration", "perturb_delta", "observe"])
        vehicle = _vehicle_index(smap["vehicle"], "sweep.vehicle", n)
        gmap = _expect_map(smap["grid"], "sweep.grid", [], ["start", "stop", "count", "values"])
        if "values" in gmap:
            _expect_map(gmap, "sweep.grid", ["values"], [])
            if not isinstance(gmap["values"], list) or len(gmap["values"]) == 0:
                raise ScenarioError("sweep.grid.values must be a non-empty list")
            values = tuple(_as_float(v, "sweep.grid.values") for v in gmap["values"])
        else:
            _expect_map(gmap, "sweep.grid", ["start", "stop", "count"], [])
            count = _as_int(gmap["count"], "sweep.grid.count")
            if count < 1:
                raise ScenarioError("sweep.grid.count must be at least 1")
            values = tuple(float(v) for v in np.linspace(
                _as_float(gmap["start"], "sweep.grid.start"),
                _as_float(gmap["stop"], "sweep.grid.stop"), count))
        gamma_family = tuple(
            _as_float(g, "sweep.gamma_family") for g in smap.get("gamma_family", []))
        calibration = None
        if "calibration" in smap:
            cmap = _expect_map(smap["calibration"], "sweep.calibration",
                               ["vehicle", "tau_cr"], [])
            calibration = CalibrationTarget(
                vehicle=_vehicle_index(cmap["vehicle"], "sweep.calibration.vehicle", n),
                tau_cr=_as_float(cmap["tau_cr"], "sweep.calibration.tau_cr"))
        observe = (_vehicle_index(smap["observe"], "sweep.observe", n)
                   if "observe" in smap else None)
        sweep_spec = SweepSpec(
            config=config, vehicle=vehicle, parameter=smap["parameter"],
            values=values, gamma_family=gamma_family, calibration=calibration,
            perturb_delta=_as_float(smap.get("perturb_delta", 5e-4), "sweep.perturb_delta"),
            observe=observe,
        )
        sweep_canon = {
            "parameter": sweep_spec.parameter,
            "vehicle": vehicle + 1,
            "grid": {"values": list(sweep_spec.values)},
            "gamma_family": list(sweep_spec.gamma_family),
            "perturb_delta": sweep_spec.perturb_delta,
            "observe": sweep_spec.observed + 1,
        }
        if calibration is not None:
            sweep_canon["calibration"] = {"vehicle": calibration.vehicle + 1,
                                          "tau_cr": calibration.tau_cr}

    analysis = AnalysisOptions()
    if "analysis" in top:
        amap = _expect_map(top["analysis"], "analysis", [],
                           ["beta_star", "gain_points", "window", "uncertain_beta"])
        analysis.beta_star = _as_float(amap.get("beta_star", 1.0), "analysis.beta_star")
        analysis.gain_points = _as_int(amap.get("gain_points", 2000), "analysis.gain_points")
        analysis.window = _as_float(amap.get("window", 4.0), "analysis.window")
        if "uncertain_beta" in amap:
            umap = _expect_map(amap["uncertain_beta"], "analysis.uncertain_beta",
                               ["lower", "upper"], [])
            analysis.uncertain = UncertainBeta(
                lower=_as_float(umap["lower"], "analysis.uncertain_beta.lower"),
                upper=_as_float(umap["upper"], "analysis.uncertain_beta.upper"))
    analysis_canon = {"beta_star": analysis.beta_star,
                      "gain_points": analysis.gain_points,
                      "window": analysis.window}
    if analysis.uncertain is not None:
        analysis_canon["uncertain_beta"] = {"lower": analysis.uncertain.lower,
                                            "upper": analysis.uncertain.upper}

    canonical = {
        "schema_version": SCHEMA_VERSION,
        "platoon": {
            "exponents": {"m": exponents.m, "l": exponents.l},
            "vehicles": [{"alpha": v.alpha, "tau": v.tau, "gamma": v.gamma, "b": v.b}
                         for v in vehicles],
        },
        "leader": leader_canon,
        "history": history_canon,
        "analysis": analysis_canon,
    }
    if settings_canon is not None:
        canonical["integration"] = settings_canon
    if sweep_canon is not None:
        canonical["sweep"] = sweep_canon

    return Scenario(config=config, settings=settings, history_kind=history_kind,
                    history_args=history_args, sweep=sweep_spec, analysis=analysis,
                    canonical=canonical)


def load_scenario(path: str) -> Scenario:
    """Read and parse a scenario file.

    YAML syntax errors raise :class:`ScenarioParseError` with the line
    and column; schema and domain violations raise
    :class:`ScenarioError` (or the model's own errors).
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        problem = getattr(exc, "problem", None) or str(exc)
        if mark is not None:
            raise ScenarioParseError(problem, mark.line + 1, mark.column + 1) from exc
        raise ScenarioParseError(problem, None, None) from exc
    return parse_scenario(doc)


def serialize_scenario(scenario: Scenario) -> str:
    """Scenario back to YAML text, in canonical (defaults-filled) form."""
    return yaml.safe_dump(scenario.canonical, sort_keys=True, default_flow_style=False)


def scenario_hash(scenario: Scenario) -> str:
    """SHA-256 of the canonical scenario content.

    Identical in-memory scenarios hash identically regardless of the
    formatting, key order, or defaulted keys of the source document.
    """
    blob = json.dumps(scenario.canonical, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# output helpers

def _write_manifest(out_dir: Path, subcommand: str, digest: Optional[str],
                    outputs: List[str]) -> None:
    manifest = {
        "tool_version": __version__,
        "scenario_hash": digest,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "subcommand": subcommand,
        "outputs": sorted(outputs),
    }
    with (out_dir / "manifest.json").open("w", encoding="utf-8", newline="") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt(x: Optional[float]) -> str:
    """Full-precision decimal text; empty for missing values."""
    return "" if x is None else repr(float(x))


def _fault_text(exc: NumericalFault) -> str:
    """Fault description with the 1-based vehicle index used by the CLI."""
    return f"{exc.reason} (vehicle {exc.vehicle + 1}, t={exc.time:.6g})"


# ---------------------------------------------------------------------------
# subcommands

def cmd_validate(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except (ScenarioError, ConfigError, ValueError) as exc:
        if isinstance(exc, ScenarioParseError):
            raise
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    problems = validate_config(scenario.config)
    if problems:
        for p in problems:
            print(f"invalid: {p}", file=sys.stderr)
        return EXIT_DOMAIN
    n = scenario.config.n
    beta = equilibrium_coefficients(scenario.config).beta_star
    print(f"scenario valid: {n} follower(s), schema_version {SCHEMA_VERSION}")
    print(f"scenario hash: {scenario_hash(scenario)}")
    for i in range(n):
        print(f"  vehicle {i + 1}: beta_star = {beta[i]:.6g}")
    return EXIT_OK


def _stability_report(scenario: Scenario) -> dict:
    config = scenario.config
    beta = equilibrium_coefficients(config).beta_star
    local = is_locally_stable(config)
    opts = scenario.analysis
    string_rep = string_stability_report(config, n_points=opts.gain_points,
                                         window=opts.window)
    vehicles = []
    for vs in local.vehicles:
        freq = frequency_comparison(vs.beta_star, vs.gamma)
        osc = non_oscillation_check(vs.beta_star, vs.tau, vs.gamma)
        entry = {
            "vehicle": vs.vehicle + 1,
            "tau": vs.tau,
            "gamma": vs.gamma,
            "beta_star": vs.beta_star,
            "omega0": vs.omega0,
            "tau_cr": vs.tau_cr,
            "margin": vs.margin,
            "locally_stable": vs.stable,
            "on_boundary": vs.on_boundary,
            "f0": freq.f0,
            "f0_feedback_free": freq.f0_feedback_free,
            "frequency_ratio": freq.ratio,
            "non_oscillation": {
                "oscillatory": osc.oscillatory,
                "reason": osc.reason,
                "product": osc.product,
                "threshold": osc.threshold,
            },
        }
        if opts.uncertain is not None:
            entry["robust_tau_bound"] = robust_stability_bound(vs.gamma, opts.uncertain)
        vehicles.append(entry)
    report = {
        "schema": "stability-report/1",
        "leader_speed": config.leader.terminal_velocity,
        "beta_star": [float(b) for b in beta],
        "all_locally_stable": local.all_stable,
        "vehicles": vehicles,
        "string_stability": {
            "necessary_ok": string_rep.necessary_ok,
            "sufficient_ok": string_rep.sufficient_ok,
            "numeric_ok": string_rep.numeric_ok,
            "conflicts": [i + 1 for i in string_rep.conflicts],
            "pair_gains": [
                {"vehicle": pg.vehicle + 1, "sup_gain_sq": pg.sup_gain_sq,
                 "argmax_omega": pg.argmax_omega, "resonant": pg.resonant}
                for pg in string_rep.pair_gains
            ],
        },
    }
    if opts.uncertain is not None:
        bounds = [robust_stability_bound(v.gamma, opts.uncertain)
                  for v in config.vehicles]
        report["robust"] = {
            "lower": opts.uncertain.lower,
            "upper": opts.uncertain.upper,
            "tau_bounds": bounds,
            "min_tau_bound": min(bounds),
        }
    return report


def cmd_stability(args) -> int:
    scenario = load_scenario(args.scenario)
    report = _stability_report(scenario)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out is not None:
        out = _out_dir(args)
        (out / "stability.json").write_text(text + "\n", encoding="utf-8")
        _write_manifest(out, "stability", scenario_hash(scenario), ["stability.json"])
        print(f"wrote {out / 'stability.json'}")
    else:
        print(text)
    return EXIT_OK


def _parse_gamma_grid(spec: str) -> np.ndarray:
    parts = spec.split(":")
    if len(parts) != 3:
        raise ScenarioError("--gamma-grid must look like start:stop:count")
    try:
        a, b = float(parts[0]), float(parts[1])
        n = int(parts[2])
    except ValueError as exc:
        raise ScenarioError(f"bad --gamma-grid value: {exc}") from exc
    if n < 2:
        raise ScenarioError("--gamma-grid needs at least 2 points")
    a = min(max(a, _GAMMA_MIN), _GAMMA_MAX)
    b = min(max(b, _GAMMA_MIN), _GAMMA_MAX)
    if not b > a:
        raise ScenarioError("--gamma-grid needs start < stop after clipping to "
                            f"[{_GAMMA_MIN}, {_GAMMA_MAX}]")
    return np.linspace(a, b, n)


def cmd_chart(args) -> int:
    digest = None
    beta_star = 1.0
    if args.scenario is not None:
        scenario = load_scenario(args.scenario)
        beta_star = scenario.analysis.beta_star
        digest = scenario_hash(scenario)
    grid = _parse_gamma_grid(args.gamma_grid)
    rows = stability_chart(grid, beta_star=beta_star)
    out = _out_dir(args)
    _write_csv(out / "chart.csv",
               ["gamma", "tau_cr", "beta_star_tau_cr"],
               ([f"{g:.15g}", f"{t:.15g}", f"{p:.15g}"] for g, t, p in rows))
    _write_manifest(out, "chart", digest, ["chart.csv"])
    print(f"wrote {out / 'chart.csv'} ({len(rows)} rows)")
    return EXIT_OK


def _trajectory_rows(traj: Trajectory, stride: int):
    ts = traj.times()
    n = traj.config.n
    cols = [traj.series("v", i) for i in range(n)] + \
           [traj.series("y", i) for i in range(n)]
    for k in range(0, ts.size, stride):
        yield [repr(float(ts[k]))] + [repr(float(c[k])) for c in cols]


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    if scenario.settings is None:
        raise ScenarioError("simulate needs an 'integration' section in the scenario")
    config, settings = scenario.config, scenario.settings
    n = config.n
    header = ["t"] + [f"v_{i + 1}" for i in range(n)] + [f"y_{i + 1}" for i in range(n)]
    out = _out_dir(args)
    fault: Optional[NumericalFault] = None
    try:
        traj = integrate_neutral(config, settings, scenario.history())
    except NumericalFault as exc:
        fault = exc
        # recover the part of the trajectory before the fault for inspection
        partial_horizon = math.floor(exc.time / settings.h) * settings.h - settings.h
        traj = None
        if partial_horizon >= 10 * settings.h:
            partial = IntegrationSettings(h=settings.h, horizon=partial_horizon,
                                          transient_cut=settings.transient_cut,
                                          separation_floor=settings.separation_floor)
            traj = integrate_neutral(config, partial, scenario.history())
    rows_written = 0
    if traj is not None:
        with (out / "trajectory.csv").open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in _trajectory_rows(traj, args.stride):
                writer.writerow(row)
                rows_written += 1
    _write_manifest(out, "simulate", scenario_hash(scenario),
                    ["trajectory.csv"] if traj is not None else [])
    if fault is not None:
        print(f"numerical fault: {_fault_text(fault)}; "
              f"wrote {rows_written} row(s) before the fault", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {out / 'trajectory.csv'} ({rows_written} rows)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    scenario = load_scenario(args.scenario)
    if scenario.sweep is None:
        raise ScenarioError("sweep needs a 'sweep' section in the scenario")
    if scenario.settings is None:
        raise ScenarioError("sweep needs an 'integration' section in the scenario")
    result = bifurcation_diagram(scenario.sweep, scenario.settings,
                                 workers=args.workers)
    out = _out_dir(args)
    rows = []
    target = scenario.sweep.vehicle
    for curve in result.curves:
        gamma = (curve.gamma if curve.gamma is not None
                 else scenario.config.vehicles[target].gamma)
        for p in curve.points:
            period = p.metrics.period if p.metrics is not None else None
            rows.append([
                _fmt(gamma), _fmt(p.param_value),
                _fmt(p.envelope.v_min if p.envelope else None),
                _fmt(p.envelope.v_max if p.envelope else None),
                _fmt(p.amplitude if p.envelope else None),
                _fmt(period),
                str(p.sustained).lower(), str(p.oscillatory).lower(),
                _fmt(p.growth_rate), p.status,
            ])
    _write_csv(out / "sweep.csv",
               ["gamma", "param_value", "v_min", "v_max", "amplitude", "period",
                "sustained", "oscillatory", "growth_rate", "status"],
               rows)
    threshold = 10.0 * scenario.sweep.perturb_delta
    classes = []
    for curve in result.curves:
        cls = classify_bifurcation(curve.param_values(), curve.amplitudes(), threshold)
        classes.append({
            "gamma": curve.gamma, "leader_speed": curve.leader_speed,
            "kind": cls.kind, "r_squared": cls.r_squared,
            "onset_index": cls.onset_index, "detail": cls.detail,
        })
    (out / "classification.json").write_text(
        json.dumps({"curves": classes, "threshold": threshold}, indent=2, sort_keys=True)
        + "\n", encoding="utf-8")
    _write_manifest(out, "sweep", scenario_hash(scenario),
                    ["sweep.csv", "classification.json"])
    print(f"wrote {out / 'sweep.csv'} ({len(rows)} rows) and classification.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="platoondyn",
        description="Delay-coupled platoon dynamics: stability analysis, "
                    "simulation, and bifurcation sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, *, scenario_required=True, out=True,
            workers=False, stride=False, gamma_grid=False, out_default=None):
        p = sub.add_parser(name, help=help_text)
        if scenario_required:
            p.add_argument("--scenario", required=True, help="scenario YAML file")
        else:
            p.add_argument("--scenario", help="scenario YAML file (optional)")
        if out:
            p.add_argument("--out", default=out_default,
                           help="output directory" +
                                ("" if out_default is None else f" (default: {out_default})"))
        if workers:
            p.add_argument("--workers", type=int, default=1,
                           help="parallel worker processes (default: 1)")
        if stride:
            p.add_argument("--stride", type=int, default=1,
                           help="write every K-th integration node (default: 1)")
        if gamma_grid:
            p.add_argument("--gamma-grid", dest="gamma_grid",
                           default=_DEFAULT_GAMMA_GRID,
                           help="feedback-weight grid start:stop:count "
                                f"(default: {_DEFAULT_GAMMA_GRID})")
        p.set_defaults(func=func)
        return p

    add("validate", cmd_validate, "check a scenario file", out=False)
    add("stability", cmd_stability, "closed-form stability report (JSON)")
    add("chart", cmd_chart, "critical-delay chart CSV over the feedback weight",
        scenario_required=False, gamma_grid=True, out_default="out")
    add("simulate", cmd_simulate, "integrate and write the trajectory CSV",
        stride=True, out_default="out")
    add("sweep", cmd_sweep, "bifurcation diagram CSV + classification JSON",
        workers=True, out_default="out")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    if getattr(args, "stride", 1) < 1:
        print("--stride must be at least 1", file=sys.stderr)
        return EXIT_DOMAIN
    if getattr(args, "workers", 1) < 1:
        print("--workers must be at least 1", file=sys.stderr)
        return EXIT_DOMAIN
    try:
        return args.func(args)
    except ScenarioParseError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_IO
    except FileNotFoundError as exc:
        print(f"cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalFault as exc:
        print(f"numerical fault: {_fault_text(exc)}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ScenarioError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
