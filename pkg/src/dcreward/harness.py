"""Batch experiments: baseline against optimized runs over modes and deferral horizons.

A config is a YAML mapping; see ``configs/demo.yaml`` for every key. Slot
numbers in configs and CSV files are 1-based.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .core import BillingModel, DemandInput, FleetModel, ModelError, baseline_cost, power_profile
from .optimizer import (
    MODES,
    ConvergenceError,
    InfeasibleError,
    RenewableProfile,
    ShutdownParams,
    Tolerances,
    build_program,
    solve,
    verify_solution,
)
from .traces import TurbineCurve, load_request_trace, load_wind_trace, synth_diurnal_trace, synth_wind_speeds, wind_to_power

log = logging.getLogger(__name__)

REPORT_COLUMNS = (
    "mode", "D", "peak_kw", "peak_norm", "cost_usd", "cost_norm",
    "reward_usd", "wear_usd", "profit_delta_usd", "solve_ms", "status",
)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Everything one experiment needs, with the case-study defaults."""

    tau: int = 168
    T: float = 1.0
    alpha: float | list = 0.05207
    windows: list = field(default_factory=lambda: [{"beta": 15.59}])
    N: int | None = None
    target_utilization: float = 0.9
    e0: float = 0.1
    e1: float = 0.1
    nu: float = 20.0
    e_pue: float | list = 1.2
    pi: float | list = 0.5
    lb: float | list = 1e-3
    ub: float | list = 1e-2
    trace: str | None = None
    trace_scale: float = 1.0
    synthetic: dict = field(default_factory=lambda: {"base": 2000.0, "amplitude": 1500.0, "period": 24.0, "noise": 0.05})
    modes: list = field(default_factory=lambda: ["base"])
    d_values: list = field(default_factory=lambda: [0, 1, 2, 5, 10, 15])
    shutdown: dict = field(default_factory=lambda: {"m0": None, "e_tog": 0.01, "c_wear": 0.01})
    wind: str | None = None
    wind_synthetic: dict = field(default_factory=lambda: {"mean": 7.0})
    turbine: dict = field(default_factory=lambda: {"cut_in": 3.0, "rated_speed": 12.0, "cut_out": 25.0,
                                                   "rated_power": 5.0, "turbine_count": 2})
    out: str | None = None
    tol: float = 1e-6
    seed: int = 7
    workers: int = 1
    report_timing: bool = False

    def __post_init__(self):
        if int(self.tau) != self.tau or self.tau < 1:
            raise ConfigError("tau must be a positive integer")
        for d in self.d_values:
            if int(d) != d or d < 0:
                raise ConfigError(f"D values must be non-negative integers, got {d!r}")
        for m in self.modes:
            if m not in MODES:
                raise ConfigError(f"unknown mode {m!r}")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Read a YAML config; keyword overrides (e.g. from the CLI) win."""
    data = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
    data.update({k: v for k, v in overrides.items() if v is not None})
    known = ExperimentConfig.__dataclass_fields__
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class Scenario:
    """Model objects built from a config."""

    billing: BillingModel
    fleet: FleetModel
    demand: DemandInput
    green: RenewableProfile | None
    shutdown: ShutdownParams


def _windows(cfg: ExperimentConfig):
    out = []
    for w in cfg.windows:
        if "slots" in w:
            slots = [int(s) - 1 for s in w["slots"]]
        else:
            start, stop = w.get("start", 1), w.get("stop", cfg.tau)
            slots = list(range(int(start) - 1, int(stop)))
        out.append((slots, float(w["beta"])))
    return out


def build_scenario(cfg: ExperimentConfig) -> Scenario:
    try:
        if cfg.trace:
            lam = load_request_trace(cfg.trace, cfg.trace_scale, cfg.tau)
        else:
            syn = dict(cfg.synthetic)
            lam = synth_diurnal_trace(
                cfg.tau, syn["base"], syn["amplitude"], syn.get("period", 24.0),
                noise_seed=cfg.seed if syn.get("noise", 0) else None, noise=syn.get("noise", 0.0),
            ) * cfg.trace_scale
        N = cfg.N
        if N is None:
            N = max(1, math.ceil(float(np.max(lam)) / (cfg.target_utilization * cfg.nu)))
        billing = BillingModel(cfg.tau, cfg.T, np.broadcast_to(cfg.alpha, cfg.tau), _windows(cfg))
        fleet = FleetModel(N, cfg.e0, cfg.e1, cfg.nu, cfg.e_pue, tau=cfg.tau)
        demand = DemandInput(lam, cfg.pi, cfg.lb, cfg.ub)
        sd = dict(cfg.shutdown)
        m0 = sd.get("m0")
        shutdown = ShutdownParams(N if m0 is None else m0, sd.get("e_tog", 0.01), sd.get("c_wear", 0.01))
        green = None
        if "renewable" in cfg.modes or cfg.wind:
            curve = TurbineCurve(**cfg.turbine)
            if cfg.wind:
                speeds = load_wind_trace(cfg.wind, cfg.tau)
            else:
                speeds = synth_wind_speeds(cfg.tau, cfg.wind_synthetic.get("mean", 7.0), seed=cfg.seed)
            green = wind_to_power(speeds, curve, cfg.T)
    except (ModelError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return Scenario(billing, fleet, demand, green, shutdown)


@dataclass
class ReportRow:
    mode: str
    D: int
    peak_kw: float
    peak_norm: float
    cost_usd: float
    cost_norm: float
    reward_usd: float
    wear_usd: float
    profit_delta_usd: float
    solve_ms: float
    status: str = "ok"
    residuals: dict | None = None


@dataclass
class ExperimentReport:
    baseline: ReportRow
    rows: list

    @property
    def all_rows(self) -> list:
        return [self.baseline, *self.rows]

    def row(self, mode: str, D: int) -> ReportRow:
        for r in self.rows:
            if r.mode == mode and r.D == D:
                return r
        raise KeyError((mode, D))

    @property
    def failed(self) -> list:
        return [r for r in self.rows if r.status != "ok"]


def baseline_row(sc: Scenario) -> ReportRow:
    cost = baseline_cost(sc.demand, sc.fleet, sc.billing)
    peak = float(np.max(power_profile(sc.demand.lam, sc.fleet).p))
    return ReportRow("baseline", 0, peak, 1.0, cost.total, 1.0, 0.0, 0.0, 0.0, 0.0)


def run_one(sc: Scenario, mode: str, D: int, tol: float, baseline: ReportRow):
    """Build, solve and verify one (mode, D) run; failures become marked rows."""
    try:
        program = build_program(mode, sc.demand, sc.fleet, sc.billing, D, shutdown=sc.shutdown, green=sc.green)
        sol = solve(program, Tolerances(tol, tol))
    except InfeasibleError as exc:
        log.warning("%s D=%d infeasible: %s", mode, D, exc)
        return _failed(mode, D, "infeasible", {f: math.inf for f in exc.families}), None
    except ConvergenceError as exc:
        log.warning("%s D=%d did not converge: %s", mode, D, exc)
        return _failed(mode, D, "no-convergence", None), None
    report = verify_solution(sol, tol)
    if not report.ok:
        return _failed(mode, D, "verify-failed", report.residuals), sol
    c = sol.cost
    row = ReportRow(
        mode, D, sol.peak_kw, sol.peak_kw / baseline.peak_kw, c.total, c.total / baseline.cost_usd,
        c.reward, c.wear, c.profit_delta, 1000.0 * sol.diagnostics["solve_time_s"], "ok", report.residuals,
    )
    return row, sol


def _failed(mode, D, status, residuals):
    nan = math.nan
    return ReportRow(mode, D, nan, nan, nan, nan, nan, nan, nan, 0.0, status, residuals)


def run_experiment(cfg: ExperimentConfig, scenario: Scenario | None = None) -> ExperimentReport:
    """Baseline plus one verified optimization per (mode, D), sorted by mode then D."""
    sc = scenario or build_scenario(cfg)
    baseline = baseline_row(sc)
    jobs = [(m, int(d)) for m in MODES if m in cfg.modes for d in sorted(set(cfg.d_values))]
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            rows = list(pool.map(lambda job: run_one(sc, *job, cfg.tol, baseline)[0], jobs))
    else:
        rows = [run_one(sc, m, d, cfg.tol, baseline)[0] for m, d in jobs]
    if not cfg.report_timing:
        rows = [replace(r, solve_ms=0.0) for r in rows]
    return ExperimentReport(baseline, rows)


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def export_report(report: ExperimentReport, path) -> Path:
    """Write the report as CSV; values use ``repr`` so they parse back exactly."""
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(REPORT_COLUMNS)
            for r in report.all_rows:
                writer.writerow([_fmt(getattr(r, c)) for c in REPORT_COLUMNS])
    except OSError as exc:
        raise ConfigError(f"cannot write report to {path}: {exc}") from exc
    return path


def read_report(path) -> list[dict]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in REPORT_COLUMNS:
            if k == "D":
                r[k] = int(r[k])
            elif k not in ("mode", "status"):
                r[k] = float(r[k])
    return rows
