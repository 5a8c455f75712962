"""Command-line entry point: ``gridfreq {analyze,simulate,tune,compare}``."""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, GridFreqError, ParseError
from .h2core import NoiseWeights
from .lti import ControllerSpec, Droop, IDroop, NoControl, VirtualInertia, per_bus_controllers
from .metrics import MetricsReport, StepDisturbance, _fmt, analytic_report
from .netmodel import NetworkCase, load_case
from .simulate import (SimConfig, empirical_metrics, histogram, simulate_step, simulate_stochastic,
                       write_histogram_csv, write_trace_csv)
from .tuning import (droop_variance_optimal, idroop_nadir_tuning, idroop_nu_star, idroop_variance_window,
                     idroop_zero_sync_cost)

SCENARIOS = ("step", "noise", "combined")
CONTROLLERS = ("none", "droop", "vi", "idroop")
OBJECTIVES = ("variance", "nadir", "zero-sync", "all")
DEFAULT_MV = 0.022
DEFAULT_NOISE_DELTA = 0.1


@dataclass
class RunConfig:
    case: Optional[str] = None
    scenario: str = "step"
    controllers: tuple = ("droop", "vi", "idroop")
    rr_inv: Optional[float] = None
    mv: Optional[float] = None
    nu: Optional[float] = None
    delta: Optional[float] = None
    kappa_p: float = 1e-4
    kappa_w: float = 1e-5
    u0: Optional[str] = None
    step_time: float = 1.0
    seed: int = 0
    out: str = "out"
    dt: Optional[float] = None
    horizon: Optional[float] = None
    stride: int = 10
    deadband: Optional[float] = None
    objective: str = "all"
    allow_vi_noise: bool = False
    bins: int = 60

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}")
        if isinstance(self.controllers, str):
            self.controllers = (self.controllers,)
        self.controllers = tuple(self.controllers)
        bad = [c for c in self.controllers if c not in CONTROLLERS]
        if bad:
            raise ConfigError(f"unknown controller(s) {bad}; choose from {CONTROLLERS}")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}")
        if self.case is None:
            raise ConfigError("no case file given (--case or 'case' in the config file)")

    @property
    def noise(self) -> NoiseWeights:
        return NoiseWeights(self.kappa_p, self.kappa_w)


def parse_u0(spec: Optional[str], case: NetworkCase) -> np.ndarray:
    """``"bus:value,bus:value"`` -> per-bus step vector (default: -0.3 at bus 2, else the first bus)."""
    u0 = np.zeros(case.n)
    if spec is None or not spec.strip():
        bus = 2 if 2 in case.index else case.ids[0]
        u0[case.index[bus]] = -0.3
        return u0
    for part in spec.split(","):
        try:
            bus, val = part.split(":")
            bus, val = int(bus), float(val)
        except ValueError:
            raise ConfigError(f"bad --u0 entry {part!r}; expected bus:value") from None
        if bus not in case.index:
            raise ConfigError(f"--u0 refers to unknown bus {bus}")
        u0[case.index[bus]] += val
    return u0


def build_controller(name: str, cfg: RunConfig, case: NetworkCase, scenario: Optional[str] = None) -> ControllerSpec:
    """Representative controller; unset iDroop gains follow the scenario's recommended tuning."""
    rep = case.representative
    rr = rep.r_r_inv if cfg.rr_inv is None else cfg.rr_inv
    scenario = scenario or cfg.scenario
    if name == "none":
        return NoControl()
    if name == "droop":
        return Droop(rr)
    if name == "vi":
        return VirtualInertia(DEFAULT_MV if cfg.mv is None else cfg.mv, rr)
    if scenario == "step":
        nu, delta = rr + rep.r_t_inv, 1.0 / rep.tau
    else:
        nu, delta = idroop_nu_star(rep, cfg.noise), DEFAULT_NOISE_DELTA
    return IDroop(nu if cfg.nu is None else cfg.nu, delta if cfg.delta is None else cfg.delta, rr)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("GRIDFREQ_THREADS", "1")))
    except ValueError:
        return 1


def _ordered_map(fn, items):
    """Map with up to ``GRIDFREQ_THREADS`` workers; results keep input order."""
    items = list(items)
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _load(cfg: RunConfig) -> NetworkCase:
    case = load_case(cfg.case)
    if cfg.deadband is not None:
        case = case.with_deadband(cfg.deadband)
    return case


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)


def _report_rows(named: list[tuple[str, MetricsReport]]):
    header = ["controller"] + [k for k, _ in named[0][1].as_items()]
    return header, [[name] + [v for _, v in rpt.as_items()] for name, rpt in named]


def analytic_reports(cfg: RunConfig, case: NetworkCase) -> list[tuple[str, MetricsReport]]:
    """Closed-form metrics for each selected controller (shared by ``analyze`` and ``compare``)."""
    step = StepDisturbance(parse_u0(cfg.u0, case), cfg.step_time) if cfg.scenario != "noise" else None
    noise = cfg.noise if cfg.scenario != "step" else None

    def one(name):
        c = build_controller(name, cfg, case)
        return name, analytic_report(case, c, step, noise)

    return _ordered_map(one, cfg.controllers)


def _print_table(header, rows, stream=None):
    stream = sys.stdout if stream is None else stream
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) for i, h in enumerate(header)]
    print("  ".join(str(h).ljust(w) for h, w in zip(header, widths)), file=stream)
    for r in rows:
        print("  ".join(str(v).ljust(w) for v, w in zip(r, widths)), file=stream)


def cmd_analyze(cfg: RunConfig) -> int:
    case = _load(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    named = analytic_reports(cfg, case)
    for name, rpt in named:
        (out / f"analyze_{name}.csv").write_text(rpt.to_csv())
    header, rows = _report_rows(named)
    _write_rows(out / "analyze_table.csv", header, rows)
    _print_table(header, rows)
    return 0


def _sim_config(cfg: RunConfig, scenario: str) -> SimConfig:
    if scenario == "step":
        return SimConfig(dt=cfg.dt or 1e-3, horizon=cfg.horizon or 60.0, seed=cfg.seed, method="rk4",
                         record_stride=cfg.stride)
    return SimConfig(dt=cfg.dt or 1e-3, horizon=cfg.horizon or 100.0, seed=cfg.seed, method="em",
                     record_stride=cfg.stride)


def _simulate_one(cfg: RunConfig, case: NetworkCase, name: str, scenario: str, out: Path,
                  analytic: Optional[MetricsReport] = None) -> MetricsReport:
    c = build_controller(name, cfg, case, scenario)
    ctrls = per_bus_controllers(case.ratings, c)
    sc = _sim_config(cfg, scenario)
    step = StepDisturbance(parse_u0(cfg.u0, case), cfg.step_time)
    if scenario == "step":
        trace = simulate_step(case, ctrls, step, sc)
        # deadbands move the synchronous frequency; only check settling against the linear prediction without them
        ref = analytic if analytic is not None and not np.any(case.deadband > 0) else None
        try:
            rpt = empirical_metrics(trace, ref)
        except GridFreqError:
            rpt = empirical_metrics(trace, None)
            rpt.extra["settled"] = 0.0
    else:
        trace = simulate_stochastic(case, ctrls, cfg.noise, sc, allow_vi_noise=cfg.allow_vi_noise,
                                    turbine=scenario == "combined",
                                    step=step if scenario == "combined" else None)
        rpt = empirical_metrics(trace, analytic, burn_in=min(10.0, 0.1 * sc.horizon))
        edges, dens = histogram(trace, bins=cfg.bins, burn_in=min(10.0, 0.1 * sc.horizon))
        write_histogram_csv(edges, dens, out / f"hist_{scenario}_{name}.csv")
    write_trace_csv(trace, out / f"trace_{scenario}_{name}.csv")
    return rpt


def cmd_simulate(cfg: RunConfig) -> int:
    case = _load(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    named = _ordered_map(lambda nm: (nm, _simulate_one(cfg, case, nm, cfg.scenario, out)), cfg.controllers)
    header, rows = _report_rows(named)
    _write_rows(out / f"simulate_{cfg.scenario}_table.csv", header, rows)
    _print_table(header, rows)
    return 0


def cmd_tune(cfg: RunConfig) -> int:
    case = _load(cfg)
    rep = case.representative
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rr = rep.r_r_inv if cfg.rr_inv is None else cfg.rr_inv
    rows = []
    objectives = ("variance", "nadir", "zero-sync") if cfg.objective == "all" else (cfg.objective,)
    if "variance" in objectives:
        w = cfg.noise
        rstar = droop_variance_optimal(rep, w)
        rows.append(["variance", "droop", _fmt(rstar), "", "", "optimal droop gain for the noise weights"])
        win = idroop_variance_window(rep, w, rr)
        delta = DEFAULT_NOISE_DELTA if cfg.delta is None else cfg.delta
        note = ("degenerate: iDroop can only match droop" if win.degenerate else
                f"iDroop beats droop for nu between {_fmt(rr)} and {_fmt(win.nu_star)}; smaller delta is better")
        rows.append(["variance", "idroop", _fmt(rr), _fmt(win.nu_star), _fmt(delta), note])
    if "nadir" in objectives:
        rec = idroop_nadir_tuning(replace(rep, r_r=1.0 / rr) if cfg.rr_inv is not None else rep)
        c = rec.controller
        rows.append(["nadir", "idroop", _fmt(c.r_r_inv), _fmt(c.nu), _fmt(c.delta), rec.notes])
    if "zero-sync" in objectives:
        rec = idroop_zero_sync_cost(rep, cfg.delta, cfg.nu if cfg.nu is not None else 1e4)
        c = rec.controller
        rows.append(["zero-sync", "idroop", _fmt(c.r_r_inv), _fmt(c.nu), _fmt(c.delta), rec.notes])
    header = ["objective", "controller", "r_r_inv", "nu", "delta", "notes"]
    _write_rows(out / "tune.csv", header, rows)
    _print_table(header, rows)
    return 0


def cmd_compare(cfg: RunConfig) -> int:
    """Analytic table plus step and noise simulations for each controller (CSV series for plotting)."""
    case = _load(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    named = analytic_reports(cfg, case)
    header, rows = _report_rows(named)
    _write_rows(out / "compare_analytic.csv", header, rows)
    analytic = dict(named)
    scenarios = ("step", "noise", "combined") if cfg.scenario == "combined" else ("step", "noise")
    jobs = []
    for scen in scenarios:
        for nm in cfg.controllers:
            if scen != "step" and nm == "vi" and not cfg.allow_vi_noise:
                continue  # unbounded variance; see the analytic table
            jobs.append((scen, nm))

    def run(job):
        scen, nm = job
        return job, _simulate_one(cfg, case, nm, scen, out, analytic.get(nm) if scen == cfg.scenario else None)

    results = _ordered_map(run, jobs)
    emp = [(f"{scen}:{nm}", rpt) for (scen, nm), rpt in results]
    if emp:
        keys = sorted({k for _, r in emp for k, _ in r.as_items()})
        rows = [[name] + [dict(r.as_items()).get(k, "") for k in keys] for name, r in emp]
        _write_rows(out / "compare_empirical.csv", ["run"] + keys, rows)
    _print_table(header, _report_rows(named)[1])
    return 0


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "tune": cmd_tune, "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridfreq", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON file with any of the options below")
        s.add_argument("--case")
        s.add_argument("--scenario", choices=SCENARIOS)
        s.add_argument("--controller", action="append", choices=CONTROLLERS, dest="controllers")
        s.add_argument("--rr-inv", type=float, dest="rr_inv")
        s.add_argument("--mv", type=float)
        s.add_argument("--nu", type=float)
        s.add_argument("--delta", type=float)
        s.add_argument("--kappa-p", type=float, dest="kappa_p")
        s.add_argument("--kappa-w", type=float, dest="kappa_w")
        s.add_argument("--u0", help="per-bus step, e.g. '2:-0.3,5:0.1'")
        s.add_argument("--step-time", type=float, dest="step_time")
        s.add_argument("--seed", type=int)
        s.add_argument("--out")
        s.add_argument("--dt", type=float)
        s.add_argument("--horizon", type=float)
        s.add_argument("--stride", type=int)
        s.add_argument("--deadband", type=float, help="turbine deadband in rad/s (overrides the case)")
        s.add_argument("--objective", choices=OBJECTIVES)
        s.add_argument("--allow-vi-noise", action="store_true", default=None, dest="allow_vi_noise")
        s.add_argument("--bins", type=int)
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    values = {}
    if ns.config:
        try:
            with open(ns.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read config {ns.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise ParseError("config must be a JSON object")
        known = {f.name for f in fields(RunConfig)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        values.update(doc)
        if "case" in doc and not os.path.isabs(doc["case"]):
            values["case"] = str(Path(ns.config).parent / doc["case"])
    for f in fields(RunConfig):
        v = getattr(ns, f.name, None)
        if v is not None:
            values[f.name] = v
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
        return COMMANDS[ns.command](cfg)
    except (ParseError, ConfigError, OSError) as exc:
        print(f"gridfreq: configuration error: {exc}", file=sys.stderr)
        return 2
    except GridFreqError as exc:
        print(f"gridfreq: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
