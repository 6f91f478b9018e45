"""Command-line entry point: ``greenfront tune | measure | report``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .harness import AdapterLaunchError, TrialOptions, run_trial
from .meter import INTENSITY_ENV, PUE_ENV, Inventory, MeterConfig
from .mobo.optimizer import OptimizationAborted, RunOptions, run_optimization
from .mobo.pareto import ObjectiveSpec
from .search_space import SearchSpaceError, load_space, validate_config
from .tracking import (
    TrackingError,
    correlation_report,
    export_csv,
    format_table,
    frontier_report,
    load_runs,
)

log = logging.getLogger("greenfront")

DEFAULT_OBJECTIVES = ("performance:maximize", "efficiency:maximize")


@dataclass
class CliConfig:
    subcommand: str
    space_path: str | None = None
    adapter_cmd: str | None = None
    objectives: list = field(default_factory=list)
    sobol: int | None = None
    iterations: int = 50
    seed: int = 0
    out: str | None = None
    pue: float = 1.0
    carbon_intensity: float = 0.2375
    interval: float = 1.0
    skip_train: bool = False
    timeout: float = 3600.0
    dataset: str = ""
    config_path: str | None = None
    log_path: str | None = None
    csv_path: str | None = None
    columns: list = field(default_factory=list)
    correlate: list = field(default_factory=list)
    figure: str | None = None
    inventory: Inventory = field(default_factory=Inventory)
    verbose: bool = False

    def meter_config(self) -> MeterConfig:
        return MeterConfig(self.interval, self.pue, self.carbon_intensity, self.inventory)

    def trial_options(self) -> TrialOptions:
        return TrialOptions(skip_train=self.skip_train, timeout_seconds=self.timeout,
                            dataset=self.dataset, meter=self.meter_config())


def default_sobol(dimensionality: int) -> int:
    return max(5, 2 * dimensionality)


def _objective(text):
    try:
        return ObjectiveSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _pair(text):
    parts = text.split(":")
    if len(parts) != 2 or not all(parts):
        raise argparse.ArgumentTypeError(f"{text!r} is not metric_a:metric_b")
    return tuple(parts)


def _add_meter_flags(p):
    p.add_argument("--pue", type=float, default=None,
                   help=f"power usage effectiveness (env {PUE_ENV}, default 1.0)")
    p.add_argument("--carbon-intensity", type=float, default=None,
                   help=f"kgCO2eq per kWh (env {INTENSITY_ENV}, default 0.2375)")
    p.add_argument("--interval", type=float, default=1.0, help="sampling interval in seconds")
    p.add_argument("--cpu-tdp", type=float, default=Inventory.cpu_tdp_watts,
                   help="CPU TDP in watts, used when RAPL is unreadable")
    p.add_argument("--core-fraction", type=float, default=1.0,
                   help="share of the CPU's cores in use, e.g. 0.2 for 2 of 10")
    p.add_argument("--ram-gb", type=float, default=None, help="RAM in GB (default: detected)")
    p.add_argument("--gpu", action="store_true", help="poll nvidia-smi for GPU power")
    p.add_argument("--gpu-tdp", type=float, default=None,
                   help="GPU watts to charge if nvidia-smi is unavailable")


def _add_trial_flags(p):
    p.add_argument("--adapter", required=True, help="adapter command line")
    p.add_argument("--skip-train", action="store_true", help="never send the train command")
    p.add_argument("--timeout", type=float, default=3600.0, help="per-trial timeout in seconds")
    p.add_argument("--dataset", default="", help="opaque dataset reference passed to the adapter")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="greenfront", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    tune = sub.add_parser("tune", help="search for the performance/efficiency frontier")
    tune.add_argument("--space", required=True, help="search-space JSON file")
    _add_trial_flags(tune)
    tune.add_argument("--objective", action="append", type=_objective, default=None,
                      metavar="NAME:DIRECTION[:THRESHOLD]",
                      help="repeatable; default performance:maximize efficiency:maximize")
    tune.add_argument("--sobol", type=int, default=None,
                      help="initial Sobol' trials (default max(5, 2 x dimensionality))")
    tune.add_argument("--iterations", type=int, default=50, help="total trial budget")
    tune.add_argument("--seed", type=int, default=0)
    tune.add_argument("--out", default="runs.jsonl", help="run log (JSON lines)")
    tune.add_argument("--figure", default=None, help="write the frontier plot here")
    _add_meter_flags(tune)

    measure = sub.add_parser("measure", help="run and meter a single configuration")
    _add_trial_flags(measure)
    measure.add_argument("--config", required=True, help="JSON object of hyperparameter values")
    measure.add_argument("--space", default=None, help="optional space to validate the config")
    _add_meter_flags(measure)

    report = sub.add_parser("report", help="tables, correlations and figures from a run log")
    report.add_argument("--log", required=True, help="run log written by tune")
    report.add_argument("--objective", action="append", type=_objective, default=None)
    report.add_argument("--correlate", action="append", type=_pair, default=[],
                        metavar="A:B", help="repeatable metric pair for Pearson r")
    report.add_argument("--csv", default=None, help="export the log as CSV")
    report.add_argument("--columns", default=None, help="comma-separated CSV columns")
    report.add_argument("--figure", default=None, help="write the frontier plot here")
    return parser


def _env_float(value, env, default):
    if value is not None:
        return value
    if os.environ.get(env):
        return float(os.environ[env])
    return default


def parse_args(argv) -> CliConfig:
    """Parse ``argv``; exits with status 2 and usage text on bad input."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    cfg = CliConfig(ns.subcommand, verbose=ns.verbose)
    if ns.subcommand in ("tune", "measure"):
        cfg.adapter_cmd = ns.adapter
        cfg.skip_train = ns.skip_train
        cfg.timeout = ns.timeout
        cfg.dataset = ns.dataset
        cfg.space_path = ns.space
        cfg.pue = _env_float(ns.pue, PUE_ENV, 1.0)
        cfg.carbon_intensity = _env_float(ns.carbon_intensity, INTENSITY_ENV, 0.2375)
        cfg.interval = ns.interval
        cfg.inventory = Inventory(ns.cpu_tdp, ns.core_fraction, ns.ram_gb, ns.gpu, ns.gpu_tdp)
        if cfg.pue < 1 or cfg.interval <= 0 or cfg.carbon_intensity < 0:
            parser.error("need --pue >= 1, --interval > 0 and --carbon-intensity >= 0")
    if ns.subcommand == "tune":
        cfg.objectives = ns.objective or [ObjectiveSpec.parse(o) for o in DEFAULT_OBJECTIVES]
        cfg.sobol = ns.sobol
        cfg.iterations = ns.iterations
        cfg.seed = ns.seed
        cfg.out = ns.out
        cfg.figure = ns.figure
        if cfg.iterations < 0 or (cfg.sobol is not None and not 0 <= cfg.sobol <= cfg.iterations):
            parser.error("need --iterations >= --sobol >= 0")
        if len({o.name for o in cfg.objectives}) != len(cfg.objectives):
            parser.error("objective names must be distinct")
    elif ns.subcommand == "measure":
        cfg.config_path = ns.config
    elif ns.subcommand == "report":
        cfg.log_path = ns.log
        cfg.objectives = ns.objective or [ObjectiveSpec.parse(o) for o in DEFAULT_OBJECTIVES]
        cfg.correlate = ns.correlate
        cfg.csv_path = ns.csv
        cfg.columns = ns.columns.split(",") if ns.columns else []
        cfg.figure = ns.figure
    return cfg


def _tune(cfg: CliConfig) -> int:
    space = load_space(cfg.space_path)
    n0 = cfg.sobol if cfg.sobol is not None else min(default_sobol(space.dimensionality), cfg.iterations)
    out = Path(cfg.out)
    options = RunOptions(seed=cfg.seed, trial=cfg.trial_options(), log_path=str(out))
    try:
        front, history = run_optimization(space, cfg.objectives, cfg.adapter_cmd,
                                          cfg.iterations, n0, options)
    except OptimizationAborted as exc:
        print(f"greenfront: aborted after {len(exc.observations)} trials: {exc}", file=sys.stderr)
        return 1
    # the log may predate this run; report only the trials just executed
    records = load_runs(out)[-len(history):] if history else []
    columns, rows = frontier_report(records, cfg.objectives, space.varying_names)
    print(format_table(columns, rows))
    failed = sum(1 for o in history if o.status != "ok")
    joules = sum(r.energy.get("pue_adjusted_joules", 0.0) for r in records if r.energy)
    print(f"\n{len(history)} trials ({failed} failed), {len(rows)} Pareto-optimal; "
          f"evaluation energy {joules:.4g} J; log {out}")
    if cfg.figure:
        from .plotting import plot_frontier

        plot_frontier(records, cfg.figure, cfg.objectives)
        print(f"figure {cfg.figure}")
    return 0


def _measure(cfg: CliConfig) -> int:
    with open(cfg.config_path, encoding="utf-8") as fh:
        config = json.load(fh)
    if cfg.space_path:
        validate_config(config, load_space(cfg.space_path))
    result = run_trial(cfg.adapter_cmd, config, cfg.trial_options())
    print(f"status        {result.status}")
    if result.message:
        print(f"message       {result.message}")
    print(f"performance   {result.performance!r}")
    print(f"samples       {result.samples}")
    print(f"efficiency    {result.efficiency:.6g} samples/J")
    if result.energy is not None:
        e = result.energy
        for comp, j in sorted(e.joules_by_component.items()):
            print(f"  {comp:<11} {j:.6g} J")
        print(f"total         {e.total_joules:.6g} J")
        print(f"pue-adjusted  {e.pue_adjusted_joules:.6g} J (PUE {e.pue:g})")
        print(f"energy        {e.kwh:.6g} kWh")
        print(f"emissions     {e.kg_co2eq:.6g} kgCO2eq")
        print(f"duration      {e.duration_seconds:.4g} s over {e.sample_count} samples")
        for w in e.warnings:
            print(f"warning: {w}", file=sys.stderr)
    return 0 if result.ok else 1


def _report(cfg: CliConfig) -> int:
    if not Path(cfg.log_path).exists():
        raise TrackingError(f"no run log at {cfg.log_path}")
    records = load_runs(cfg.log_path)
    columns, rows = frontier_report(records, cfg.objectives)
    print(format_table(columns, rows))
    if cfg.correlate:
        print()
        table = [[f"{a} vs {b}", "undefined" if r is None else round(r, 4)]
                 for (a, b), r in correlation_report(records, cfg.correlate)]
        print(format_table(["pair", "pearson_r"], table))
    if cfg.csv_path:
        cols = cfg.columns or (["trial_id", "phase", "status"] + [o.name for o in cfg.objectives])
        export_csv(records, cols, cfg.csv_path)
        print(f"csv {cfg.csv_path}")
    if cfg.figure:
        from .plotting import plot_frontier

        plot_frontier(records, cfg.figure, cfg.objectives)
        print(f"figure {cfg.figure}")
    return 0


def run_command(cfg: CliConfig) -> int:
    """Dispatch a parsed command; 0 ok, 1 engine error."""
    handlers = {"tune": _tune, "measure": _measure, "report": _report}
    try:
        return handlers[cfg.subcommand](cfg)
    except (AdapterLaunchError, SearchSpaceError, TrackingError, OSError,
            KeyError, ValueError) as exc:
        print(f"greenfront: error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    try:
        cfg = parse_args(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if cfg.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return run_command(cfg)


if __name__ == "__main__":
    sys.exit(main())
