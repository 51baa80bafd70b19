"""Command-line entry point.

Every subcommand writes CSV tables plus ``manifest.json`` into ``--out``.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

import numpy as np

from . import harness
from .config import ConfigError, NumericalError, SystemConfig, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

SUBCOMMANDS = ("run", "sweep-density", "sweep-antennas", "sweep-power", "sweep-pilot",
               "validate-rmt", "sca-cdf")


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of integers, got {text!r}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file (defaults used when omitted)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--drops", type=int, default=None, help="number of independent drops")
    common.add_argument("--slots", type=int, default=200, help="slots per drop")
    common.add_argument("--mode", choices=[m.value for m in harness.BaselineMode], default=None,
                        help="restrict to one mode (default: all modes for sweeps, hybrid for run)")
    common.add_argument("--out", default="results", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="fdhetnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="simulate drops in one mode")
    run.add_argument("--slot-log", action="store_true", help="also write per-slot queue snapshots")
    d = sub.add_parser("sweep-density", parents=[common], help="avgUT / cell-edge UT versus SC count")
    d.add_argument("--values", type=_int_list, default=[2, 4, 8, 16], help="SC counts")
    a = sub.add_parser("sweep-antennas", parents=[common], help="metrics versus MBS antennas")
    a.add_argument("--values", type=_int_list, default=[12, 24, 48, 96], help="antenna counts")
    p = sub.add_parser("sweep-power", parents=[common], help="metrics versus MBS power and carrier")
    p.add_argument("--values", type=_float_list, default=[20.0, 30.0, 41.0], help="MBS powers in dBm")
    p.add_argument("--carriers", default="28GHz,10GHz,2.4GHz", help="comma-separated carriers")
    t = sub.add_parser("sweep-pilot", parents=[common], help="TNU versus pilot length")
    t.add_argument("--values", type=_int_list, default=[20, 40, 60, 80, 100], help="pilot lengths")
    r = sub.add_parser("validate-rmt", parents=[common], help="deterministic equivalent vs Monte Carlo")
    r.add_argument("--values", type=_int_list, default=[12, 24, 48, 96], help="antenna counts")
    r.add_argument("--users", type=int, default=12)
    r.add_argument("--draws", type=int, default=10000)
    r.add_argument("--snr-db", type=float, default=10.0)
    r.add_argument("--tau", type=float, default=0.0)
    c = sub.add_parser("sca-cdf", parents=[common], help="SCA iteration counts on random instances")
    c.add_argument("--instances", type=int, default=100)
    return parser


def _load(args) -> SystemConfig:
    cfg = load_config(args.config) if args.config else SystemConfig()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        cfg = cfg.replace(seed=args.seed)
    cfg.validate()
    if args.drops is not None and args.drops < 1:
        raise ConfigError("--drops must be >= 1")
    if args.slots < 0:
        raise ConfigError("--slots must be >= 0")
    return cfg


def _modes(args, default):
    return (harness.BaselineMode(args.mode),) if args.mode else default


def _run(args, cfg):
    mode = harness.BaselineMode(args.mode or "hybrid")
    drops = args.drops or 1
    per_drop, users, slot_rows, metrics = [], [], [], []
    for d in range(drops):
        reports, m = harness.run_drop(cfg, mode, args.slots, d, record=args.slot_log)
        metrics.append(m)
        per_drop.append({"drop": d, "mode": mode.value, "avg_ut": m.avg_ut,
                         "cell_edge_ut": m.cell_edge_ut,
                         "total_network_utility": m.total_network_utility,
                         "avg_queue_length": m.avg_queue_length,
                         "offloaded_bits": m.offloaded_bits, "fd_fraction": m.fd_fraction,
                         "bound_violations": m.bound_violations,
                         "constraint_violations": m.constraint_violations,
                         "max_kkt_residual": m.max_kkt_residual,
                         "mean_sca_iterations": float(np.mean(m.sca_iterations)) if m.sca_iterations else 0.0})
        users += [{"drop": d, "user": k, "throughput": float(v)} for k, v in enumerate(m.user_throughput)]
        if args.slot_log:
            slot_rows += [{"drop": d, **row} for row in harness.slot_log_rows(reports, cfg.num_mues)]
    tables = {"drops": per_drop, "users": users,
              "summary": harness.summary_rows({}, mode, metrics)}
    if args.slot_log:
        tables["slots"] = slot_rows
    return tables


def _dispatch(args, cfg):
    drops = args.drops or 20
    all_modes = tuple(harness.BaselineMode)
    if args.command == "run":
        return _run(args, cfg)
    if args.command == "sweep-density":
        return {"density": harness.sweep_density(cfg, args.values, _modes(args, all_modes), drops, args.slots)}
    if args.command == "sweep-antennas":
        return {"antennas": harness.sweep_antennas(cfg, args.values, _modes(args, all_modes), drops, args.slots)}
    if args.command == "sweep-power":
        carriers = [c.strip() for c in args.carriers.split(",") if c.strip()]
        return {"power": harness.sweep_power(cfg, args.values, carriers, _modes(args, all_modes),
                                             drops, args.slots)}
    if args.command == "sweep-pilot":
        return {"pilot": harness.sweep_pilot(cfg, args.values, _modes(args, (harness.BaselineMode.HYBRID,)),
                                             drops, args.slots)}
    if args.command == "validate-rmt":
        return {"rmt": harness.validate_rmt(cfg, args.values, args.users, args.draws, args.snr_db, args.tau)}
    if args.command == "sca-cdf":
        rows = harness.sca_cdf(cfg, args.instances)
        return {"sca_instances": rows, "sca_cdf": harness.iteration_cdf(rows)}
    raise ConfigError(f"unknown command {args.command!r}")


def _check_finite(tables):
    for name, rows in tables.items():
        for row in rows:
            for key, v in row.items():
                if isinstance(v, (float, np.floating)) and not np.isfinite(v):
                    raise NumericalError(f"non-finite {key} in table {name}")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        tables = _dispatch(args, cfg)
        _check_finite(tables)
        extra = {"arguments": {k: v for k, v in sorted(vars(args).items())
                               if k not in ("config", "out", "verbose")}}
        harness.emit_results(args.out, tables, cfg, args.command, extra)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
