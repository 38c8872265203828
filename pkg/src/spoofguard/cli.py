"""Command line interface.

Subcommands: run (single scenario), mc (Monte Carlo batch), analyze
(escape-time and detectability report without simulation), validate
(configuration lint).  Exit codes: 0 success, 1 configuration error,
2 numerical failure.
"""

import argparse
import json
import sys

import numpy as np

from .analysis import branch_name, drift_matrices, escape_report, \
    stationary_covariance
from .exceptions import ConfigError, NumericalError
from .harness import export_trace, monte_carlo, parse_config, run_scenario
from .model import validate_model


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spoofguard",
        description="Spoof-resilient state estimation scenarios and analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a single scenario")
    _common_flags(run_p)
    run_p.add_argument("--out", help="write the trace to this path")
    run_p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="trace file format (default csv)")

    mc_p = sub.add_parser("mc", help="run a Monte Carlo batch")
    _common_flags(mc_p)
    mc_p.add_argument("--runs", type=int, help="override the run count")
    mc_p.add_argument("--out", help="write the batch summary JSON to this path")

    an_p = sub.add_parser("analyze",
                          help="escape time and detectability, no simulation")
    an_p.add_argument("--config", required=True)
    an_p.add_argument("--out", help="write the report JSON to this path")

    va_p = sub.add_parser("validate", help="lint a configuration file")
    va_p.add_argument("--config", required=True)
    return parser


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--steps", type=int, help="override the configured horizon")


def _load(args):
    config = parse_config(args.config)
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise ConfigError(f"seed: must be >= 0, got {args.seed}")
        config.seed = args.seed
    if getattr(args, "steps", None) is not None:
        if args.steps < 1:
            raise ConfigError(f"steps: must be >= 1, got {args.steps}")
        config.steps = args.steps
    if getattr(args, "runs", None) is not None:
        if args.runs < 1:
            raise ConfigError(f"runs: must be >= 1, got {args.runs}")
        config.runs = args.runs
    return config


def _emit(payload: dict, out_path=None) -> None:
    text = json.dumps(payload, indent=2)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)


def cmd_run(args) -> int:
    config = _load(args)
    trace = run_scenario(config)
    if args.out:
        export_trace(trace, args.out, args.format)
    _emit(trace.summary())
    return 0


def cmd_mc(args) -> int:
    config = _load(args)
    batch = monte_carlo(config)
    payload = {
        "runs": batch.n_runs,
        "attack_start": batch.attack_start,
        "first_alarm_steps": [r.first_alarm_step for r in batch.runs],
        "attack_detection_steps": [r.attack_detection_step for r in batch.runs],
        "coverage_post_attack": batch.coverage_post_attack(),
        "mean_final_error": np.linalg.norm(batch.mean_error[-1]).item(),
        "per_run": [{
            "index": r.index,
            "seed": r.seed,
            "first_alarm_step": r.first_alarm_step,
            "attack_detection_step": r.attack_detection_step,
            "covered_steps": r.covered_steps,
            "steps": r.steps,
            "final_err_norm": r.final_err_norm,
        } for r in batch.runs],
    }
    _emit(payload, args.out)
    return 0


def cmd_analyze(args) -> int:
    config = parse_config(args.config)
    model = config.model
    stationary_P = stationary_covariance(model)
    report = escape_report(model, config.zeta_norm, config.detector.alpha,
                           df=model.n, stationary_P=stationary_P)
    drift = drift_matrices(model)
    payload = {
        "first_alarm_step": None,
        "escape_time": int(report.k_escape),
        "escape_time_lower_bound":
            None if report.k_lower_bound is None else float(report.k_lower_bound),
        "stationary_trace_P": float(np.trace(stationary_P)),
        "detectable_gps": drift.gps_pair_detectable,
        "detectable_drift_pair": drift.drift_pair_detectable,
        "norm_A": report.norm_A,
        "branch": branch_name(model),
        "zeta_norm": config.zeta_norm,
        "alpha": config.detector.alpha,
        "df": model.n,
    }
    _emit(payload, args.out)
    return 0


def cmd_validate(args) -> int:
    config = parse_config(args.config)   # raises ConfigError on schema problems
    findings = validate_model(config.model)
    if findings:
        for finding in findings:
            print(f"invalid: {finding}")
        return 1
    print("ok")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "mc": cmd_mc,
                "analyze": cmd_analyze, "validate": cmd_validate}
    try:
        return handlers[args.command](args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
