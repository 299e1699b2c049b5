"""Command line entry points.

Subcommands mirror the pipeline stages: generate a trace, train a
predictor, calibrate it, evaluate one cell, sweep a whole grid, and
report aggregated results.  Usage errors (including missing input
files) exit with 2, runtime failures with 1.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from .channel import (generate_trace, link_budget, read_trace, split_dataset,
                      windows, write_trace)
from .conformal import (Calibration, calibration_offsets, conformity_scores,
                        save_calibration, training_bounds)
from .harness import (ExperimentConfig, METHODS, parse_config, read_results,
                      report_text, run_experiment, write_results)
from .predictor import load_checkpoint, save_checkpoint, train


def _load_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        return parse_config(args.config)
    return ExperimentConfig()


def _cmd_generate(args) -> int:
    cfg = _load_config(args)
    system = cfg.system
    if args.speed is not None:
        system = replace(system, speed_kmh=args.speed)
    n_slots = args.slots if args.slots is not None else cfg.n_slots
    trace = generate_trace(system, n_slots, args.seed, cfg.n_sinusoids)
    write_trace(trace, args.out)
    print(f"wrote {trace.n_slots} slots x {trace.h.shape[1]} components to {args.out} "
          f"(doppler {trace.doppler_hz:.3f} Hz)")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    trace = read_trace(args.trace)
    split = split_dataset(trace.n_slots, cfg.history_len)
    x_train, y_train = windows(trace.h, split.train, cfg.history_len)
    x_val, y_val = windows(trace.h, split.val, cfg.history_len)
    tcfg = replace(cfg.train, seed=args.seed)
    result = train(args.arch, x_train, y_train, x_val, y_val, cfg.levels, tcfg)
    save_checkpoint(result.params, args.out)
    print(f"trained {args.arch} for {tcfg.epochs} epochs; "
          f"best epoch {result.best_epoch + 1} "
          f"(val loss {result.val_loss[result.best_epoch]:.6f}); saved {args.out}")
    return 0


def _cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    params = load_checkpoint(args.checkpoint)
    trace = read_trace(args.trace)
    split = split_dataset(trace.n_slots, params.history_len)
    x_cal, y_cal = windows(trace.h, split.cal, params.history_len)
    _, y_train = windows(trace.h, split.train, params.history_len)
    if args.power is not None:
        # match the estimation noise the filter histories carry at this
        # transmit power so the offsets stay honest in deployment
        rho, noise_var = link_budget(trace.config, args.power)
        rng = np.random.default_rng(args.noise_seed)
        x_cal = x_cal + rng.normal(0.0, np.sqrt(noise_var / (2.0 * rho)),
                                   size=x_cal.shape)
    scores = conformity_scores(params, x_cal, y_cal)
    calib = Calibration(calibration_offsets(scores, cfg.levels),
                        training_bounds(y_train, cfg.bounds_mode), cfg.levels)
    save_calibration(calib, args.out)
    print(f"calibrated on {x_cal.shape[0]} windows; "
          f"mean |offset| {np.mean(np.abs(calib.offsets)):.5f}; saved {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    cfg = replace(cfg, methods=(args.method,), tx_powers_dbm=(args.power,),
                  seeds=(args.seed,), n_jobs=1)
    result = run_experiment(cfg)
    if result.failures:
        fail = result.failures[0]
        print(f"error: {fail.message}", file=sys.stderr)
        return 1
    row = result.rows[0]
    print(f"speed_kmh={row.speed_kmh!r} tx_power_dbm={row.tx_power_dbm!r} "
          f"method={row.method} seed={row.seed} nmse_db={row.nmse_db!r}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if args.jobs is not None:
        cfg = replace(cfg, n_jobs=args.jobs)
    result = run_experiment(cfg)
    write_results(result.rows, args.out)
    print(f"wrote {len(result.rows)} result rows to {args.out}")
    for fail in result.failures:
        where = f"seed {fail.seed}"
        if fail.tx_power_dbm is not None:
            where += f" power {fail.tx_power_dbm:g}"
        if fail.method is not None:
            where += f" method {fail.method}"
        print(f"failed cell: {where}: {fail.message}", file=sys.stderr)
    if result.failures:
        print(f"{len(result.failures)} cell(s) failed", file=sys.stderr)
        return 1
    return 0


def _cmd_report(args) -> int:
    rows = read_results(args.csv)
    sys.stdout.write(report_text(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chanpred",
        description="Channel prediction experiments: quantile networks, "
                    "conformal calibration, Bayesian filtering.",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a channel trace file")
    p.add_argument("--config", help="experiment config (INI)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--slots", type=int, help="override the configured trace length")
    p.add_argument("--speed", type=float, help="override the configured speed (km/h)")
    p.add_argument("--out", required=True, help="output trace path")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="train a quantile predictor on a trace")
    p.add_argument("--config", help="experiment config (INI)")
    p.add_argument("--arch", choices=("mlp", "gru"), required=True)
    p.add_argument("--trace", required=True, help="input trace path")
    p.add_argument("--seed", type=int, default=0, help="training seed")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("calibrate", help="compute conformal offsets for a checkpoint")
    p.add_argument("--config", help="experiment config (INI)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--power", type=float,
                   help="transmit power (dBm); adds matching estimation noise "
                        "to the calibration inputs")
    p.add_argument("--noise-seed", type=int, default=0,
                   help="seed for the --power calibration noise")
    p.add_argument("--out", required=True, help="output calibration path")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("evaluate", help="run one (method, power, seed) cell")
    p.add_argument("--config", help="experiment config (INI)")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--power", type=float, required=True, help="transmit power in dBm")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep", help="run the full experiment grid to a CSV")
    p.add_argument("--config", help="experiment config (INI)")
    p.add_argument("--jobs", type=int, help="worker processes for seeds")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", help="print aggregated NMSE from a results CSV")
    p.add_argument("--csv", required=True, help="results CSV path")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure, not a usage problem
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
