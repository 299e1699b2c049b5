"""Experiment orchestration: sweeps, metrics, results files, reports.

One experiment cell is (speed, transmit power, method, seed).  Per
seed, a trace is generated and split once, predictors are trained and
calibrated once per architecture, and every method is evaluated on the
same held-out segment with a shared observation-noise realization per
transmit power, so method comparisons are paired.
"""

from __future__ import annotations

import configparser
import csv
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import fit_ar, kf_run, outdated_predict
from .bayes import FilterConfig, dcbf_run
from .channel import (DEFAULT_HISTORY_LEN, SystemConfig, generate_trace,
                      link_budget, observe_sequence, split_dataset, windows)
from .conformal import Calibration, calibration_offsets, conformity_scores, training_bounds
from .predictor import QuantileLevels, TrainConfig, train

logger = logging.getLogger(__name__)

METHODS = ("outdated", "kf", "mlp", "gru", "dcbf_mlp", "dcbf_gru")

CSV_HEADER = ("speed_kmh", "tx_power_dbm", "method", "seed", "nmse_db", "runtime_s")

# ratio floor so perfect predictions map to -100 dB instead of -inf
_NMSE_FLOOR = 1e-10


def nmse_db(predictions, truth) -> float:
    """Normalized MSE in dB: mean over slots of |e_t|^2 / |h_t|^2.

    Slots with zero channel energy are excluded (with a warning); the
    result is floored at -100 dB.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if predictions.shape != truth.shape or predictions.ndim != 2:
        raise ValueError("predictions and truth must be matching 2-d arrays")
    energy = np.sum(truth * truth, axis=1)
    keep = energy > 0.0
    n_dropped = int(np.sum(~keep))
    if n_dropped:
        logger.warning("nmse_db: excluded %d zero-energy slots", n_dropped)
    if not np.any(keep):
        raise ValueError("all slots have zero channel energy")
    err = predictions[keep] - truth[keep]
    ratio = np.sum(err * err, axis=1) / energy[keep]
    return float(10.0 * np.log10(max(ratio.mean(), _NMSE_FLOOR)))


def nmse_energy_db(predictions, truth) -> float:
    """Energy-ratio NMSE in dB: total error energy over total channel energy."""
    predictions = np.asarray(predictions, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if predictions.shape != truth.shape:
        raise ValueError("predictions and truth must have matching shapes")
    denom = float(np.sum(truth * truth))
    if denom <= 0.0:
        raise ValueError("truth has zero energy")
    err = predictions - truth
    return float(10.0 * np.log10(max(float(np.sum(err * err)) / denom, _NMSE_FLOOR)))


@dataclass(frozen=True)
class ResultRow:
    speed_kmh: float
    tx_power_dbm: float
    method: str
    seed: int
    nmse_db: float
    runtime_s: float


@dataclass(frozen=True)
class CellFailure:
    """A sweep cell that raised; the sweep continues without it.

    tx_power_dbm/method are None when the failure took out a whole
    seed (trace generation or training) or a whole power block.
    """

    seed: int
    tx_power_dbm: float | None
    method: str | None
    message: str


@dataclass
class ExperimentResult:
    rows: list
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    n_slots: int = 10000
    history_len: int = DEFAULT_HISTORY_LEN
    n_sinusoids: int = 64
    ar_order: int = 3
    methods: tuple = METHODS
    tx_powers_dbm: tuple = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    seeds: tuple = (0,)
    n_jobs: int = 1
    bounds_mode: str = "per_link"
    train: TrainConfig = field(default_factory=TrainConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    levels: QuantileLevels = field(default_factory=QuantileLevels)

    def __post_init__(self):
        for method in self.methods:
            if method not in METHODS:
                raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ValueError("duplicate methods in config")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        for seed in self.seeds:
            if int(seed) < 0:
                raise ValueError("seeds must be nonnegative integers")
        if not self.tx_powers_dbm:
            raise ValueError("at least one transmit power is required")
        if self.n_jobs < 1:
            raise ValueError("n_jobs must be positive")
        if self.bounds_mode not in ("per_link", "global"):
            raise ValueError("bounds_mode must be per_link or global")


def _derive_seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _run_seed(config: ExperimentConfig, seed: int) -> tuple:
    """All (power, method) cells for one seed.

    Returns (rows, failures).  A failing cell is recorded and skipped
    so the rest of the sweep still completes; a setup failure (trace
    generation, training, AR fit) takes the whole seed with it.
    """
    rows, failures = [], []
    try:
        system = config.system
        trace = generate_trace(system, config.n_slots, seed, config.n_sinusoids)
        split = split_dataset(config.n_slots, config.history_len)
        x_train, y_train = windows(trace.h, split.train, config.history_len)
        x_val, y_val = windows(trace.h, split.val, config.history_len)
        x_cal, y_cal = windows(trace.h, split.cal, config.history_len)

        archs = []
        if {"mlp", "dcbf_mlp"} & set(config.methods):
            archs.append("mlp")
        if {"gru", "dcbf_gru"} & set(config.methods):
            archs.append("gru")
        params = {}
        bounds = training_bounds(y_train, config.bounds_mode) if archs else None
        for arch in archs:
            tcfg = replace(config.train, seed=_derive_seed(seed, 10 + archs.index(arch)))
            result = train(arch, x_train, y_train, x_val, y_val, config.levels, tcfg)
            params[arch] = result.params
            logger.info("seed %d %s: best epoch %d val loss %.5f",
                        seed, arch, result.best_epoch + 1, result.val_loss[result.best_epoch])

        ar_model = None
        if "kf" in config.methods:
            train_slots = len(split.train) + config.history_len
            ar_model = fit_ar(trace.h[:train_slots], config.ar_order)
    except Exception as exc:
        logger.error("seed %d setup failed: %s", seed, exc)
        failures.append(CellFailure(int(seed), None, None, f"{type(exc).__name__}: {exc}"))
        return rows, failures

    # held-out segment: p warm-up slots then one prediction per test window
    start = int(split.test[0])
    stop = int(split.test[-1]) + config.history_len + 1
    target_slots = split.test + config.history_len
    truth = trace.h[target_slots]

    for p_idx, power in enumerate(config.tx_powers_dbm):
        try:
            rho, noise_var = link_budget(system, power)
            obs_rng = np.random.default_rng(_derive_seed(seed, 1000 + p_idx))
            obs = observe_sequence(trace.h[start:stop], system, power, obs_rng)
            # conformal offsets per power: calibration inputs carry the same
            # estimation noise the filter's histories see at this power, so
            # the prior width is honest under deployment conditions
            est_noise = np.sqrt(noise_var / (2.0 * rho))
            calib = {}
            for arch in archs:
                cal_rng = np.random.default_rng(_derive_seed(seed, 3000 + p_idx, archs.index(arch)))
                x_cal_noisy = x_cal + cal_rng.normal(0.0, est_noise, size=x_cal.shape)
                scores = conformity_scores(params[arch], x_cal_noisy, y_cal)
                calib[arch] = Calibration(calibration_offsets(scores, config.levels),
                                          bounds, config.levels)
        except Exception as exc:
            logger.error("seed %d power %s setup failed: %s", seed, power, exc)
            failures.append(CellFailure(int(seed), float(power), None,
                                        f"{type(exc).__name__}: {exc}"))
            continue
        for method in config.methods:
            t0 = time.perf_counter()
            try:
                if method == "outdated":
                    preds = outdated_predict(obs[target_slots - 1 - start], rho)
                elif method == "kf":
                    kf_preds = kf_run(ar_model, obs, rho, noise_var)
                    preds = kf_preds[target_slots - 1 - start]
                else:
                    arch = method.split("_")[-1]
                    fcfg = replace(config.filter,
                                   seed=_derive_seed(seed, 2000 + p_idx, archs.index(arch)))
                    run = dcbf_run(params[arch], calib[arch], trace, fcfg, power,
                                   start=start, stop=stop, observations=obs,
                                   refine_history=method.startswith("dcbf"))
                    preds = run.predictions
                score = nmse_db(preds, truth)
            except Exception as exc:
                logger.error("seed %d power %s method %s failed: %s",
                             seed, power, method, exc)
                failures.append(CellFailure(int(seed), float(power), method,
                                            f"{type(exc).__name__}: {exc}"))
                continue
            rows.append(ResultRow(
                speed_kmh=float(system.speed_kmh),
                tx_power_dbm=float(power),
                method=method,
                seed=int(seed),
                nmse_db=score,
                runtime_s=time.perf_counter() - t0,
            ))
    return rows, failures


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Evaluate every (power, method, seed) cell of the sweep.

    Rows are deterministic functions of the config (runtime_s aside);
    seeds may be dispatched to worker processes with n_jobs > 1 without
    changing the output order.  Cell failures are collected on the
    result rather than raised so one bad cell cannot sink a sweep.
    """
    if config.n_jobs > 1 and len(config.seeds) > 1:
        with ProcessPoolExecutor(max_workers=config.n_jobs) as pool:
            per_seed = list(pool.map(_run_seed, [config] * len(config.seeds), config.seeds))
    else:
        per_seed = [_run_seed(config, seed) for seed in config.seeds]
    return ExperimentResult(
        rows=[row for rows, _ in per_seed for row in rows],
        failures=[f for _, fails in per_seed for f in fails],
    )


# ---- results I/O ----

def write_results(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow([
                repr(float(row.speed_kmh)),
                repr(float(row.tx_power_dbm)),
                row.method,
                int(row.seed),
                repr(float(row.nmse_db)),
                f"{row.runtime_s:.3f}",
            ])


def read_results(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        rows = []
        for record in reader:
            if len(record) != len(CSV_HEADER):
                raise ValueError(f"{path}: malformed row {record!r}")
            rows.append(ResultRow(
                speed_kmh=float(record[0]),
                tx_power_dbm=float(record[1]),
                method=record[2],
                seed=int(record[3]),
                nmse_db=float(record[4]),
                runtime_s=float(record[5]),
            ))
    return rows


def aggregate(rows) -> dict:
    """(speed, power, method) -> (mean nmse_db, sample std, n seeds)."""
    groups = {}
    for row in rows:
        groups.setdefault((row.speed_kmh, row.tx_power_dbm, row.method), []).append(row.nmse_db)
    out = {}
    for key, vals in groups.items():
        arr = np.asarray(vals)
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        out[key] = (float(arr.mean()), std, arr.size)
    return out


def report_text(rows) -> str:
    """Mean NMSE per (speed, power, method) as an aligned text table.

    Means are printed with repr so downstream consumers can reproduce
    them exactly.
    """
    if not rows:
        return "no results\n"
    agg = aggregate(rows)
    speeds = sorted({key[0] for key in agg})
    methods = [m for m in METHODS if any(key[2] == m for key in agg)]
    extra = sorted({key[2] for key in agg} - set(methods))
    methods += extra
    width = 22
    lines = []
    for speed in speeds:
        lines.append(f"speed_kmh={float(speed)!r}")
        lines.append("tx_power_dbm".ljust(14) + "".join(m.rjust(width) for m in methods))
        powers = sorted({key[1] for key in agg if key[0] == speed})
        for power in powers:
            cells = []
            for m in methods:
                entry = agg.get((speed, power, m))
                cells.append(repr(entry[0]) if entry else "-")
            lines.append(f"{power:<14g}" + "".join(c.rjust(width) for c in cells))
        lines.append("")
    return "\n".join(lines)


# ---- config files ----

_CONFIG_SCHEMA = {
    "system": {
        "n_bs": int, "n_ue": int, "carrier_hz": float, "slot_s": float,
        "speed_kmh": float, "bandwidth_hz": float, "noise_psd_dbm_hz": float,
        "pathloss_db": float,
    },
    "experiment": {
        "n_slots": int, "history_len": int, "n_sinusoids": int, "ar_order": int,
        "methods": "strlist", "tx_powers_dbm": "floatlist", "seeds": "intlist",
        "n_jobs": int, "bounds": str,
    },
    "train": {
        "epochs": int, "batch_size": int, "learning_rate": float,
        "input_noise_std": float, "hidden": "intlist",
    },
    "filter": {"n_samples": int},
    "levels": {"taus": "floatlist"},
}


def _convert(kind, raw: str):
    if kind == "strlist":
        return tuple(tok.strip() for tok in raw.split(",") if tok.strip())
    if kind == "floatlist":
        return tuple(float(tok) for tok in raw.replace(",", " ").split())
    if kind == "intlist":
        return tuple(int(tok) for tok in raw.replace(",", " ").split())
    return kind(raw)


def parse_config(path) -> ExperimentConfig:
    """Read an INI experiment config; unspecified keys keep their defaults."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read(path)
    values = {}
    for section in cp.sections():
        if section not in _CONFIG_SCHEMA:
            raise ValueError(f"unknown config section [{section}]")
        values[section] = {}
        for key, raw in cp.items(section):
            if key not in _CONFIG_SCHEMA[section]:
                raise ValueError(f"unknown config key {key!r} in section [{section}]")
            try:
                values[section][key] = _convert(_CONFIG_SCHEMA[section][key], raw)
            except ValueError as exc:
                raise ValueError(f"bad value for [{section}] {key}: {raw!r}") from exc
    system = SystemConfig(**values.get("system", {}))
    train_kwargs = values.get("train", {})
    if "hidden" in train_kwargs:
        train_kwargs["hidden"] = tuple(train_kwargs["hidden"])
    train_cfg = TrainConfig(**train_kwargs)
    filter_cfg = FilterConfig(**values.get("filter", {}))
    levels = QuantileLevels(np.asarray(values["levels"]["taus"])) \
        if "levels" in values and "taus" in values["levels"] else QuantileLevels()
    exp_kwargs = dict(values.get("experiment", {}))
    if "bounds" in exp_kwargs:
        exp_kwargs["bounds_mode"] = exp_kwargs.pop("bounds")
    return ExperimentConfig(system=system, train=train_cfg, filter=filter_cfg,
                            levels=levels, **exp_kwargs)
