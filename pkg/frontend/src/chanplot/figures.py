"""NMSE-vs-power figures from sweep result CSVs.

The input is the results file written by the experiment harness: a CSV
with columns speed_kmh, tx_power_dbm, method, seed, nmse_db (extra
columns are ignored).  Curves show the mean over seeds per transmit
power with sample-std error bars, one line per method.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass

from matplotlib.figure import Figure

REQUIRED_COLUMNS = ("speed_kmh", "tx_power_dbm", "method", "seed", "nmse_db")

_DEFAULT_FMTS = ("o-", "s--", "^-.", "d:", "v-", "*--", "p-.", "x:")


@dataclass(frozen=True)
class MethodCurve:
    """One plotted line: per-power mean and spread over seeds."""

    powers: tuple
    means: tuple
    stds: tuple


@dataclass(frozen=True)
class FigureSpec:
    """What to plot and where to put it.

    ``speed`` selects one speed_kmh value from the CSV; it may stay
    None only when the file contains a single speed.  ``methods`` maps
    method name -> (legend label, matplotlib format string); None plots
    every method in the file under its own name.  Methods named here
    must exist in the CSV.
    """

    csv_path: str
    out_path: str
    speed: float | None = None
    methods: dict | None = None


def read_sweep_csv(path) -> list:
    """Rows of the results CSV as dicts with typed values."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise ValueError(f"{path}: missing columns {', '.join(missing)}")
        rows = []
        for record in reader:
            rows.append({
                "speed_kmh": float(record["speed_kmh"]),
                "tx_power_dbm": float(record["tx_power_dbm"]),
                "method": record["method"],
                "seed": int(record["seed"]),
                "nmse_db": float(record["nmse_db"]),
            })
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return rows


def summarize(rows, speed: float, methods) -> dict:
    """Per-method curves at one speed: mean and sample std over seeds."""
    curves = {}
    for method in methods:
        groups = {}
        for row in rows:
            if row["speed_kmh"] == speed and row["method"] == method:
                groups.setdefault(row["tx_power_dbm"], []).append(row["nmse_db"])
        powers = sorted(groups)
        means = tuple(statistics.fmean(groups[p]) for p in powers)
        stds = tuple(statistics.stdev(groups[p]) if len(groups[p]) > 1 else 0.0
                     for p in powers)
        curves[method] = MethodCurve(tuple(powers), means, stds)
    return curves


def plot_nmse(spec: FigureSpec) -> dict:
    """Write the NMSE-vs-transmit-power figure and return its curves.

    The file is only written once the CSV has passed validation, so a
    bad input never leaves a partial figure behind.
    """
    rows = read_sweep_csv(spec.csv_path)
    speeds = sorted({row["speed_kmh"] for row in rows})
    if spec.speed is None:
        if len(speeds) > 1:
            raise ValueError(
                f"CSV holds several speeds {speeds}; pick one with the speed filter")
        speed = speeds[0]
    else:
        speed = float(spec.speed)
        if speed not in speeds:
            raise ValueError(f"no rows at speed_kmh={speed:g} (file has {speeds})")
    available = {row["method"] for row in rows if row["speed_kmh"] == speed}
    if spec.methods is None:
        ordered = sorted(available)
        styling = {m: (m, _DEFAULT_FMTS[i % len(_DEFAULT_FMTS)])
                   for i, m in enumerate(ordered)}
    else:
        unknown = [m for m in spec.methods if m not in available]
        if unknown:
            raise ValueError(f"methods not in CSV: {', '.join(unknown)}")
        styling = dict(spec.methods)
    curves = summarize(rows, speed, styling)

    fig = Figure(figsize=(6.8, 4.6))
    ax = fig.add_subplot()
    for method, (label, fmt) in styling.items():
        curve = curves[method]
        ax.errorbar(curve.powers, curve.means, yerr=curve.stds, fmt=fmt,
                    capsize=3, label=label)
    ax.set_xlabel("transmit power (dBm)")
    ax.set_ylabel("NMSE (dB)")
    ax.set_title(f"one-slot-ahead prediction error at {speed:g} km/h")
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.savefig(spec.out_path, dpi=150)
    return curves
