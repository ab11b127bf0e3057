"""Aggregate per-replicate CSV series into plot-ready quantile files."""
import csv
import json
from pathlib import Path

import numpy as np

from ..errors import ConfigError

QUANTILES = (0.1, 0.5, 0.9)
PLOT_COLUMNS = ("step", "n", "q10", "median", "q90")


def _read_series(path, column):
    steps, values = [], []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            v = row.get(column, "")
            if v == "":
                continue
            steps.append(int(row["step"]))
            values.append(float(v))
    return np.array(steps, dtype=int), np.array(values)


def aggregate(series):
    """Per-step count and quantiles over a list of ``(steps, values)`` pairs.
    Replicates that stop early (divergence) simply drop out of later steps."""
    by_step = {}
    for steps, values in series:
        for s, v in zip(steps, values):
            by_step.setdefault(int(s), []).append(v)
    rows = []
    for s in sorted(by_step):
        q = np.quantile(np.asarray(by_step[s]), QUANTILES)
        rows.append((s, len(by_step[s]), *q))
    return rows


def _scenario_column(scenario_dir):
    summary = scenario_dir / "summary.json"
    if summary.is_file():
        with open(summary, encoding="utf-8") as fh:
            info = json.load(fh)
        return ("distance" if info.get("mode") == "memory-loss" else "ensemble_energy"), info
    return "ensemble_energy", {}


def emit_plot_data(results_dir):
    """Write ``plot_<column>.csv`` in every scenario directory holding ``rep*.csv``
    files. Memory-loss scenarios get a trailing ``gamma_hat`` annotation row.
    Returns the written paths."""
    root = Path(results_dir)
    if not root.is_dir():
        raise ConfigError(f"results directory not found: {root}")
    dirs = sorted({p.parent for p in root.rglob("rep*.csv")})
    if not dirs:
        raise ConfigError(f"no trial CSV files under {root}")
    written = []
    for scen in dirs:
        column, info = _scenario_column(scen)
        series = [_read_series(p, column) for p in sorted(scen.glob("rep*.csv"))]
        rows = aggregate(series)
        out = scen / f"plot_{column}.csv"
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(PLOT_COLUMNS) + "\n")
            for s, n, *q in rows:
                fh.write(",".join([str(s), str(n)] + [repr(float(x)) for x in q]) + "\n")
            if column == "distance":
                g = info.get("median_gamma")
                fh.write("gamma_hat,{},,{},\n".format(len(series), "" if g is None else repr(float(g))))
        written.append(out)
    return written
