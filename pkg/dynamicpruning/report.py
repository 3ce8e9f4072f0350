"""
Plot-ready tables from run records.
"""
from __future__ import annotations
import csv, logging
from collections import defaultdict
from pathlib import Path
from typing import Any, Sequence, Union
import numpy as np
from .analysis import selection_profile, curve_table
from .driver import RunRecord
from .exceptions import EmptyReport

logger = logging.getLogger("dynamicpruning.report")

ACCURACY_COLUMNS = ("method", "Tp", "prune_rate", "runs", "failed", "mean_acc", "std_acc")
RUNTIME_COLUMNS = (
    "method", "Tp", "prune_rate", "runs",
    "mean_total_seconds", "std_total_seconds",
    "mean_total_minus_offline_seconds", "std_total_minus_offline_seconds",
    "mean_score_seconds", "mean_train_seconds", "mean_offline_seconds",
)
CURVE_COLUMNS = ("sorted_position", "cumulative_fraction", "mean_over_trials", "std_over_trials")

def method_label(params : dict[str, Any]) -> str:
    """
    Policy name, with the hyperparameter that distinguishes it within a sweep.
    """
    policy = params["policy"]
    if policy in ("eps_greedy", "static_eps_greedy"):
        return f"{policy}[eps={float(params['epsilon']):g}]"
    if policy in ("ucb", "static_ucb"):
        return f"{policy}[c={float(params['c']):g}]"
    return policy

def _group(records : Sequence[RunRecord]) -> dict[tuple[str, int, float], list[RunRecord]]:
    groups : dict[tuple[str, int, float], list[RunRecord]] = defaultdict(list)
    for record in records:
        p = record.params
        groups[(method_label(p), int(p["Tp"]), float(p["prune_rate"]))].append(record)
    return dict(sorted(groups.items()))

def _mean_std(values : Sequence[float]) -> tuple[float, float]:
    if not values:
        return float("nan"), float("nan")
    array = np.asarray(values, dtype=np.float64)
    return float(array.mean()), float(array.std())

def _write(path : Path, columns : Sequence[str], rows : Sequence[Sequence[Any]]):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])

def accuracy_rows(records : Sequence[RunRecord]) -> list[tuple]:
    rows = []
    for (method, period, rate), group in _group(records).items():
        ok = [r for r in group if r.ok]
        mean, std = _mean_std([r.final_test_acc for r in ok])
        rows.append((method, period, rate, len(ok), len(group) - len(ok), mean, std))
    return rows

def runtime_rows(records : Sequence[RunRecord]) -> list[tuple]:
    """
    Static methods are charged their offline scoring time in total_seconds;
    the total_minus_offline columns leave it out.
    """
    rows = []
    for (method, period, rate), group in _group(records).items():
        ok = [r for r in group if r.ok]
        total = _mean_std([r.timings.total_seconds for r in ok])
        net = _mean_std([r.timings.total_minus_offline_seconds for r in ok])
        rows.append((
            method, period, rate, len(ok), total[0], total[1], net[0], net[1],
            _mean_std([r.timings.score_seconds for r in ok])[0],
            _mean_std([r.timings.train_seconds for r in ok])[0],
            _mean_std([r.timings.offline_seconds for r in ok])[0],
        ))
    return rows

def _curve_name(method : str, period : int, rate : float) -> str:
    safe = "".join(ch if ch.isalnum() or ch in "._-" else "_" for ch in method)
    return f"curve_{safe}_tp{period}_rate{rate:g}.csv"

def emit_report(records : Sequence[RunRecord], out_dir : Union[str, Path]) -> dict[str, Path]:
    """
    Write accuracy.csv, runtime.csv and one cumulative selection curve per
    (method, Tp, prune_rate) group that kept its selections. Returns the written paths.
    """
    if not records:
        raise EmptyReport("no run records to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"accuracy": out_dir / "accuracy.csv", "runtime": out_dir / "runtime.csv"}
    _write(paths["accuracy"], ACCURACY_COLUMNS, accuracy_rows(records))
    _write(paths["runtime"], RUNTIME_COLUMNS, runtime_rows(records))
    for (method, period, rate), group in _group(records).items():
        profiles = [selection_profile(r.selections, r.ids) for r in group if r.ok and r.selections and r.ids is not None]
        if not profiles or len({p.counts.shape[0] for p in profiles}) != 1:
            continue
        name = _curve_name(method, period, rate)
        _write(out_dir / name, CURVE_COLUMNS, [(int(row[0]), *map(float, row[1:])) for row in curve_table(profiles)])
        paths[name] = out_dir / name
    logger.info("report of %d records written to %s", len(records), out_dir)
    return paths

def read_table(path : Union[str, Path]) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))
