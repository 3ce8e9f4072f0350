"""
Offline scores for static pruning: forgetting events and EL2N.
"""
from __future__ import annotations
import csv, json, logging
from pathlib import Path
from typing import Any, Optional, Sequence, Union
import numpy as np
from dynamicpruning.dataset import Dataset
from dynamicpruning.exceptions import InvalidArgument, DatasetParseError, LearnerDivergence
from dynamicpruning.learner import LearnerConfig, init_learner, sgd_epoch, lr_at, per_sample_correct, per_sample_error_norm

logger = logging.getLogger("dynamicpruning.static_scores")

def count_forgetting_events(correct : np.ndarray, *, sentinel : Optional[float] = None) -> np.ndarray:
    """
    Count correct -> incorrect transitions per column of an (epochs, N) correctness matrix.
    Columns that are never correct get the sentinel (default N).
    """
    correct = np.asarray(correct, dtype=bool)
    if correct.ndim != 2:
        raise InvalidArgument("correctness history must be (epochs, samples)")
    events = np.sum(correct[:-1] & ~correct[1:], axis=0).astype(np.float64)
    never = ~correct.any(axis=0)
    events[never] = correct.shape[1] if sentinel is None else sentinel
    return events

def _train_full(ds : Dataset, config : LearnerConfig, epochs : int, seed : int, on_epoch=None):
    state = init_learner(config, ds.dim, ds.num_classes, seed)
    shuffle = np.random.default_rng(seed)
    for epoch in range(epochs):
        state, metrics = sgd_epoch(state, ds, ds.ids, lr_at(config.schedule, epoch), int(shuffle.integers(2 ** 32)))
        logger.debug("offline epoch %d: loss=%.4f acc=%.4f", epoch, metrics.loss, metrics.accuracy)
        if on_epoch is not None:
            on_epoch(state)
    return state

def compute_forget_scores(ds : Dataset, config : LearnerConfig, epochs : int, seed : int) -> np.ndarray:
    """
    Train one learner on the full dataset and count forgetting events, evaluating after every epoch.
    """
    if epochs < 1:
        raise InvalidArgument("epochs must be at least 1")
    history : list[np.ndarray] = []
    _train_full(ds, config, epochs, seed, on_epoch=lambda state: history.append(per_sample_correct(state, ds)))
    return count_forgetting_events(np.stack(history))

def compute_el2n_trials(ds : Dataset, config : LearnerConfig, models : int, epochs : int, seeds : Sequence[int]) -> np.ndarray:
    """
    Error norms of independently trained models, one row per model.
    """
    if models < 1 or epochs < 1:
        raise InvalidArgument("models and epochs must be at least 1")
    if len(seeds) != models:
        raise InvalidArgument(f"expected {models} seeds, got {len(seeds)}")
    trials = np.stack([per_sample_error_norm(_train_full(ds, config, epochs, seed), ds) for seed in seeds])
    if not np.all(np.isfinite(trials)):
        raise LearnerDivergence("offline scoring model produced non-finite error norms")
    return trials

def compute_el2n_scores(ds : Dataset, config : LearnerConfig, models : int, epochs : int, seeds : Sequence[int]) -> np.ndarray:
    return compute_el2n_trials(ds, config, models, epochs, seeds).mean(axis=0)

def meta_path(path : Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")

def save_static_scores(path : Union[str, Path], ids : np.ndarray, scores : np.ndarray, *, meta : Optional[dict[str, Any]] = None):
    """
    Write (id, score) or (id, score_trial_1..score_trial_R) rows. Metadata such as the
    scoring method and offline_seconds goes to a JSON file next to it.
    """
    scores = np.atleast_2d(scores)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        if scores.shape[0] == 1:
            writer.writerow(["id", "score"])
        else:
            writer.writerow(["id"] + [f"score_trial_{r}" for r in range(1, scores.shape[0] + 1)])
        for i, sample_id in enumerate(ids):
            writer.writerow([int(sample_id)] + [repr(float(v)) for v in scores[:, i]])
    sidecar = meta_path(path)
    if meta:
        sidecar.write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")
    elif sidecar.exists():
        sidecar.unlink()

def load_static_scores(path : Union[str, Path]) -> tuple[np.ndarray, np.ndarray, dict[str, Any]]:
    """
    Read a score file. Returns (ids, scores as a trials x N matrix, metadata from the sidecar or {}).
    """
    ids : list[int] = []
    rows : list[list[float]] = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or header[0] != "id":
            raise DatasetParseError("score file must start with an id column header")
        for row_number, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetParseError(f"expected {len(header)} columns", row=row_number)
            try:
                ids.append(int(row[0]))
                rows.append([float(v) for v in row[1:]])
            except ValueError as e:
                raise DatasetParseError(str(e), row=row_number) from e
    if not ids:
        raise DatasetParseError("empty score file")
    meta : dict[str, Any] = {}
    sidecar = meta_path(path)
    if sidecar.exists():
        try:
            meta = json.loads(sidecar.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise DatasetParseError(f"unreadable metadata in {sidecar.name}: {e}") from e
        if not isinstance(meta, dict):
            raise DatasetParseError(f"metadata in {sidecar.name} must be an object")
    return np.array(ids, dtype=np.int64), np.array(rows).T, meta
