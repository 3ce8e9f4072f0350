"""
Per-sample streaming statistics of the uncertainty score.
"""
from __future__ import annotations
import csv, io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional, Union

try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self
import numpy as np
from .commons import DEFAULT_ALPHA
from .exceptions import InvalidArgument, EmptyScoreboard, NonFiniteScores, CorruptSnapshot, SelectionError

SNAPSHOT_COLUMNS = ("id", "ema", "var", "last_raw", "sel_count", "welford_mean", "alpha", "checkpoints_seen", "variance_rule", "n_samples")

VarianceRule = Literal["literal", "welford"]

def _finite_vector(raw, n : Optional[int] = None) -> np.ndarray:
    raw = np.array(raw, dtype=np.float64).reshape(-1)
    if n is not None and raw.shape[0] != n:
        raise InvalidArgument(f"expected {n} scores, got {raw.shape[0]}")
    if not np.all(np.isfinite(raw)):
        raise NonFiniteScores("scores must be finite")
    return raw

@dataclass(slots=True, eq=False)
class Scoreboard:
    """
    EMA mean and running variance of every sample's score, plus selection counts.

    With variance_rule "literal" the variance follows the exponentially weighted recurrence
    driven by the pre-update mean. "welford" keeps the textbook running variance of the raw
    scores instead; the initial scores count as the first observation.
    """
    ema : np.ndarray
    var : np.ndarray
    last_raw : np.ndarray
    sel_count : np.ndarray
    checkpoints_seen : int = 0
    alpha : float = DEFAULT_ALPHA
    variance_rule : VarianceRule = "literal"
    welford_mean : Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_samples(self) -> int:
        return int(self.ema.shape[0])

    def observe(self, raw) -> Self:
        """
        Fold a fresh full-dataset score vector into the statistics.
        """
        raw = _finite_vector(raw, self.n_samples)
        previous = self.ema
        if self.variance_rule == "literal":
            self.var = (1 - self.alpha) * self.var + self.alpha * (raw - previous) ** 2
        else:
            assert self.welford_mean is not None
            count = self.checkpoints_seen + 2
            delta = raw - self.welford_mean
            self.welford_mean = self.welford_mean + delta / count
            self.var = (self.var * (count - 1) + delta * (raw - self.welford_mean)) / count
        self.ema = self.alpha * raw + (1 - self.alpha) * previous
        self.last_raw = raw
        self.checkpoints_seen += 1
        return self

    def pass_checkpoint(self) -> Self:
        """
        Count a checkpoint at which no scores were observed (random and static policies).
        """
        self.checkpoints_seen += 1
        return self

    def record_selection(self, selected) -> Self:
        selected = np.asarray(selected, dtype=np.int64).reshape(-1)
        if selected.size and (selected.min() < 0 or selected.max() >= self.n_samples):
            raise SelectionError("selected index out of range")
        np.add.at(self.sel_count, np.unique(selected), 1)
        return self

    def ucb(self, c : float) -> np.ndarray:
        return self.ema + c * self.var

    def copy(self) -> Scoreboard:
        return Scoreboard(
            ema=self.ema.copy(),
            var=self.var.copy(),
            last_raw=self.last_raw.copy(),
            sel_count=self.sel_count.copy(),
            checkpoints_seen=self.checkpoints_seen,
            alpha=self.alpha,
            variance_rule=self.variance_rule,
            welford_mean=None if self.welford_mean is None else self.welford_mean.copy(),
        )

    def __eq__(self, other):
        if not isinstance(other, Scoreboard):
            return NotImplemented
        same_welford = (self.welford_mean is None and other.welford_mean is None) or (
            self.welford_mean is not None and other.welford_mean is not None and np.array_equal(self.welford_mean, other.welford_mean)
        )
        return (
            self.checkpoints_seen == other.checkpoints_seen
            and self.alpha == other.alpha
            and self.variance_rule == other.variance_rule
            and np.array_equal(self.ema, other.ema)
            and np.array_equal(self.var, other.var)
            and np.array_equal(self.last_raw, other.last_raw)
            and np.array_equal(self.sel_count, other.sel_count)
            and same_welford
        )

    def snapshot(self, ids : Optional[np.ndarray] = None) -> bytes:
        return snapshot(self, ids)

def init_scores(raw, alpha : float = DEFAULT_ALPHA, *, variance_rule : VarianceRule = "literal") -> Scoreboard:
    """
    Start from the scores of the untrained model with zero variance.
    """
    if not 0 < alpha <= 1:
        raise InvalidArgument("alpha must be in (0, 1]")
    if variance_rule not in ("literal", "welford"):
        raise InvalidArgument(f"unknown variance rule {variance_rule!r}")
    raw = _finite_vector(raw)
    if raw.shape[0] == 0:
        raise EmptyScoreboard("empty scoreboard")
    return Scoreboard(
        ema=raw.copy(),
        var=np.zeros_like(raw),
        last_raw=raw.copy(),
        sel_count=np.zeros(raw.shape[0], dtype=np.int64),
        alpha=float(alpha),
        variance_rule=variance_rule,
        welford_mean=raw.copy() if variance_rule == "welford" else None,
    )

def observe(sb : Scoreboard, raw) -> Scoreboard:
    return sb.observe(raw)

def record_selection(sb : Scoreboard, selected) -> Scoreboard:
    return sb.record_selection(selected)

def snapshot(sb : Scoreboard, ids : Optional[np.ndarray] = None) -> bytes:
    """
    Serialize as one flat CSV: a header row, then one row per sample. The scalar state
    (alpha, checkpoints_seen, variance_rule, n_samples) is repeated on every row and
    welford_mean is empty under the literal rule. Floats use repr, so restore is bit-exact.
    """
    ids = np.arange(sb.n_samples) if ids is None else np.asarray(ids)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SNAPSHOT_COLUMNS)
    scalars = [repr(float(sb.alpha)), sb.checkpoints_seen, sb.variance_rule, sb.n_samples]
    for i in range(sb.n_samples):
        welford = "" if sb.welford_mean is None else repr(float(sb.welford_mean[i]))
        writer.writerow([int(ids[i]), repr(float(sb.ema[i])), repr(float(sb.var[i])), repr(float(sb.last_raw[i])), int(sb.sel_count[i]), welford] + scalars)
    return out.getvalue().encode("utf-8")

def restore(data : bytes) -> Scoreboard:
    return restore_with_ids(data)[0]

def restore_with_ids(data : bytes) -> tuple[Scoreboard, np.ndarray]:
    try:
        rows = list(csv.reader(io.StringIO(data.decode("utf-8"))))
        if not rows or tuple(rows[0]) != SNAPSHOT_COLUMNS:
            raise CorruptSnapshot("bad column header")
        rows = rows[1:]
        if not rows or any(len(row) != len(SNAPSHOT_COLUMNS) for row in rows):
            raise CorruptSnapshot("incomplete rows")
        alpha, checkpoints_seen, rule, n = rows[0][6:]
        if any(row[6:] != rows[0][6:] for row in rows):
            raise CorruptSnapshot("scalar columns differ between rows")
        if len(rows) != int(n):
            raise CorruptSnapshot(f"expected {n} rows, got {len(rows)}")
        if rule not in ("literal", "welford"):
            raise CorruptSnapshot(f"unknown variance rule {rule!r}")
        alpha = float(alpha)
        if not 0 < alpha <= 1:
            raise CorruptSnapshot(f"alpha {alpha!r} is not in (0, 1]")
        welford = rule == "welford"
        ids = np.array([int(row[0]) for row in rows], dtype=np.int64)
        sb = Scoreboard(
            ema=np.array([float(row[1]) for row in rows]),
            var=np.array([float(row[2]) for row in rows]),
            last_raw=np.array([float(row[3]) for row in rows]),
            sel_count=np.array([int(row[4]) for row in rows], dtype=np.int64),
            checkpoints_seen=int(checkpoints_seen),
            alpha=alpha,
            variance_rule=rule,
            welford_mean=np.array([float(row[5]) for row in rows]) if welford else None,
        )
    except CorruptSnapshot:
        raise
    except (UnicodeDecodeError, csv.Error, ValueError, IndexError) as e:
        raise CorruptSnapshot("could not parse scoreboard snapshot") from e
    finite = np.isfinite(sb.ema).all() and np.isfinite(sb.var).all() and np.isfinite(sb.last_raw).all()
    if not finite or np.any(sb.var < 0) or np.any(sb.sel_count < 0) or sb.checkpoints_seen < 0:
        raise CorruptSnapshot("snapshot violates scoreboard invariants")
    return sb, ids


def save(sb : Scoreboard, path : Union[str, Path], ids : Optional[np.ndarray] = None):
    Path(path).write_bytes(snapshot(sb, ids))

def load(path : Union[str, Path]) -> Scoreboard:
    return restore(Path(path).read_bytes())
