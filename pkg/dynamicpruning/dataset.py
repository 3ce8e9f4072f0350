"""
Generation, loading and synthetic corruption of labeled datasets.
"""
from __future__ import annotations
import csv, math
from pathlib import Path
from typing import Optional, Sequence, Union
import attrs
import numpy as np
from .exceptions import InvalidArgument, DatasetParseError

def _as_features(value) -> np.ndarray:
    array = np.array(value, dtype=np.float64)
    array.setflags(write=False)
    return array

def _as_index(value) -> np.ndarray:
    array = np.array(value, dtype=np.int64)
    array.setflags(write=False)
    return array

@attrs.define(frozen=True, eq=False)
class Dataset:
    """
    N feature vectors with integer class labels.
    Ids are stable sample identifiers; they are strictly increasing and survive subsetting.
    """
    features : np.ndarray = attrs.field(converter=_as_features)
    labels : np.ndarray = attrs.field(converter=_as_index)
    num_classes : int = attrs.field(kw_only=True)
    ids : np.ndarray = attrs.field(kw_only=True, converter=_as_index)

    def __attrs_post_init__(self):
        if self.features.ndim != 2:
            raise InvalidArgument("features must be a 2-d matrix")
        n = self.features.shape[0]
        if self.labels.shape != (n,) or self.ids.shape != (n,):
            raise InvalidArgument("features, labels and ids must have the same length")
        if self.num_classes < 1:
            raise InvalidArgument("num_classes must be at least 1")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InvalidArgument("labels must lie in [0, num_classes)")
        if n > 1 and not np.all(np.diff(self.ids) > 0):
            raise InvalidArgument("ids must be unique and increasing")

    @classmethod
    def from_arrays(cls, features, labels, num_classes : Optional[int] = None) -> Dataset:
        labels = np.asarray(labels, dtype=np.int64)
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if labels.size else 1
        return cls(features, labels, num_classes=num_classes, ids=np.arange(labels.shape[0]))

    @property
    def n_samples(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def positions(self, ids) -> np.ndarray:
        """
        Map sample ids to row positions. Raises InvalidArgument for unknown ids.
        """
        ids = np.asarray(ids, dtype=np.int64)
        positions = np.searchsorted(self.ids, ids)
        if ids.size and (np.any(positions >= self.n_samples) or np.any(self.ids[np.minimum(positions, self.n_samples - 1)] != ids)):
            raise InvalidArgument("subset contains ids that are not in the dataset")
        return positions

    def take(self, positions) -> Dataset:
        """
        Subset by row positions. Rows keep their original ids.
        """
        positions = np.sort(np.asarray(positions, dtype=np.int64))
        return Dataset(self.features[positions], self.labels[positions], num_classes=self.num_classes, ids=self.ids[positions])

    def same_as(self, other : Dataset) -> bool:
        return (
            self.num_classes == other.num_classes
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.features, other.features)
        )

def _class_means(num_classes : int, dim : int) -> np.ndarray:
    # class c sits at (1 + c // d) on axis c % d: means are distinct and at least unit apart
    means = np.zeros((num_classes, dim))
    for c in range(num_classes):
        means[c, c % dim] = 1 + c // dim
    return means

def _check_blob_args(n_per_class : int, num_classes : int, dim : int, spread : float):
    if n_per_class < 1:
        raise InvalidArgument("n_per_class must be at least 1")
    if num_classes < 2:
        raise InvalidArgument("at least 2 classes are needed")
    if dim < 1:
        raise InvalidArgument("dim must be at least 1")
    if not (spread > 0 and math.isfinite(spread)):
        raise InvalidArgument("spread must be positive")

def gen_blobs(n_per_class : int, num_classes : int, dim : int, spread : float, seed : int) -> Dataset:
    """
    Draw n_per_class points from each of num_classes isotropic Gaussian clusters.
    """
    _check_blob_args(n_per_class, num_classes, dim, spread)
    rng = np.random.default_rng(seed)
    means = _class_means(num_classes, dim)
    labels = np.repeat(np.arange(num_classes), n_per_class)
    features = means[labels] + spread * rng.standard_normal((labels.shape[0], dim))
    return Dataset.from_arrays(features, labels, num_classes)

def gen_engineered_blobs(
    n_per_class : int,
    num_classes : int,
    dim : int,
    spread : float,
    seed : int,
    *,
    easy_fraction : float = 0.25,
    hard_fraction : float = 0.10,
    easy_spread_scale : float = 0.25,
) -> Dataset:
    """
    Blobs with injected subpopulations: an easy fraction drawn with a much smaller spread
    and a hard fraction placed near the midpoint towards another class's mean.
    """
    _check_blob_args(n_per_class, num_classes, dim, spread)
    if easy_fraction < 0 or hard_fraction < 0 or easy_fraction + hard_fraction > 1:
        raise InvalidArgument("easy_fraction and hard_fraction must be non-negative and sum to at most 1")
    rng = np.random.default_rng(seed)
    means = _class_means(num_classes, dim)
    labels = np.repeat(np.arange(num_classes), n_per_class)
    n = labels.shape[0]
    kind = rng.random(n)
    easy = kind < easy_fraction
    hard = (kind >= easy_fraction) & (kind < easy_fraction + hard_fraction)
    centers = means[labels].copy()
    other = (labels + rng.integers(1, num_classes, size=n)) % num_classes
    centers[hard] = 0.5 * (means[labels[hard]] + means[other[hard]])
    scale = np.full(n, spread)
    scale[easy] *= easy_spread_scale
    features = centers + scale[:, None] * rng.standard_normal((n, dim))
    return Dataset.from_arrays(features, labels, num_classes)

def _round_half_up(value : float) -> int:
    return int(math.floor(value + 0.5))

def apply_imbalance(ds : Dataset, rates : Sequence[float], seed : int) -> Dataset:
    """
    Keep round(rates[c] * class_counts[c]) samples of every class c, chosen uniformly.
    """
    if len(rates) != ds.num_classes:
        raise InvalidArgument(f"expected {ds.num_classes} rates, got {len(rates)}")
    for rate in rates:
        if not 0 < rate <= 1:
            raise InvalidArgument(f"rate {rate} is not in (0, 1]")
    rng = np.random.default_rng(seed)
    keep = []
    for c, rate in enumerate(rates):
        members = np.flatnonzero(ds.labels == c)
        count = _round_half_up(rate * members.shape[0])
        keep.append(rng.choice(members, size=count, replace=False))
    return ds.take(np.concatenate(keep))

def downsample(ds : Dataset, per_class : int, seed : int) -> Dataset:
    """
    Keep exactly per_class samples of every class, chosen uniformly.
    """
    counts = ds.class_counts
    if per_class < 1:
        raise InvalidArgument(f"per_class must be at least 1, got {per_class}")
    if per_class > counts.min():
        raise InvalidArgument(f"per_class={per_class} exceeds the smallest class ({int(counts.min())})")
    rng = np.random.default_rng(seed)
    keep = [rng.choice(np.flatnonzero(ds.labels == c), size=per_class, replace=False) for c in range(ds.num_classes)]
    return ds.take(np.concatenate(keep))

def split_holdout(ds : Dataset, test_fraction : float, seed : int) -> tuple[Dataset, Dataset]:
    """
    Split into disjoint (train, test) sets, stratified by class.
    """
    if not 0 < test_fraction < 1:
        raise InvalidArgument("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    test = []
    for c in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == c)
        test.append(rng.choice(members, size=_round_half_up(test_fraction * members.shape[0]), replace=False))
    test_positions = np.concatenate(test)
    mask = np.ones(ds.n_samples, dtype=bool)
    mask[test_positions] = False
    return ds.take(np.flatnonzero(mask)), ds.take(test_positions)

def load_csv(path : Union[str, Path], *, num_classes : Optional[int] = None) -> Dataset:
    """
    Read a header-free CSV of d feature columns followed by one integer label.
    Ids follow row order.
    """
    features : list[list[float]] = []
    labels : list[int] = []
    dim = None
    with open(path, newline="", encoding="utf-8") as f:
        for row_number, row in enumerate(csv.reader(f), 1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise DatasetParseError("expected at least one feature and a label", row=row_number)
            if dim is None:
                dim = len(row) - 1
            elif len(row) - 1 != dim:
                raise DatasetParseError(f"expected {dim} features, got {len(row) - 1}", row=row_number)
            try:
                values = [float(cell) for cell in row[:-1]]
                label = int(row[-1])
            except ValueError as e:
                raise DatasetParseError(str(e), row=row_number) from e
            if not all(math.isfinite(v) for v in values):
                raise DatasetParseError("non-finite feature value", row=row_number)
            if label < 0 or (num_classes is not None and label >= num_classes):
                raise DatasetParseError(f"label {label} out of range", row=row_number)
            features.append(values)
            labels.append(label)
    if not labels:
        raise DatasetParseError("empty dataset")
    return Dataset.from_arrays(np.array(features), labels, num_classes)

def save_csv(ds : Dataset, path : Union[str, Path]):
    """
    Write the dataset in the format read by load_csv. Ids are not stored.
    """
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        for x, y in zip(ds.features, ds.labels):
            writer.writerow([repr(float(v)) for v in x] + [int(y)])
