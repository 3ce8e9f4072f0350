"""
Selection distributions: per-sample selection fractions and rates, cumulative curves,
always/sometimes/never grouping and the retrain policies built from them.
"""
from __future__ import annotations
from typing import Literal, Optional, Sequence
import attrs
import numpy as np
from .commons import DEFAULT_HI, DEFAULT_LO
from .exceptions import InvalidArgument, RaggedHistory, BudgetTooSmall
from .policies import PolicySpec, compute_k

def _frozen(value) -> np.ndarray:
    array = np.array(value)
    array.setflags(write=False)
    return array

@attrs.define(frozen=True, eq=False)
class SelectionProfile:
    """
    frac[i]: share of all k * P selection slots taken by sample i (sums to 1).
    rate[i]: fraction of the P checkpoints at which sample i was selected.
    """
    ids : np.ndarray = attrs.field(converter=_frozen)
    counts : np.ndarray = attrs.field(converter=_frozen)
    P : int
    k : int

    @property
    def frac(self) -> np.ndarray:
        return self.counts / (self.k * self.P)

    @property
    def rate(self) -> np.ndarray:
        return self.counts / self.P

def selection_profile(history : Sequence[np.ndarray], ids : Optional[np.ndarray] = None, *, n_samples : Optional[int] = None) -> SelectionProfile:
    """
    Count how often every sample was selected. The universe of samples is ids if given,
    else 0..n_samples-1, else 0..max selected id.
    """
    if len(history) < 1:
        raise RaggedHistory("history has no checkpoints")
    sets = [np.unique(np.asarray(s, dtype=np.int64)) for s in history]
    k = sets[0].shape[0]
    for index, s in enumerate(sets):
        if s.shape[0] != k or s.shape[0] != np.asarray(history[index]).shape[0]:
            raise RaggedHistory(f"checkpoint {index} selects {np.asarray(history[index]).shape[0]} samples, expected {k} distinct")
    if ids is None:
        n = n_samples if n_samples is not None else int(max(s.max() for s in sets)) + 1
        ids = np.arange(n)
    ids = np.asarray(ids, dtype=np.int64)
    positions = np.searchsorted(ids, np.concatenate(sets))
    if np.any(positions >= ids.shape[0]) or np.any(ids[np.minimum(positions, ids.shape[0] - 1)] != np.concatenate(sets)):
        raise InvalidArgument("history selects ids outside the sample universe")
    counts = np.bincount(positions, minlength=ids.shape[0])
    return SelectionProfile(ids, counts, len(sets), k)

def cumulative_curve(profile : SelectionProfile) -> np.ndarray:
    """
    Slot fractions sorted from most to least selected, prefix-summed.
    """
    return np.cumsum(np.sort(profile.frac)[::-1])

@attrs.define(frozen=True, eq=False)
class Groups:
    always : np.ndarray
    sometimes : np.ndarray
    never : np.ndarray

def classify_groups(profile : SelectionProfile, hi : float = DEFAULT_HI, lo : float = DEFAULT_LO) -> Groups:
    if not 0 <= lo < hi <= 1:
        raise InvalidArgument(f"thresholds must satisfy 0 <= lo < hi <= 1, got lo={lo}, hi={hi}")
    rate = profile.rate
    always = rate >= hi
    never = (rate <= lo) & ~always
    sometimes = ~always & ~never
    return Groups(profile.ids[always], profile.ids[sometimes], profile.ids[never])

def jaccard(a, b) -> float:
    a, b = set(np.asarray(a).tolist()), set(np.asarray(b).tolist())
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)

def curve_table(profiles : Sequence[SelectionProfile]) -> np.ndarray:
    """
    Rows of (sorted_position, cumulative_fraction, mean_over_trials, std_over_trials).
    cumulative_fraction is the curve of the pooled counts; mean and std are taken over
    the per-trial curves. All profiles must cover the same number of samples.
    """
    if not profiles:
        raise InvalidArgument("no profiles")
    n = profiles[0].counts.shape[0]
    if any(p.counts.shape[0] != n for p in profiles):
        raise InvalidArgument("profiles cover different numbers of samples")
    curves = np.stack([cumulative_curve(p) for p in profiles])
    pooled = np.cumsum(np.sort(sum(p.frac for p in profiles) / len(profiles))[::-1])
    return np.column_stack([np.arange(1, n + 1), pooled, curves.mean(axis=0), curves.std(axis=0)])

RetrainMode = Literal["original", "static_sometimes", "random_sometimes"]

def retrain_modes(
    history : Sequence[np.ndarray],
    final_scores : np.ndarray,
    prune_rate : float,
    mode : RetrainMode,
    *,
    ids : np.ndarray,
    original : PolicySpec,
    hi : float = DEFAULT_HI,
    lo : float = DEFAULT_LO,
) -> PolicySpec:
    """
    Policy for retraining a fresh model from a saved run.

    original: the run's own policy, replayed from scratch.
    static_sometimes: the top (1 - prune_rate) N samples by final-checkpoint scores, at every checkpoint.
    random_sometimes: the always set at every checkpoint plus a uniform fill re-drawn per checkpoint.
    """
    final_scores = np.asarray(final_scores, dtype=np.float64)
    ids = np.asarray(ids, dtype=np.int64)
    if final_scores.shape != ids.shape:
        raise InvalidArgument("final_scores and ids must have the same length")
    if mode == "original":
        return original
    if mode == "static_sometimes":
        return PolicySpec("static_topk", alpha=original.alpha, epsilon=original.epsilon, c=original.c, static_scores=final_scores)
    if mode == "random_sometimes":
        groups = classify_groups(selection_profile(history, ids), hi, lo)
        k = compute_k(ids.shape[0], prune_rate)
        if groups.always.shape[0] > k:
            raise BudgetTooSmall(f"always set has {groups.always.shape[0]} samples but k={k}; lower the prune rate to keep more samples")
        return PolicySpec("always_random", alpha=original.alpha, epsilon=original.epsilon, c=original.c, anchor=np.searchsorted(ids, groups.always))
    raise InvalidArgument(f"unknown retrain mode {mode!r}")
