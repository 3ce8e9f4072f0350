"""
Subset selectors. Every selector returns k distinct row positions in ascending order.
"""
from __future__ import annotations
import math
try:
    from typing import assert_never
except ImportError:  # Python < 3.11
    from typing_extensions import assert_never
import numpy as np
from dynamicpruning.exceptions import InvalidArgument, SelectionError, MissingStaticScores
from dynamicpruning.scoreboard import Scoreboard
from .basetypes import PolicySpec

def compute_k(n : int, prune_rate : float) -> int:
    """
    Number of samples kept at a pruning rate, never less than one.
    """
    if not 0 <= prune_rate < 1:
        raise InvalidArgument(f"prune_rate must be in [0, 1), got {prune_rate}")
    return max(1, int(math.floor((1 - prune_rate) * n + 0.5)))

def _check_k(n : int, k : int):
    if not 1 <= k <= n:
        raise SelectionError(f"k={k} is outside [1, {n}]")

def greedy_count(k : int, epsilon : float) -> int:
    # the tolerance absorbs float error in products such as (1 - 0.3) * 10
    return int(math.floor((1 - epsilon) * k + 1e-9))

def _ranking(scores : np.ndarray) -> np.ndarray:
    # descending score, ties by ascending position
    return np.lexsort((np.arange(scores.shape[0]), -scores))

def select_topk(scores, k : int) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    _check_k(scores.shape[0], k)
    return np.sort(_ranking(scores)[:k])

def select_random(n : int, k : int, rng : np.random.Generator) -> np.ndarray:
    _check_k(n, k)
    return np.sort(rng.choice(n, size=k, replace=False))

def select_uncertainty(last_raw, k : int) -> np.ndarray:
    return select_topk(last_raw, k)

def select_ema(sb : Scoreboard, k : int) -> np.ndarray:
    return select_topk(sb.ema, k)

def _greedy_plus_random(scores : np.ndarray, k : int, epsilon : float, rng : np.random.Generator) -> np.ndarray:
    n = scores.shape[0]
    _check_k(n, k)
    greedy = _ranking(scores)[:greedy_count(k, epsilon)]
    rest = np.setdiff1d(np.arange(n), greedy, assume_unique=True)
    explore = rng.choice(rest, size=k - greedy.shape[0], replace=False)
    return np.sort(np.concatenate([greedy, explore]))

def select_eps_greedy(sb : Scoreboard, k : int, epsilon : float, rng : np.random.Generator) -> np.ndarray:
    """
    floor((1 - epsilon) k) top-EMA positions plus uniform picks from the remaining samples.
    """
    if not 0 <= epsilon <= 1:
        raise InvalidArgument("epsilon must be in [0, 1]")
    return _greedy_plus_random(sb.ema, k, epsilon, rng)

def select_ucb(sb : Scoreboard, k : int, c : float) -> np.ndarray:
    if c < 0:
        raise InvalidArgument("c must be non-negative")
    return select_topk(sb.ucb(c), k)

def select_static_hybrid(spec : PolicySpec, k : int, rng : np.random.Generator) -> np.ndarray:
    """
    static_eps_greedy: top static positions plus a fresh random share at every call.
    static_ucb: top-k of the cross-trial mean plus c times the cross-trial variance.
    """
    if spec.static_scores is None:
        raise MissingStaticScores(f"policy {spec.kind} needs static scores")
    if spec.kind == "static_eps_greedy":
        return _greedy_plus_random(spec.static_scores.mean(axis=0), k, spec.epsilon, rng)
    if spec.kind == "static_ucb":
        trials = spec.static_scores
        return select_topk(trials.mean(axis=0) + spec.c * trials.var(axis=0), k)
    raise InvalidArgument(f"{spec.kind} is not a static hybrid")

def select_always_random(anchor : np.ndarray, n : int, k : int, rng : np.random.Generator) -> np.ndarray:
    """
    Keep the anchor positions and fill the rest of the budget uniformly at random.
    """
    _check_k(n, k)
    if anchor.shape[0] > k:
        raise SelectionError(f"anchor set of {anchor.shape[0]} does not fit in k={k}")
    if anchor.size and (anchor.min() < 0 or anchor.max() >= n):
        raise SelectionError("anchor position out of range")
    rest = np.setdiff1d(np.arange(n), anchor, assume_unique=True)
    fill = rng.choice(rest, size=k - anchor.shape[0], replace=False)
    return np.sort(np.concatenate([anchor, fill]))

def select_subset(spec : PolicySpec, sb : Scoreboard, k : int, rng : np.random.Generator) -> np.ndarray:
    """
    Dispatch one checkpoint's selection for any policy.
    """
    n = sb.n_samples
    if spec.static_scores is not None and spec.static_scores.shape[1] != n:
        raise InvalidArgument(f"static scores cover {spec.static_scores.shape[1]} samples, dataset has {n}")
    match spec.kind:
        case "random":
            return select_random(n, k, rng)
        case "uncertainty":
            return select_uncertainty(sb.last_raw, k)
        case "uncertainty_ema":
            return select_ema(sb, k)
        case "eps_greedy":
            return select_eps_greedy(sb, k, spec.epsilon, rng)
        case "ucb":
            return select_ucb(sb, k, spec.c)
        case "static_topk":
            if spec.static_scores is None:
                raise MissingStaticScores(f"policy {spec.kind} needs static scores")
            return select_topk(spec.static_scores.mean(axis=0), k)
        case "static_eps_greedy" | "static_ucb":
            return select_static_hybrid(spec, k, rng)
        case "always_random":
            if spec.anchor is None:
                raise InvalidArgument("always_random needs an anchor set")
            return select_always_random(spec.anchor, n, k, rng)
        case _:
            assert_never(spec.kind)
