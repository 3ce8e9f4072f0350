"""
Selection criteria for dynamic and static pruning.
"""

from .basetypes import PolicySpec, PolicyKind, StaticSource, ALL_KINDS, DYNAMIC_KINDS, STATIC_KINDS, SCORING_KINDS
from .selectors import (
    compute_k,
    greedy_count,
    select_topk,
    select_random,
    select_uncertainty,
    select_ema,
    select_eps_greedy,
    select_ucb,
    select_static_hybrid,
    select_always_random,
    select_subset,
)
from .static_scores import (
    count_forgetting_events,
    compute_forget_scores,
    compute_el2n_trials,
    compute_el2n_scores,
    save_static_scores,
    load_static_scores,
    meta_path,
)
