"""
Submodule for base types
"""
from __future__ import annotations
from typing import Literal, Optional
import attrs
import numpy as np
from dynamicpruning.commons import DEFAULT_ALPHA, DEFAULT_EPSILON, DEFAULT_C, DEFAULT_EL2N_MODELS, DEFAULT_EL2N_EPOCHS
from dynamicpruning.exceptions import InvalidArgument, MissingStaticScores

PolicyKind = Literal[
    "random",
    "uncertainty",
    "uncertainty_ema",
    "eps_greedy",
    "ucb",
    "static_topk",
    "static_eps_greedy",
    "static_ucb",
    "always_random",
]

DYNAMIC_KINDS = ("random", "uncertainty", "uncertainty_ema", "eps_greedy", "ucb")
STATIC_KINDS = ("static_topk", "static_eps_greedy", "static_ucb")
ALL_KINDS = DYNAMIC_KINDS + STATIC_KINDS + ("always_random",)
SCORING_KINDS = ("uncertainty", "uncertainty_ema", "eps_greedy", "ucb")

def _as_score_matrix(value) -> Optional[np.ndarray]:
    if value is None:
        return None
    matrix = np.atleast_2d(np.array(value, dtype=np.float64))
    if matrix.ndim != 2 or not np.all(np.isfinite(matrix)):
        raise InvalidArgument("static scores must be a finite vector or trials x samples matrix")
    matrix.setflags(write=False)
    return matrix

def _as_anchor(value) -> Optional[np.ndarray]:
    if value is None:
        return None
    anchor = np.unique(np.asarray(value, dtype=np.int64))
    anchor.setflags(write=False)
    return anchor

@attrs.define(frozen=True)
class StaticSource:
    """
    Where the scores of a static policy come from: an offline EL2N or forget-score
    computation, or a score file written by an earlier run.
    """
    method : Literal["el2n", "forget", "file"] = attrs.field(validator=attrs.validators.in_(("el2n", "forget", "file")))
    path : Optional[str] = attrs.field(default=None, kw_only=True)
    models : int = attrs.field(default=DEFAULT_EL2N_MODELS, kw_only=True, validator=attrs.validators.ge(1))
    epochs : int = attrs.field(default=DEFAULT_EL2N_EPOCHS, kw_only=True, validator=attrs.validators.ge(1))

    def __attrs_post_init__(self):
        if (self.method == "file") != (self.path is not None):
            raise InvalidArgument("a score path is used by, and required for, method 'file' only")

@attrs.define(frozen=True)
class PolicySpec:
    """
    A selection criterion and its hyperparameters.

    Static kinds carry a score matrix of shape (trials, N); a plain vector counts as one trial.
    A static spec may instead name a StaticSource, in which case the scores are attached
    before the run starts. "always_random" carries the positions kept at every checkpoint.
    """
    kind : PolicyKind = attrs.field(validator=attrs.validators.in_(ALL_KINDS))
    alpha : float = attrs.field(default=DEFAULT_ALPHA, kw_only=True)
    epsilon : float = attrs.field(default=DEFAULT_EPSILON, kw_only=True)
    c : float = attrs.field(default=DEFAULT_C, kw_only=True)
    static_scores : Optional[np.ndarray] = attrs.field(default=None, kw_only=True, converter=_as_score_matrix, eq=False, repr=False)
    static_source : Optional[StaticSource] = attrs.field(default=None, kw_only=True)
    anchor : Optional[np.ndarray] = attrs.field(default=None, kw_only=True, converter=_as_anchor, eq=False, repr=False)

    def __attrs_post_init__(self):
        if not 0 < self.alpha <= 1:
            raise InvalidArgument("alpha must be in (0, 1]")
        if not 0 <= self.epsilon <= 1:
            raise InvalidArgument("epsilon must be in [0, 1]")
        if not self.c >= 0:
            raise InvalidArgument("c must be non-negative")
        if self.kind in STATIC_KINDS and self.static_scores is None and self.static_source is None:
            raise MissingStaticScores(f"policy {self.kind} needs static scores or a static source")
        if self.kind not in STATIC_KINDS and (self.static_scores is not None or self.static_source is not None):
            raise InvalidArgument(f"policy {self.kind} does not take static scores")
        if (self.kind == "always_random") != (self.anchor is not None):
            raise InvalidArgument("an anchor set is used by, and required for, always_random only")

    @property
    def is_static(self) -> bool:
        return self.kind in STATIC_KINDS

    @property
    def needs_scoring(self) -> bool:
        """
        Whether the policy observes full-dataset losses at every checkpoint.
        """
        return self.kind in SCORING_KINDS

    @property
    def trials(self) -> int:
        return 0 if self.static_scores is None else int(self.static_scores.shape[0])

    def with_static_scores(self, scores) -> PolicySpec:
        return attrs.evolve(self, static_scores=scores)
