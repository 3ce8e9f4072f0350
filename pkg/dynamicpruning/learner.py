"""
Desk-scale classifiers (softmax regression and a one-hidden-layer tanh MLP) trained with
minibatch SGD, plus the per-sample signals the pruning policies consume.
"""
from __future__ import annotations
import math
from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Sequence
import attrs
import numpy as np
from .dataset import Dataset
from .exceptions import InvalidArgument, DimensionMismatch, EmptySubset, LearnerDivergence

def _finite(instance, attribute, value):
    if not math.isfinite(value):
        raise InvalidArgument(f"{attribute.name} must be finite")

@attrs.define(frozen=True)
class Architecture:
    kind : Literal["softmax", "mlp"] = attrs.field(validator=attrs.validators.in_(("softmax", "mlp")))
    hidden : Optional[int] = attrs.field(default=None)

    @hidden.validator
    def _check_hidden(self, attribute, value):
        if self.kind == "mlp" and (value is None or value < 1):
            raise InvalidArgument("mlp needs hidden >= 1")
        if self.kind == "softmax" and value is not None:
            raise InvalidArgument("softmax regression has no hidden layer")

    def __str__(self):
        return self.kind if self.kind == "softmax" else f"mlp({self.hidden})"

@attrs.define(frozen=True)
class LRSchedule:
    """
    Step schedule: lr0 divided by factor once for every milestone already reached.
    """
    lr0 : float = attrs.field(validator=[_finite, attrs.validators.ge(0)])
    milestones : tuple[int, ...] = attrs.field(default=(), converter=lambda ms: tuple(sorted(int(m) for m in ms)))
    factor : float = attrs.field(default=5.0, validator=[_finite, attrs.validators.gt(0)])

@attrs.define(frozen=True)
class LearnerConfig:
    """
    Architecture and optimizer hyperparameters. Defaults follow the usual CIFAR ResNet recipe.
    """
    arch : Architecture = attrs.field(factory=lambda: Architecture("softmax"))
    lr0 : float = attrs.field(default=0.1, validator=[_finite, attrs.validators.ge(0)])
    momentum : float = attrs.field(default=0.9, validator=[_finite, attrs.validators.ge(0), attrs.validators.lt(1)])
    nesterov : bool = attrs.field(default=True)
    weight_decay : float = attrs.field(default=5e-4, validator=[_finite, attrs.validators.ge(0)])
    batch_size : int = attrs.field(default=128, validator=attrs.validators.ge(1))
    milestones : tuple[int, ...] = attrs.field(default=(60, 120, 160), converter=lambda ms: tuple(sorted(int(m) for m in ms)))
    decay_factor : float = attrs.field(default=5.0, validator=[_finite, attrs.validators.gt(0)])

    @property
    def schedule(self) -> LRSchedule:
        return LRSchedule(self.lr0, self.milestones, self.decay_factor)

def lr_at(schedule : LRSchedule, epoch : int) -> float:
    if epoch < 0:
        raise InvalidArgument("epoch must be non-negative")
    reached = sum(1 for milestone in schedule.milestones if milestone <= epoch)
    return schedule.lr0 / schedule.factor ** reached

def _layout(arch : Architecture, d : int, C : int) -> list[tuple[str, tuple[int, ...]]]:
    if arch.kind == "softmax":
        return [("W1", (d, C)), ("b1", (C,))]
    assert arch.hidden is not None
    return [("W1", (d, arch.hidden)), ("b1", (arch.hidden,)), ("W2", (arch.hidden, C)), ("b2", (C,))]

@dataclass(slots=True)
class LearnerState:
    config : LearnerConfig
    d : int
    C : int
    params : np.ndarray = field(repr=False)
    momentum_buf : np.ndarray = field(repr=False)
    epoch : int = 0

    def __post_init__(self):
        if self.params.shape != self.momentum_buf.shape:
            raise InvalidArgument("params and momentum_buf must have the same shape")

    @property
    def n_params(self) -> int:
        return int(self.params.shape[0])

    def copy(self) -> LearnerState:
        return replace(self, params=self.params.copy(), momentum_buf=self.momentum_buf.copy())

def param_views(state_or_params, arch : Optional[Architecture] = None, d : Optional[int] = None, C : Optional[int] = None) -> dict[str, np.ndarray]:
    """
    Named, writable views into a flat parameter vector.
    """
    if isinstance(state_or_params, LearnerState):
        params, arch, d, C = state_or_params.params, state_or_params.config.arch, state_or_params.d, state_or_params.C
    else:
        params = state_or_params
    assert arch is not None and d is not None and C is not None
    views = {}
    offset = 0
    for name, shape in _layout(arch, d, C):
        size = math.prod(shape)
        views[name] = params[offset:offset + size].reshape(shape)
        offset += size
    return views

def init_learner(config : LearnerConfig, d : int, C : int, seed : int) -> LearnerState:
    """
    Zero-mean Gaussian weights scaled by 1/sqrt(fan_in), zero biases, zero momentum.
    """
    if d < 1 or C < 1:
        raise InvalidArgument("d and C must be at least 1")
    rng = np.random.default_rng(seed)
    layout = _layout(config.arch, d, C)
    params = np.zeros(sum(math.prod(shape) for _, shape in layout))
    views = param_views(params, config.arch, d, C)
    for name, shape in layout:
        if name.startswith("W"):
            views[name][...] = rng.standard_normal(shape) / math.sqrt(shape[0])
    return LearnerState(config=config, d=d, C=C, params=params, momentum_buf=np.zeros_like(params))

def _check_dim(state : LearnerState, features : np.ndarray):
    if features.ndim != 2 or features.shape[1] != state.d:
        raise DimensionMismatch(f"learner expects {state.d} features, got shape {features.shape}")

def _forward(params : np.ndarray, state : LearnerState, features : np.ndarray) -> tuple[np.ndarray, Optional[np.ndarray]]:
    views = param_views(params, state.config.arch, state.d, state.C)
    if state.config.arch.kind == "softmax":
        return features @ views["W1"] + views["b1"], None
    hidden = np.tanh(features @ views["W1"] + views["b1"])
    return hidden @ views["W2"] + views["b2"], hidden

def logits(state : LearnerState, features : np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    _check_dim(state, features)
    return _forward(state.params, state, features)[0]

def _log_softmax(z : np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

def predict_proba(state : LearnerState, features : np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(logits(state, features)))

def per_sample_loss(state : LearnerState, ds : Dataset) -> np.ndarray:
    """
    Cross-entropy of the softmax prediction against the label, per sample.
    """
    log_probs = _log_softmax(logits(state, ds.features))
    # log-softmax is <= 0 up to rounding; clamp keeps the loss non-negative
    return np.maximum(-log_probs[np.arange(ds.n_samples), ds.labels], 0.0)

def per_sample_correct(state : LearnerState, ds : Dataset) -> np.ndarray:
    # argmax returns the first maximum, so ties go to the lowest class id
    return np.argmax(logits(state, ds.features), axis=1) == ds.labels

def per_sample_error_norm(state : LearnerState, ds : Dataset) -> np.ndarray:
    """
    L2 norm of softmax probabilities minus the one-hot label (the EL2N score of one model).
    """
    probs = predict_proba(state, ds.features)
    probs[np.arange(ds.n_samples), ds.labels] -= 1.0
    return np.linalg.norm(probs, axis=1)

def accuracy(state : LearnerState, ds : Dataset) -> float:
    return float(per_sample_correct(state, ds).mean()) if ds.n_samples else 0.0

def loss_and_grad(state : LearnerState, features : np.ndarray, labels : np.ndarray, params : Optional[np.ndarray] = None) -> tuple[float, np.ndarray]:
    """
    Summed cross-entropy over the given samples and its analytic gradient w.r.t. the flat parameters.
    Weight decay is not included.
    """
    params = state.params if params is None else params
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    _check_dim(state, features)
    z, hidden = _forward(params, state, features)
    log_probs = _log_softmax(z)
    rows = np.arange(labels.shape[0])
    loss = float(-log_probs[rows, labels].sum())
    delta = np.exp(log_probs)
    delta[rows, labels] -= 1.0
    grad = np.zeros_like(params)
    grads = param_views(grad, state.config.arch, state.d, state.C)
    if hidden is None:
        grads["W1"][...] = features.T @ delta
        grads["b1"][...] = delta.sum(axis=0)
        return loss, grad
    views = param_views(params, state.config.arch, state.d, state.C)
    grads["W2"][...] = hidden.T @ delta
    grads["b2"][...] = delta.sum(axis=0)
    back = (delta @ views["W2"].T) * (1.0 - hidden ** 2)
    grads["W1"][...] = features.T @ back
    grads["b1"][...] = back.sum(axis=0)
    return loss, grad

def _decay_mask(state : LearnerState) -> np.ndarray:
    mask = np.zeros(state.n_params)
    for name, view in param_views(mask, state.config.arch, state.d, state.C).items():
        if name.startswith("W"):
            view[...] = 1.0
    return mask

@dataclass(slots=True, frozen=True)
class EpochMetrics:
    loss : float
    accuracy : float
    batches : int
    samples : int

def sgd_epoch(state : LearnerState, ds : Dataset, subset : Sequence[int] | np.ndarray, lr : float, seed : int) -> tuple[LearnerState, EpochMetrics]:
    """
    One pass over the subset (given as sample ids) in a seeded shuffled order.
    The last partial minibatch is trained on. Returns a new state; the input is not modified.
    Loss and accuracy are averaged over the subset as seen during the pass.
    """
    subset = np.unique(np.asarray(subset, dtype=np.int64))
    if subset.size == 0:
        raise EmptySubset("cannot train on an empty subset")
    positions = ds.positions(subset)
    _check_dim(state, ds.features)
    config = state.config
    new = state.copy()
    decay = config.weight_decay * _decay_mask(new)
    order = np.random.default_rng(seed).permutation(positions)
    total_loss = 0.0
    correct = 0
    batches = 0
    for start in range(0, order.shape[0], config.batch_size):
        batch = order[start:start + config.batch_size]
        features, labels = ds.features[batch], ds.labels[batch]
        z, _ = _forward(new.params, new, features)
        correct += int(np.sum(np.argmax(z, axis=1) == labels))
        loss, grad = loss_and_grad(new, features, labels)
        grad = grad / batch.shape[0] + decay * new.params
        if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
            raise LearnerDivergence(f"non-finite gradient in epoch {state.epoch}, batch {batches}")
        new.momentum_buf *= config.momentum
        new.momentum_buf += grad
        step = grad + config.momentum * new.momentum_buf if config.nesterov else new.momentum_buf
        new.params -= lr * step
        total_loss += loss
        batches += 1
    if not np.all(np.isfinite(new.params)):
        raise LearnerDivergence(f"parameters became non-finite in epoch {state.epoch}")
    new.epoch = state.epoch + 1
    n = int(order.shape[0])
    return new, EpochMetrics(loss=total_loss / n, accuracy=correct / n, batches=batches, samples=n)
