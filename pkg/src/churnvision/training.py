"""Loss, Adadelta, the mini-batch loop, dataset splitting and scoring.

The training recipe is deliberately plain: shuffled mini-batches, binary
cross-entropy on the softmax head via the fused gradient, Adadelta with its
canonical constants, a fixed epoch count and nothing adaptive beyond that.
Runs are pure functions of (spec, data, config): the same seed reproduces
parameters bit for bit.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import nn


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 1000
    rho: float = 0.95
    epsilon: float = 1e-6
    seed: int = 42
    shuffle: bool = True
    eval_every: int = 0  # 0 disables per-epoch training AUC

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "batch_size": self.batch_size, "rho": self.rho,
                "epsilon": self.epsilon, "seed": self.seed, "shuffle": self.shuffle,
                "eval_every": self.eval_every}


@dataclass
class EpochStats:
    loss: float
    train_auc: float | None
    seconds: float


@dataclass
class AdadeltaState:
    """Running averages of squared gradients and squared updates, one pair of
    accumulators per parameter array, all starting at zero."""

    sq_grad: list
    sq_step: list
    rho: float
    epsilon: float
    names: list = field(default_factory=list)


def init_adadelta(params, rho: float = 0.95, epsilon: float = 1e-6, names=None) -> AdadeltaState:
    def zeros_like(ps):
        return [None if p is None else nn.LayerParams(np.zeros_like(p.weights),
                                                      np.zeros_like(p.biases))
                for p in ps]
    return AdadeltaState(zeros_like(params), zeros_like(params), rho, epsilon,
                         list(names) if names else [])


def adadelta_step(params, grads, state: AdadeltaState):
    """One parameter update; mutates params and state in place and returns them.

    Per parameter: E[g2] <- rho E[g2] + (1-rho) g2;
    dx = -sqrt((E[dx2]+eps)/(E[g2]+eps)) g; E[dx2] <- rho E[dx2] + (1-rho) dx2.
    No global learning rate.
    """
    rho, eps = state.rho, state.epsilon
    for i, (p, g) in enumerate(zip(params, grads)):
        if p is None:
            continue
        if g is None or p.weights.shape != g.weights.shape or p.biases.shape != g.biases.shape:
            raise ValueError(f"gradients are not shape-congruent with parameters at layer index {i}")
        name = state.names[i] if i < len(state.names) else f"layer {i}"
        for attr in ("weights", "biases"):
            gv = getattr(g, attr)
            if not np.isfinite(gv).all():
                raise ValueError(f"non-finite gradient in layer {name!r} ({attr})")
            acc_g = getattr(state.sq_grad[i], attr)
            acc_s = getattr(state.sq_step[i], attr)
            acc_g *= rho
            acc_g += (1.0 - rho) * gv * gv
            step = -np.sqrt((acc_s + eps) / (acc_g + eps)) * gv
            acc_s *= rho
            acc_s += (1.0 - rho) * step * step
            getattr(p, attr)[...] += step
    return params, state


def bce_loss(probabilities, labels):
    """Mean binary cross-entropy of the class-1 probabilities, plus the fused
    per-example gradient with respect to the two softmax logits.

    Probabilities are clamped to [1e-7, 1-1e-7] inside the loss; the gradient
    is the exact fused softmax-cross-entropy form (p - onehot(y)) / batch.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels)
    if p.shape != y.shape or p.ndim != 1:
        raise ValueError(f"probabilities {p.shape} and labels {y.shape} must be equal-length vectors")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    y = y.astype(np.float64)
    clamped = np.clip(p, 1e-7, 1.0 - 1e-7)
    loss = float(-np.mean(y * np.log(clamped) + (1.0 - y) * np.log(1.0 - clamped)))
    g = (p - y) / p.size
    return loss, np.stack([-g, g], axis=1)


def run_training(spec: nn.NetworkSpec, inputs, targets, config: TrainConfig, loss_fn,
                 epoch_eval=None):
    """Generic seeded mini-batch loop shared by the classifiers and the autoencoder.

    loss_fn(batch_output, batch_targets) -> (mean loss, gradient, from_logits).
    The seeded stream is consumed in a fixed order: weight init in layer
    order, then per epoch one shuffle permutation, then per batch the dropout
    masks in layer order.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    n = inputs.shape[0]
    if n == 0:
        raise ValueError("dataset is empty")
    if inputs.shape[1:] != spec.input_shape:
        raise ValueError(f"image shape {inputs.shape[1:]} does not match spec input {spec.input_shape}")
    rng = np.random.default_rng(config.seed)
    params = nn.init_parameters(spec, rng)
    state = init_adadelta(params, config.rho, config.epsilon,
                          names=[layer.name for layer in spec.layers])
    history = []
    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            out, caches = nn.network_forward(spec, params, inputs[batch], training=True, rng=rng)
            loss, grad, from_logits = loss_fn(out, targets[batch])
            grads = nn.network_backward(spec, params, caches, grad, from_logits=from_logits)
            adadelta_step(params, grads, state)
            total += loss * len(batch)
        train_auc = None
        if epoch_eval is not None and config.eval_every > 0 and (epoch + 1) % config.eval_every == 0:
            train_auc = epoch_eval(params)
        history.append(EpochStats(total / n, train_auc, time.perf_counter() - started))
    return params, history


def train(spec: nn.NetworkSpec, inputs, labels, config: TrainConfig):
    """Train a softmax classifier on labeled images.

    inputs: (n, rows, cols, channels) array matching the spec input shape;
    labels: length-n vector of {0, 1}. Returns (parameters, history).
    """
    labels = np.asarray(labels)
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")

    def loss_fn(out, batch_labels):
        loss, dlogits = bce_loss(out[:, 1], batch_labels)
        return loss, dlogits, True

    def epoch_eval(params):
        from .evaluation import auc
        return auc(predict(spec, params, inputs), labels)

    return run_training(spec, inputs, labels, config, loss_fn,
                        epoch_eval=epoch_eval if config.eval_every > 0 else None)


def predict(spec: nn.NetworkSpec, params, inputs, batch_size: int = 512):
    """Inference-mode class-1 probability per image, in input order.

    Dropout is the identity here, and because every contraction is
    batch-composition independent the scores match training-mode forwards
    with dropout disabled bit for bit.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim == 3:
        inputs = inputs[None, ...]
    if inputs.shape[1:] != spec.input_shape:
        raise ValueError(f"image shape {inputs.shape[1:]} does not match spec input {spec.input_shape}")
    scores = []
    for start in range(0, inputs.shape[0], batch_size):
        out, _ = nn.network_forward(spec, params, inputs[start:start + batch_size], training=False)
        scores.append(out[:, 1])
    return np.concatenate(scores)


def stratified_split(items, ratio: float, seed: int, labels=None):
    """Per-class shuffle then proportional cut; preserves class proportions.

    items: a sequence; labels default to `item.label` for each item. The
    per-class train count is round(ratio * class_size) with ties to even.
    Returns (train list, test list), each keeping the original input order.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must lie in (0, 1), got {ratio}")
    items = list(items)
    if labels is None:
        labels = [item.label for item in items]
    labels = list(labels)
    if len(labels) != len(items):
        raise ValueError("labels and items differ in length")
    classes = sorted(set(labels))
    if len(classes) < 2:
        warnings.warn("stratified_split saw a single class; the split is degenerate")
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    for cls in classes:
        idx = np.array([i for i, lab in enumerate(labels) if lab == cls])
        rng.shuffle(idx)
        take = int(round(ratio * len(idx)))
        train_idx.extend(idx[:take].tolist())
    chosen = set(train_idx)
    train = [items[i] for i in range(len(items)) if i in chosen]
    test = [items[i] for i in range(len(items)) if i not in chosen]
    return train, test
