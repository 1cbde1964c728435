"""Hinge triplet loss and plain mini-batch gradient descent over a triplet set."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .embedding import EmbeddingModel, backprop, embed, hidden_preactivations, sq_dists_rows
from .errors import ConfigError, DimensionError, DivergenceError, KinkError, ReidError
from .tripletgen import Formulation, TripletSet, enumerate_triplets, make_batches


@dataclass(frozen=True)
class TrainConfig:
    margin_tau: float = 1.0
    batch_size: int = 64
    learning_rate: float = 1e-2
    epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.margin_tau) and self.margin_tau > 0):
            raise ConfigError("margin_tau must be finite and > 0")
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ConfigError("learning_rate must be finite and >= 0")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ConfigError("batch_size must be a positive integer")
        if int(self.epochs) != self.epochs or self.epochs < 0:
            raise ConfigError("epochs must be a non-negative integer")


@dataclass(eq=False)
class TrainReport:
    config: TrainConfig
    formulation: Formulation
    n_triplets: int
    loss_history: list = field(default_factory=list)
    violation_history: list = field(default_factory=list)
    final_model: EmbeddingModel = None

    def __eq__(self, other):
        if not isinstance(other, TrainReport):
            return NotImplemented
        return (
            self.config == other.config
            and self.formulation == other.formulation
            and self.n_triplets == other.n_triplets
            and self.loss_history == other.loss_history
            and self.violation_history == other.violation_history
            and self.final_model == other.final_model
        )

    @property
    def final_violation(self):
        return self.violation_history[-1] if self.violation_history else None

    def to_dict(self, model_path=None):
        return {
            "config": asdict(self.config),
            "formulation": self.formulation.value,
            "n_triplets": self.n_triplets,
            "loss_history": self.loss_history,
            "violation_history": self.violation_history,
            "final_model": None if model_path is None else str(model_path),
        }

    def save_json(self, path, model_path=None):
        Path(path).write_text(json.dumps(self.to_dict(model_path), indent=2) + "\n", encoding="utf-8")


# --- loss and gradient -------------------------------------------------------

def _hinge(d_pos, d_neg, tau):
    # written as tau - slack so that loss == 0 exactly when slack >= tau
    return np.maximum(0.0, tau - (d_neg - d_pos))


def indexed_loss_and_grad(model: EmbeddingModel, X, idx, tau, with_grad=True):
    """Per-triplet hinge losses and the gradient of their mean.

    ``X`` holds raw vectors, ``idx`` is an ``(m, 3)`` array of row indices into
    ``X`` (anchor, positive, negative). Gradient contributions are accumulated
    in row order, so the result is deterministic.
    """
    idx = np.asarray(idx, dtype=np.int64).reshape(-1, 3)
    F = embed(model, X)
    F = np.atleast_2d(F)
    Fa, Fp, Fn = F[idx[:, 0]], F[idx[:, 1]], F[idx[:, 2]]
    losses = _hinge(sq_dists_rows(Fa, Fp), sq_dists_rows(Fa, Fn), tau)
    if not with_grad:
        return losses, None
    m = len(idx)
    if m == 0:
        raise ValueError("empty batch")
    active = (losses > 0.0)[:, None] * (1.0 / m)
    G = np.zeros_like(F)
    np.add.at(G, idx[:, 0], 2.0 * (Fn - Fp) * active)
    np.add.at(G, idx[:, 1], 2.0 * (Fp - Fa) * active)
    np.add.at(G, idx[:, 2], 2.0 * (Fa - Fn) * active)
    return losses, backprop(model, X, G)


def _stack_triplets(model, anchors, positives, negatives):
    A, P, N = (np.atleast_2d(np.asarray(v, dtype=np.float64)) for v in (anchors, positives, negatives))
    if not (A.shape == P.shape == N.shape):
        raise DimensionError(f"triplet stacks differ in shape: {A.shape}, {P.shape}, {N.shape}")
    if A.shape[1] != model.in_dim:
        raise DimensionError(f"input dimension {A.shape[1]} != model in_dim {model.in_dim}")
    m = len(A)
    idx = np.stack([np.arange(m), np.arange(m, 2 * m), np.arange(2 * m, 3 * m)], axis=1)
    return np.vstack([A, P, N]), idx


def triplet_loss(model: EmbeddingModel, a, p, n, tau: float) -> float:
    """``max(0, |F(a)-F(p)|^2 - |F(a)-F(n)|^2 + tau)``."""
    X, idx = _stack_triplets(model, a, p, n)
    if len(idx) != 1:
        raise DimensionError("triplet_loss takes a single triplet")
    losses, _ = indexed_loss_and_grad(model, X, idx, tau, with_grad=False)
    return float(losses[0])


def batch_gradient(model: EmbeddingModel, anchors, positives, negatives, tau: float) -> np.ndarray:
    """Gradient of the mean hinge loss over a batch, w.r.t. the flat params."""
    X, idx = _stack_triplets(model, anchors, positives, negatives)
    if len(idx) == 0:
        raise ValueError("batch_gradient needs a non-empty batch")
    return indexed_loss_and_grad(model, X, idx, tau)[1]


def violation_fraction(model: EmbeddingModel, tset: TripletSet, tau: float) -> float:
    if len(tset) == 0:
        return 0.0
    losses, _ = indexed_loss_and_grad(model, tset.source.matrix, tset.indices, tau, with_grad=False)
    return float(np.count_nonzero(losses > 0.0)) / len(tset)


# --- training loop -----------------------------------------------------------

def train_on_triplets(tset: TripletSet, model0: EmbeddingModel, cfg: TrainConfig) -> TrainReport:
    if len(tset) == 0:
        raise ReidError(f"formulation {tset.formulation.value} yields no triplets; nothing to train on")
    X = tset.source.matrix
    if X.shape[1] != model0.in_dim:
        raise DimensionError(f"dataset dimension {X.shape[1]} != model in_dim {model0.in_dim}")
    report = TrainReport(cfg, tset.formulation, len(tset))
    params = model0.params.copy()
    model = model0
    for epoch in range(cfg.epochs):
        epoch_losses = []
        for b, batch in enumerate(make_batches(tset, cfg.batch_size, cfg.seed, epoch)):
            with np.errstate(over="ignore", invalid="ignore"):
                losses, grad = indexed_loss_and_grad(model, X, tset.indices[batch], cfg.margin_tau)
            if not np.all(np.isfinite(losses)):
                raise DivergenceError(epoch, b, "loss")
            if not np.all(np.isfinite(grad)):
                raise DivergenceError(epoch, b, "gradient")
            epoch_losses.extend(losses.tolist())
            params = params - cfg.learning_rate * grad
            if not np.all(np.isfinite(params)):
                raise DivergenceError(epoch, b, "parameters")
            model = model.with_params(params)
        report.loss_history.append(math.fsum(epoch_losses) / len(epoch_losses))
        report.violation_history.append(violation_fraction(model, tset, cfg.margin_tau))
    report.final_model = model
    return report


def train(train_data: Dataset, formulation: Formulation, model0: EmbeddingModel, cfg: TrainConfig) -> TrainReport:
    """Enumerate the formulation's triplets on ``train_data`` and descend.

    Per epoch the triplets are reshuffled (seeded by ``cfg.seed`` and the epoch
    number) and each mini-batch applies ``params -= lr * grad``.
    ``loss_history`` records the mean per-triplet loss seen during the epoch;
    ``violation_history`` the fraction of triplets with positive loss after it.
    """
    return train_on_triplets(enumerate_triplets(train_data, formulation), model0, cfg)


# --- gradient verification ---------------------------------------------------

def grad_check(model: EmbeddingModel, triplet, tau: float, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Errors are scaled by ``max(1, |g_i|)``. Raises :class:`KinkError` when the
    triplet sits within reach of the hinge or of a ReLU kink.
    """
    a, p, n = (np.asarray(v, dtype=np.float64) for v in triplet)
    X, idx = _stack_triplets(model, a, p, n)
    losses, g = indexed_loss_and_grad(model, X, idx, tau)
    loss = float(losses[0])
    reach = 10.0 * step
    if loss <= reach * max(1.0, float(np.max(np.abs(g)))):
        raise KinkError(f"loss {loss:.3g} is flat or too close to the hinge for step {step}")
    Z = hidden_preactivations(model, X)
    if Z is not None and np.min(np.abs(Z)) <= reach * max(1.0, float(np.max(np.abs(X)))):
        raise KinkError("a hidden pre-activation is too close to the ReLU kink")

    base = model.params
    fd = np.empty_like(base)
    for i in range(base.size):
        plus = base.copy()
        plus[i] += step
        minus = base.copy()
        minus[i] -= step
        lp, _ = indexed_loss_and_grad(model.with_params(plus), X, idx, tau, with_grad=False)
        lm, _ = indexed_loss_and_grad(model.with_params(minus), X, idx, tau, with_grad=False)
        fd[i] = (lp[0] - lm[0]) / (2.0 * step)
    return float(np.max(np.abs(g - fd) / np.maximum(1.0, np.abs(g))))
