"""Adam with per-epoch multiplicative learning-rate decay and plateau early stopping."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .linalg import ShapeError
from .nn import Network, loss_and_gradients

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    """The loss became NaN or infinite."""


@dataclass(frozen=True)
class TrainSchedule:
    initial_lr: float = 0.01
    lr_decay: float = 0.995
    max_epochs: int = 2000
    patience: int = 50
    min_improvement: float = 1e-5

    def __post_init__(self):
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if self.patience < 1:
            raise ValueError(f"patience must be at least 1, got {self.patience}")
        if self.max_epochs < 0:
            raise ValueError(f"max_epochs must be non-negative, got {self.max_epochs}")
        if self.initial_lr <= 0:
            raise ValueError(f"initial_lr must be positive, got {self.initial_lr}")

    def lr_at(self, epoch: int) -> float:
        """Learning rate in effect after ``epoch`` completed epochs."""
        return self.initial_lr * self.lr_decay**epoch


class AdamState:
    def __init__(self, params: list[np.ndarray], beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    @classmethod
    def for_network(cls, net: Network) -> AdamState:
        return cls(net.parameters())


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError(f"{len(params)} parameters, {len(grads)} gradients, {len(state.m)} moment slots")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"parameter {p.shape}, gradient {g.shape}, moment {m.shape} disagree")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class TrainResult(NamedTuple):
    network: Network
    history: list[float]
    stopped_early: bool
    lr: float


def train(net: Network, x, targets, schedule: TrainSchedule) -> TrainResult:
    """Full-batch Adam on the BCE identity loss.

    ``history[e]`` is the loss of the parameters entering epoch ``e``.  The
    returned network is a copy holding the lowest-loss parameters seen, so its
    loss never exceeds ``history[0]``.
    """
    x = np.asarray(x, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.intp)
    if x.shape[0] != targets.shape[0]:
        raise ShapeError(f"{x.shape[0]} samples but {targets.shape[0]} targets")
    work = net.copy()
    if schedule.max_epochs == 0:
        return TrainResult(work, [], False, schedule.initial_lr)

    params = work.parameters()
    state = AdamState(params)
    history: list[float] = []
    best_loss = math.inf
    best_params = [p.copy() for p in params]
    wait = 0
    lr = schedule.initial_lr
    stopped_early = False
    for epoch in range(schedule.max_epochs):
        loss, grads = loss_and_gradients(work, x, targets)
        if not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss {loss} at epoch {epoch} (lr={lr:.4g})")
        history.append(loss)
        if loss < best_loss - schedule.min_improvement:
            best_loss = loss
            best_params = [p.copy() for p in params]
            wait = 0
        else:
            if loss < best_loss:
                best_loss = loss
                best_params = [p.copy() for p in params]
            wait += 1
            if wait >= schedule.patience:
                stopped_early = True
                break
        adam_step(params, grads.arrays(), state, lr)
        lr *= schedule.lr_decay
    for p, best in zip(params, best_params):
        p[...] = best
    if stopped_early:
        log.debug("early stop after %d epochs, loss %.6g", len(history), best_loss)
    return TrainResult(work, history, stopped_early, lr)
