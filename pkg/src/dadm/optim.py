"""SGD/Adam updates, the plateau learning-rate halving schedule and warm starts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .nets import ContractError, ParamGradient, ShallowNet


@dataclass
class TrainConfig:
    iterations: int = 5000           # budget at the first trained time step
    subsequent_iterations: int = 1000  # budget at warm-started later steps
    batch_size: int = 1000
    lr0: float = 0.01
    plateau_tolerance: float = 0.01  # relative improvement threshold
    plateau_patience: int = 100
    method: str = "adam"             # "adam" or "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hidden_width: Optional[int] = None   # default: problem dimension + 10
    activation: str = "tanh"

    def __post_init__(self):
        if self.method not in ("adam", "sgd"):
            raise ContractError(f"unknown optimizer method {self.method!r}")
        for name in ("iterations", "subsequent_iterations", "batch_size",
                     "plateau_patience"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive")
        if not (self.lr0 > 0.0 and self.plateau_tolerance > 0.0):
            raise ContractError("lr0 and plateau_tolerance must be positive")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ContractError("Adam betas must lie in (0, 1)")


@dataclass
class OptimizerState:
    config: TrainConfig
    lr: float = 0.0
    iteration: int = 0
    best_loss: Optional[float] = None
    plateau_count: int = 0
    skipped_updates: int = 0
    m: Optional[ParamGradient] = None   # Adam first moment
    v: Optional[ParamGradient] = None   # Adam second moment

    def __post_init__(self):
        if self.lr == 0.0:
            self.lr = self.config.lr0


def make_state(config: TrainConfig) -> OptimizerState:
    return OptimizerState(config=config)


def step(state: OptimizerState, params: ShallowNet, grad: ParamGradient) -> None:
    """Apply one optimizer update in place; non-finite gradients are skipped."""
    if not grad.is_finite():
        state.skipped_updates += 1
        return
    cfg = state.config
    state.iteration += 1
    if cfg.method == "sgd":
        params.a -= state.lr * grad.a
        params.b -= state.lr * grad.b
        params.c -= state.lr * grad.c
        params.b0 -= state.lr * grad.b0
        return

    if state.m is None:
        state.m = ParamGradient.zeros_like(params)
        state.v = ParamGradient.zeros_like(params)
    t = state.iteration
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for name in ("a", "b", "c", "b0"):
        g = getattr(grad, name)
        m = getattr(state.m, name)
        v = getattr(state.v, name)
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        p = getattr(params, name)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


def scheduler_update(state: OptimizerState, observed_loss: float) -> None:
    """Halve the learning rate after plateau_patience observations without a
    relative improvement of at least plateau_tolerance over the best loss seen
    so far; lr never increases. An improvement of exactly the tolerance counts
    as an improvement; the first observation counts as a non-improvement.
    """
    if not np.isfinite(observed_loss):
        return
    cfg = state.config
    if state.best_loss is None:
        state.best_loss = float(observed_loss)
        state.plateau_count = 1
        return
    scale = max(abs(state.best_loss), 1e-300)
    if (state.best_loss - observed_loss) / scale >= cfg.plateau_tolerance:
        state.best_loss = float(observed_loss)
        state.plateau_count = 0
    else:
        state.plateau_count += 1
        if state.plateau_count >= cfg.plateau_patience:
            state.lr *= 0.5
            state.plateau_count = 0
            # plateau detection restarts relative to the current loss level
            state.best_loss = float(observed_loss)


LOSS_SMOOTHING = 0.2   # EMA coefficient; roughly a 5-iteration window


class LossSmoother:
    """Exponential moving average of the mini-batch loss.

    The plateau scheduler watches this instead of the raw per-batch loss:
    at small batch sizes the sampling noise otherwise pins best_loss at a
    lucky outlier and the learning rate collapses long before the fit stops
    improving.
    """

    def __init__(self, coeff: float = LOSS_SMOOTHING):
        self.coeff = coeff
        self.value: Optional[float] = None

    def update(self, loss: float) -> float:
        if not np.isfinite(loss):
            return loss
        if self.value is None:
            self.value = float(loss)
        else:
            self.value += self.coeff * (float(loss) - self.value)
        return self.value


def warm_start(source: ShallowNet) -> ShallowNet:
    """Initial parameters for the next (earlier) time step: a mutation-independent
    copy of the trained net. Optimizer state is not carried over; create a fresh
    state (moments zero, lr back at lr0) alongside."""
    return source.copy()
