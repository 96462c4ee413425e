"""Adam and the alternating / joint training loop with early stopping."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .autodiff import Tape, Tensor, backward
from .errors import ConfigError, ContractError, NumericError
from .rng import make_rng

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    steps: dict[str, int] = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: AdamState) -> AdamState:
    """One bias-corrected Adam update, in place, of every parameter named in ``grads``.

    Bias correction uses each parameter's own update count, so a parameter
    that sat out a frozen phase starts with the t=1 correction.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        p = params[name]
        if g.shape != p.shape:
            raise ContractError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
    state.t += 1
    for name, g in grads.items():
        p = params[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.values, dtype=np.float64)
            state.v[name] = np.zeros_like(p.values, dtype=np.float64)
        v = state.v[name]
        k = state.steps.get(name, 0) + 1
        state.steps[name] = k
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * np.square(g, dtype=np.float64)
        m_hat = m / (1 - state.beta1 ** k)
        v_hat = v / (1 - state.beta2 ** k)
        p.values -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)
    return state


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if total > max_norm > 0:
        factor = max_norm / (total + 1e-12)
        for k in grads:
            grads[k] = grads[k] * factor
    return total


PHASES = ("inference", "generative", "joint")


@dataclass
class TrainSchedule:
    """``phases`` cycles one epoch per entry, e.g. ("inference", "generative") or ("joint",)."""

    phases: tuple[str, ...] = ("inference", "generative")
    max_epochs: int = 50
    patience: int = 5
    batch_size: int = 64
    seed: int = 0
    lr: float = 1e-3
    clip_norm: float | None = None

    def __post_init__(self):
        self.phases = tuple(self.phases)
        if not self.phases or any(p not in PHASES for p in self.phases):
            raise ConfigError(f"phases must be drawn from {PHASES}, got {self.phases}")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be positive")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")


@dataclass
class EpochRecord:
    epoch: int
    phase: str
    train_objective: float
    dev_metric: float


@dataclass
class TrainResult:
    model: object
    history: list[EpochRecord]
    best_epoch: int
    best_metric: float


def _trainable(model, phase: str) -> list[str]:
    if phase == "joint":
        return list(model.parameters())
    return list(model.groups[phase])


def _mean_objective(model, data, batch_size, seed) -> float:
    rng = make_rng(seed, stream=5)
    total = 0.0
    for start in range(0, len(data), batch_size):
        batch = data[start:start + batch_size]
        total += float(model.objective(batch, rng).values) * len(batch)
    return total / len(data)


def run_training(model, train: Sequence, dev: Sequence, schedule: TrainSchedule,
                 eval_seed: int | None = None) -> TrainResult:
    """Train ``model`` epoch by epoch, keeping the weights with the best dev metric.

    ``model`` provides ``parameters()``, ``groups``, ``objective(batch, rng)``
    (a scalar loss), ``dev_metric(data, seed)`` and ``higher_is_better``.
    Epoch 0 is the untrained model.  The train objective recorded for an
    epoch is the mean loss over its minibatches.
    """
    if not train or not dev:
        raise ContractError("training needs non-empty train and dev splits")
    params = model.parameters()
    eval_seed = schedule.seed if eval_seed is None else eval_seed
    rng = make_rng(schedule.seed, stream=3)
    state = AdamState(lr=schedule.lr)
    better = (lambda a, b: a > b) if model.higher_is_better else (lambda a, b: a < b)

    def evaluate() -> float:
        value = float(model.dev_metric(dev, eval_seed))
        if not math.isfinite(value):
            raise NumericError("dev metric is not finite")
        return value

    best = evaluate()
    history = [EpochRecord(0, "init", _mean_objective(model, train, schedule.batch_size, eval_seed), best)]
    best_epoch, best_values, stale = 0, {k: p.values.copy() for k, p in params.items()}, 0
    log.info("epoch 0 dev %.6g", best)
    for epoch in range(1, schedule.max_epochs + 1):
        phase = schedule.phases[(epoch - 1) % len(schedule.phases)]
        names = _trainable(model, phase)
        order = rng.permutation(len(train))
        losses, counts = [], []
        for start in range(0, len(train), schedule.batch_size):
            batch = [train[i] for i in order[start:start + schedule.batch_size]]
            with Tape() as tape:
                loss = model.objective(batch, rng)
            grad_map = backward(tape, loss, [params[n] for n in names], accumulate=False)
            grads = {n: grad_map[params[n]] for n in names}
            if schedule.clip_norm:
                clip_global_norm(grads, schedule.clip_norm)
            adam_step(params, grads, state)
            losses.append(float(loss.values) * len(batch))
            counts.append(len(batch))
        metric = evaluate()
        history.append(EpochRecord(epoch, phase, sum(losses) / sum(counts), metric))
        log.info("epoch %d %s loss %.6g dev %.6g", epoch, phase, history[-1].train_objective, metric)
        if better(metric, best):
            best, best_epoch, stale = metric, epoch, 0
            best_values = {k: p.values.copy() for k, p in params.items()}
        else:
            stale += 1
            if stale >= schedule.patience:
                break
    for k, p in params.items():
        p.values[...] = best_values[k]
    return TrainResult(model, history, best_epoch, best)


def history_rows(history: Sequence[EpochRecord]) -> list[tuple]:
    return [(r.epoch, r.phase, r.train_objective, r.dev_metric) for r in history]
