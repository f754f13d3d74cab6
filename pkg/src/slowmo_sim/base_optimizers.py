"""Pluggable base optimizers: the inner update direction d and its buffers.

Inner iterations take the form x <- x - gamma * d where d is produced from
the sampled gradient g by one of three rules:

    plain-sgd      d = g
    sgd-nesterov   h <- beta_local * h + g;  d = beta_local * h + g
    adam           h <- beta1 h + (1-beta1) g;  v <- beta2 v + (1-beta2) g^2
                   d = (h / (1 - beta1^l)) / (sqrt(v / (1 - beta2^l)) + eps)

The Adam step index l counts updates applied to the buffer and starts at 1 on
the first update after a reset, so the bias corrections never divide by zero.
At the start of each outer iteration the buffers follow one of three
strategies: ``reset`` (zeros, l back to 0), ``maintain`` (untouched, so l
keeps counting across outer iterations), or ``average`` (exact cross-worker
mean of every buffer).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

OPTIMIZER_KINDS = ("plain-sgd", "sgd-nesterov", "adam")
BUFFER_STRATEGIES = ("reset", "maintain", "average")


@dataclass(frozen=True)
class BaseOptimizerConfig:
    kind: str = "plain-sgd"
    buffer_strategy: str = "reset"
    beta_local: float = 0.9  # sgd-nesterov momentum
    beta1: float = 0.9  # adam first-moment decay
    beta2: float = 0.999  # adam second-moment decay
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ConfigError(f"unknown base optimizer {self.kind!r}")
        if self.buffer_strategy not in BUFFER_STRATEGIES:
            raise ConfigError(f"unknown buffer strategy {self.buffer_strategy!r}")
        if not (0.0 <= self.beta_local < 1.0):
            raise ConfigError("beta_local must lie in [0, 1)")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("adam decay rates must lie in [0, 1)")
        if self.eps <= 0.0:
            raise ConfigError("adam eps must be positive")


@dataclass
class OptimizerBuffers:
    """Per-worker optimizer state. ``v`` is only allocated for adam."""

    h: np.ndarray
    v: np.ndarray | None = None
    step_index: int = 0  # adam's l; number of updates since the last reset

    @staticmethod
    def fresh(config: BaseOptimizerConfig, dimension: int) -> "OptimizerBuffers":
        v = np.zeros(dimension) if config.kind == "adam" else None
        return OptimizerBuffers(h=np.zeros(dimension), v=v, step_index=0)

    def copy(self) -> "OptimizerBuffers":
        return OptimizerBuffers(
            h=self.h.copy(),
            v=None if self.v is None else self.v.copy(),
            step_index=self.step_index,
        )


def local_direction(
    config: BaseOptimizerConfig, buffers: OptimizerBuffers, gradient: np.ndarray
) -> tuple[np.ndarray, OptimizerBuffers]:
    """Consume one stochastic gradient; return (d, buffers).

    Buffers are updated in place (each worker owns its own instance); they
    are also returned so callers can treat the operation functionally.
    """
    if gradient.shape != buffers.h.shape:
        raise ConfigError("gradient/buffer dimension mismatch")
    if config.kind == "plain-sgd":
        return gradient, buffers
    if config.kind == "sgd-nesterov":
        bl = config.beta_local
        buffers.h *= bl
        buffers.h += gradient
        buffers.step_index += 1
        return bl * buffers.h + gradient, buffers
    # adam
    buffers.step_index += 1
    l = buffers.step_index
    if l < 1:
        raise RuntimeError("adam step index must be >= 1 (bias correction)")
    b1, b2 = config.beta1, config.beta2
    buffers.h *= b1
    buffers.h += (1.0 - b1) * gradient
    buffers.v *= b2
    buffers.v += (1.0 - b2) * gradient**2
    h_hat = buffers.h / (1.0 - b1**l)
    v_hat = buffers.v / (1.0 - b2**l)
    return h_hat / (np.sqrt(v_hat) + config.eps), buffers


def apply_buffer_strategy(
    config: BaseOptimizerConfig, worker_buffers: list[OptimizerBuffers]
) -> list[OptimizerBuffers]:
    """Apply the configured strategy at the start of an outer iteration.

    ``average`` replaces every buffer with the exact cross-worker mean,
    accumulated in ascending worker order; step indices are left untouched
    (they agree across workers in lockstep schedules anyway).
    """
    strat = config.buffer_strategy
    if strat == "maintain":
        return worker_buffers
    if strat == "reset":
        for buf in worker_buffers:
            buf.h[:] = 0.0
            if buf.v is not None:
                buf.v[:] = 0.0
            buf.step_index = 0
        return worker_buffers
    # average
    m = len(worker_buffers)
    h_mean = worker_buffers[0].h.copy()
    for buf in worker_buffers[1:]:
        h_mean += buf.h
    h_mean /= m
    v_mean = None
    if worker_buffers[0].v is not None:
        v_mean = worker_buffers[0].v.copy()
        for buf in worker_buffers[1:]:
            v_mean += buf.v
        v_mean /= m
    for buf in worker_buffers:
        buf.h[:] = h_mean
        if v_mean is not None:
            buf.v[:] = v_mean
    return worker_buffers
