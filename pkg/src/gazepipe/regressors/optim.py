"""Adam with a step learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import kernels


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    batch_size: int = 256
    lr_step: int = 5000  # multiply the rate by lr_gamma after every lr_step iterations
    lr_gamma: float = 0.1
    iterations: int = 15000
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.batch_size < 1 or self.iterations < 0 or self.lr_step < 1:
            raise ValueError("batch_size and lr_step must be positive, iterations non-negative")


def learning_rate_at(config: TrainConfig, iteration: int) -> float:
    """Scheduled rate for 1-based ``iteration``."""
    return config.learning_rate * config.lr_gamma ** ((iteration - 1) // config.lr_step)


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
    iteration: int,
) -> AdamState:
    """Bias-corrected Adam update of ``params`` in place; returns the updated state."""
    if iteration < 1:
        raise ValueError("iteration is 1-based")
    lr = learning_rate_at(config, iteration)
    corr1 = 1.0 - config.beta1**iteration
    corr2 = 1.0 - config.beta2**iteration
    for name, w in params.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(w)
            state.v[name] = np.zeros_like(w)
        g = np.ascontiguousarray(grads[name], dtype=w.dtype)
        kernels.adam_update(
            w.reshape(-1), g.reshape(-1), state.m[name].reshape(-1), state.v[name].reshape(-1),
            lr, config.beta1, config.beta2, config.eps, corr1, corr2,
        )  # fmt: skip
    state.t = iteration
    return state
