"""Adam optimizer with the step-decay learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ndarchive.errors import NumericFailureError
from ndarchive.neuralcore.autodiff import Tensor

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


@dataclass
class AdamState:
    """First/second moment estimates per parameter, plus the step count."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def init_adam_state(params: dict[str, Tensor]) -> AdamState:
    return AdamState(
        m={name: np.zeros_like(p.values) for name, p in params.items()},
        v={name: np.zeros_like(p.values) for name, p in params.items()},
        step=0,
    )


def decayed_lr(base_lr: float, epoch: int, decay: float = 0.1, every: int = 8) -> float:
    """base_lr * decay^(epoch // every): epochs 0-7 full rate, then x0.1."""
    return base_lr * decay ** (epoch // every)


def adam_step(params: dict[str, Tensor], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update in place, reading each param's grad."""
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise NumericFailureError("adam_step", f"non-finite gradient for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * g * g
        m_hat = m / (1.0 - BETA1**t)
        v_hat = v / (1.0 - BETA2**t)
        p.values = p.values - lr * m_hat / (np.sqrt(v_hat) + EPSILON)
        if not np.all(np.isfinite(p.values)):
            raise NumericFailureError("adam_step", f"non-finite values for {name!r}")
