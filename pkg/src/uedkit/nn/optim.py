"""Adam with bias correction (lr 1e-3, betas 0.9/0.999, eps 1e-8)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingError
from .engine import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray = None
    v: np.ndarray = None
    step_count: int = 0


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """One functional update; mutates `state`, returns the new parameter vector."""
    grads = np.asarray(grads)
    if not np.all(np.isfinite(grads)):
        raise TrainingError("non-finite gradients in Adam step")
    if state.m is None:
        state.m = np.zeros_like(params)
        state.v = np.zeros_like(params)
    state.step_count += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1**state.step_count)
    v_hat = state.v / (1.0 - state.beta2**state.step_count)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


class Adam:
    """Per-tensor Adam over a parameter list; reads `.grad`, clears it after stepping."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.states = [AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps) for _ in self.params]

    def step(self, batch_index: int | None = None):
        for p, s in zip(self.params, self.states):
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(grad)):
                raise TrainingError("non-finite gradient", batch_index=batch_index)
            p.data = adam_step(s, p.data, grad)
            p.grad = None
