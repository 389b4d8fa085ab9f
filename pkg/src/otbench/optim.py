"""Adam optimizer as a pure state-transition function."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError

__all__ = ["AdamState", "adam_init", "adam_step"]


@dataclass(frozen=True)
class AdamState:
    """Moment estimates and hyperparameters for one parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(n_params: int, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    if n_params < 1:
        raise ValidationError("adam_init: need at least one parameter")
    if not lr > 0:
        raise ValidationError(f"adam_init: learning rate must be > 0, got {lr}")
    return AdamState(m=np.zeros(n_params), v=np.zeros(n_params), t=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new parameters and state."""
    p = np.asarray(params, dtype=np.float64)
    g = np.asarray(grads, dtype=np.float64)
    if p.shape != g.shape or p.shape != state.m.shape:
        raise ValidationError(
            f"adam_step: shape mismatch (params {p.shape}, grads {g.shape}, state {state.m.shape})"
        )
    if not np.all(np.isfinite(g)):
        raise ValidationError("adam_step: non-finite gradient")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, replace(state, m=m, v=v, t=t)
