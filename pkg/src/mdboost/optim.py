"""Adaptive-moment (Adam) optimizer over flat parameter vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericError, ShapeError


@dataclass
class AdamState:
    """Optimizer hyperparameters plus the running moment estimates.

    Defaults follow the training setup this toolkit targets: lr 0.0001,
    first-moment decay 0.9, second-moment decay 0.99.
    """

    lr: float = 0.0001
    beta1: float = 0.9
    beta2: float = 0.99
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: np.ndarray = field(default_factory=lambda: np.zeros(0))
    second_moment: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise DomainError("beta1 and beta2 must lie in [0, 1)")
        if self.lr <= 0.0:
            raise DomainError("lr must be positive")

    @classmethod
    def for_params(cls, params: np.ndarray, **kwargs) -> "AdamState":
        n = np.asarray(params).size
        return cls(first_moment=np.zeros(n), second_moment=np.zeros(n), **kwargs)


def adam_step(
    state: AdamState, params: np.ndarray, grad: np.ndarray
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns (new params, new state)."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if state.first_moment.size == 0:
        state = AdamState(
            lr=state.lr,
            beta1=state.beta1,
            beta2=state.beta2,
            epsilon=state.epsilon,
            step_count=state.step_count,
            first_moment=np.zeros(params.size),
            second_moment=np.zeros(params.size),
        )
    if not (params.shape == grad.shape == state.first_moment.shape):
        raise ShapeError(
            f"params {params.shape}, grad {grad.shape} and moments "
            f"{state.first_moment.shape} must all match"
        )
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient")

    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    if not np.all(np.isfinite(new_params)):
        raise NumericError("non-finite parameters after optimizer step")

    new_state = AdamState(
        lr=state.lr,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
        step_count=t,
        first_moment=m,
        second_moment=v,
    )
    return new_params, new_state
