"""Adam optimizer against a pure-Python per-element oracle."""

from __future__ import annotations

import math

import numpy as np
import pytest

from mdboost.errors import DomainError, NumericError, ShapeError
from mdboost.optim import AdamState, adam_step


def adam_oracle(params, grads, lr, beta1, beta2, eps):
    """Scalar-at-a-time Adam over a sequence of gradients; plain floats."""
    p = [float(v) for v in params]
    m = [0.0] * len(p)
    v = [0.0] * len(p)
    for t, grad in enumerate(grads, start=1):
        for j, g in enumerate(grad):
            g = float(g)
            m[j] = beta1 * m[j] + (1.0 - beta1) * g
            v[j] = beta2 * v[j] + (1.0 - beta2) * g * g
            m_hat = m[j] / (1.0 - beta1**t)
            v_hat = v[j] / (1.0 - beta2**t)
            p[j] = p[j] - lr * m_hat / (math.sqrt(v_hat) + eps)
    return np.array(p)


def test_adam_matches_elementwise_oracle_over_fifty_steps():
    rng = np.random.default_rng(0)
    params = rng.normal(size=7)
    grads = [rng.normal(size=7) for _ in range(50)]

    state = AdamState.for_params(params, lr=0.01)
    current = params.copy()
    for g in grads:
        current, state = adam_step(state, current, g)

    expected = adam_oracle(params, grads, lr=0.01, beta1=0.9, beta2=0.99, eps=1e-8)
    np.testing.assert_allclose(current, expected, rtol=1e-14, atol=0)
    assert state.step_count == 50


def test_first_step_is_bias_corrected_signed_lr():
    # With t=1, m_hat = g and v_hat = g^2, so the update is lr * sign(g)
    # up to the epsilon guard.
    params = np.array([1.0, -2.0])
    grad = np.array([0.3, -40.0])
    new, _ = adam_step(AdamState.for_params(params, lr=0.05), params, grad)
    np.testing.assert_allclose(new, params - 0.05 * np.sign(grad), atol=1e-8)


def test_adam_minimizes_a_scalar_quadratic():
    # d/dp (p - 3)^2 = 2 (p - 3); Adam should settle near the minimum.
    p = np.array([0.0])
    state = AdamState.for_params(p, lr=0.1)
    for _ in range(2000):
        p, state = adam_step(state, p, 2.0 * (p - 3.0))
    assert abs(p[0] - 3.0) < 1e-3


def test_lazy_moment_initialization():
    state = AdamState(lr=0.01)
    assert state.first_moment.size == 0
    params = np.zeros(4)
    new, new_state = adam_step(state, params, np.ones(4))
    assert new.shape == (4,)
    assert new_state.first_moment.shape == (4,)


def test_adam_step_is_functional():
    params = np.zeros(3)
    state = AdamState.for_params(params, lr=0.01)
    adam_step(state, params, np.ones(3))
    # The original state must stay at step 0 with zero moments.
    assert state.step_count == 0
    assert np.array_equal(state.first_moment, np.zeros(3))
    assert np.array_equal(params, np.zeros(3))


def test_adam_step_determinism():
    params = np.linspace(-1, 1, 5)
    grad = np.linspace(1, -1, 5)
    a, _ = adam_step(AdamState.for_params(params, lr=0.02), params, grad)
    b, _ = adam_step(AdamState.for_params(params, lr=0.02), params, grad)
    assert np.array_equal(a, b)


def test_adam_validation():
    with pytest.raises(DomainError):
        AdamState(lr=0.0)
    with pytest.raises(DomainError):
        AdamState(beta1=1.0)
    with pytest.raises(DomainError):
        AdamState(beta2=-0.1)
    params = np.zeros(3)
    state = AdamState.for_params(params)
    with pytest.raises(ShapeError):
        adam_step(state, params, np.zeros(4))
    with pytest.raises(NumericError):
        adam_step(state, params, np.array([np.inf, 0.0, 0.0]))


def test_default_hyperparameters():
    state = AdamState()
    assert state.lr == 0.0001
    assert state.beta1 == 0.9
    assert state.beta2 == 0.99
