"""Shared test utilities: finite differences and tiny factories."""

from __future__ import annotations

import numpy as np

from esil.nn import Mlp
from esil.policy import Agent, Policy


def finite_difference_grad(fn, params: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of a flat vector."""
    grad = np.zeros_like(params)
    for i in range(len(params)):
        bumped = params.copy()
        bumped[i] += step
        hi = fn(bumped)
        bumped[i] -= 2 * step
        lo = fn(bumped)
        grad[i] = (hi - lo) / (2 * step)
    return grad


def assert_grad_close(analytic: np.ndarray, numeric: np.ndarray, rtol: float = 1e-4):
    scale = np.maximum(np.abs(numeric), 1e-6)
    err = np.abs(analytic - numeric) / scale
    assert err.max() < rtol, f"max relative gradient error {err.max():.3e}"


def small_mlp(layer_sizes, seed=0) -> Mlp:
    rng = np.random.default_rng(seed)
    return Mlp.create(layer_sizes, rng)


def small_policy(kind="categorical", input_dim=4, action_dim=3, hidden=(8,), seed=0) -> Policy:
    return Policy.create(kind, input_dim, action_dim, hidden, np.random.default_rng(seed))


def small_agent(kind="categorical", input_dim=4, action_dim=3, hidden=(8,), seed=0) -> Agent:
    return Agent.create(kind, input_dim, action_dim, hidden, np.random.default_rng(seed))
