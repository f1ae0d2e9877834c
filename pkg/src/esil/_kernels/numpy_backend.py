"""NumPy implementation of the training hot paths.

Mirrors ``esil._kernels._core`` (the compiled backend); both expose
``mlp_forward``, ``mlp_backward``, ``adam_update`` and
``discounted_returns`` with identical semantics. Arrays must be float64
and C-contiguous; weight matrices are laid out (fan_in, fan_out) so a
batch of rows multiplies as ``x @ w``.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def mlp_forward(weights: list, biases: list, x: np.ndarray) -> list:
    """Run the full network on a (batch, fan_in) input.

    Hidden layers use rectified-linear activations, the final layer is
    linear. Returns the list of layer activations [x, a1, ..., out];
    the caller keeps it around for the backward pass.
    """
    acts = [x]
    a = x
    last = len(weights) - 1
    for i in range(len(weights)):
        z = a @ weights[i]
        z += biases[i]
        a = z if i == last else np.maximum(z, 0.0, out=z)
        acts.append(a)
    return acts


def mlp_backward(weights: list, acts: list, grad_out: np.ndarray):
    """Backpropagate a (batch, fan_out) cotangent through cached activations.

    Returns (grad_weights, grad_biases, grad_input). ReLU units use a
    zero subgradient at exactly zero.
    """
    n = len(weights)
    grad_w = [None] * n
    grad_b = [None] * n
    dz = grad_out
    for i in range(n - 1, -1, -1):
        a_prev = acts[i]
        grad_w[i] = a_prev.T @ dz
        grad_b[i] = dz.sum(axis=0)
        da = dz @ weights[i].T
        dz = da * (a_prev > 0.0) if i > 0 else da
    return grad_w, grad_b, dz


def adam_update(
    params: np.ndarray,
    grads: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    step: int,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
) -> None:
    """One bias-corrected Adam step, in place on params/m/v.

    ``step`` is the 1-based count including this update.
    """
    m *= beta1
    m += (1.0 - beta1) * grads
    v *= beta2
    v += (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    params -= lr * m_hat / (np.sqrt(v_hat) + eps)


def discounted_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """Per-step discounted reward sums, truncated at the episode end.

    Backward recursion: out[t] = rewards[t] + gamma * out[t+1], with the
    sum past the final step defined as zero.
    """
    out = np.empty_like(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out
