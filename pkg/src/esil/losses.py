"""The three differentiable objectives and their combination.

* clipped-surrogate policy objective over the original episodes,
* squared-error value objective over the same data,
* imitation objective (mean log-probability of own actions) over the
  selected hindsight steps, weighted by the adaptive fraction beta.

Sign convention, stated once: the component values reported here are
objectives in their natural orientation -- the policy and imitation
terms are maximized, the value term is minimized, and the combined
report is ``alpha * (policy - value_coef * value) + beta * imitation``.
The optimizer minimizes the negation of that quantity;
:func:`combined_loss` returns the minimization-form gradient directly.
The equivalence test pinning "imitation weight zero == plain clipped
surrogate training" asserts this wiring.

Gradients flow to the actor from the policy and imitation terms and to
the critic from the value term only; advantages enter as fixed inputs
(no gradient through the critic baseline).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import Categorical
from .hindsight import EsilBatch
from .nn import FLOAT
from .policy import Agent, Critic, Policy


@dataclass
class LossReport:
    """Scalar loss values for one gradient evaluation."""

    policy_loss: float
    value_loss: float
    esil_loss: float
    combined_loss: float
    alpha: float
    beta: float
    clip_ratio: float
    value_coef: float


def _zero_policy_grad(policy: Policy) -> np.ndarray:
    return np.zeros(policy.layout.total_size, dtype=FLOAT)


def _chain_to_policy_params(policy, acts, dist, actions, sample_weights) -> np.ndarray:
    """Gradient of sum_i w_i * log pi(a_i | x_i) w.r.t. the flat policy params."""
    w = np.asarray(sample_weights, dtype=FLOAT)
    if isinstance(dist, Categorical):
        d_out = w[:, None] * dist.grad_log_prob(actions)
        d_log_std = None
    else:
        d_mean, d_log_std_rows = dist.grad_log_prob(actions)
        d_out = w[:, None] * d_mean
        d_log_std = (w[:, None] * d_log_std_rows).sum(axis=0)
    grad_w, grad_b, _ = policy.net.backward(acts, d_out)
    flat = policy.net.grads_flat(grad_w, grad_b)
    if policy.log_std is not None:
        flat = np.concatenate([flat, d_log_std])
    return flat


def ppo_policy_loss(
    policy: Policy,
    inputs: np.ndarray,
    actions,
    behavior_log_probs: np.ndarray,
    advantages: np.ndarray,
    clip_ratio: float,
):
    """Clipped-surrogate objective (to maximize) and its policy gradient.

    Per sample: min(ratio * A, clip(ratio, 1-eps, 1+eps) * A) with
    ratio = exp(log pi(a|x) - stored behavior log-prob), averaged over
    the batch. Where the clipped branch wins the min, the sample
    contributes no gradient.
    """
    dist, acts = policy.distribution_cached(inputs)
    log_probs = np.atleast_1d(dist.log_prob(actions))
    with np.errstate(over="ignore"):  # overflow becomes inf, reported below
        ratio = np.exp(log_probs - np.asarray(behavior_log_probs, dtype=FLOAT))
    if not np.all(np.isfinite(ratio)):
        idx = int(np.flatnonzero(~np.isfinite(ratio))[0])
        raise FloatingPointError(f"non-finite probability ratio at transition {idx}")
    adv = np.asarray(advantages, dtype=FLOAT)
    n = len(ratio)
    surr = ratio * adv
    surr_clipped = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * adv
    objective = float(np.minimum(surr, surr_clipped).mean())
    unclipped_wins = surr <= surr_clipped  # ties take the smooth branch
    weights = np.where(unclipped_wins, ratio * adv, 0.0) / n
    return objective, _chain_to_policy_params(policy, acts, dist, actions, weights)


def value_loss(critic: Critic, inputs: np.ndarray, returns: np.ndarray):
    """Mean squared error of the value head (to minimize) and its gradient."""
    out, acts = critic.net.forward_cached(inputs)
    residual = out[:, 0] - np.asarray(returns, dtype=FLOAT)
    mse = float((residual * residual).mean())
    d_out = (2.0 * residual / len(residual))[:, None]
    grad_w, grad_b, _ = critic.net.backward(acts, d_out)
    return mse, critic.net.grads_flat(grad_w, grad_b)


def esil_loss(policy: Policy, batch: EsilBatch):
    """Mean log-probability of the selected hindsight actions (to maximize).

    An empty selection contributes zero value and zero gradient; the
    epoch then trains on the clipped surrogate alone.
    """
    if batch.n_esil == 0:
        return 0.0, _zero_policy_grad(policy)
    inputs = np.concatenate([batch.states, batch.goals], axis=1)
    dist, acts = policy.distribution_cached(inputs)
    log_probs = np.atleast_1d(dist.log_prob(batch.actions))
    weights = np.full(batch.n_esil, 1.0 / batch.n_esil, dtype=FLOAT)
    value = float(log_probs.mean())
    return value, _chain_to_policy_params(policy, acts, dist, batch.actions, weights)


def entropy_bonus(policy: Policy, inputs: np.ndarray):
    """Mean action entropy (to maximize); off by default in training."""
    dist, acts = policy.distribution_cached(inputs)
    if isinstance(dist, Categorical):
        h = dist.entropy()
        value = float(np.mean(h))
        d_out = dist.grad_entropy() / len(np.atleast_1d(h))
        grad_w, grad_b, _ = policy.net.backward(acts, d_out)
        return value, policy.net.grads_flat(grad_w, grad_b)
    value = float(np.mean(dist.entropy()))
    flat = _zero_policy_grad(policy)
    flat[policy.net.n_params :] = dist.grad_entropy_log_std()
    return value, flat


def combined_loss(
    agent: Agent,
    alpha: float,
    beta: float,
    value_coef: float,
    clip_ratio: float,
    policy_term: tuple,
    value_term: tuple,
    esil_term: tuple | None = None,
    entropy_term: tuple | None = None,
    entropy_coef: float = 0.0,
):
    """Combine the pieces into one report and one minimization gradient.

    ``*_term`` arguments are (value, flat-gradient) pairs as produced by
    the loss functions above. A missing or zero-weight imitation term is
    skipped entirely, so a run with beta forced to zero performs exactly
    the arithmetic of plain clipped-surrogate training.
    """
    policy_value, policy_grad = policy_term
    value_value, value_grad = value_term
    esil_value = 0.0

    actor_grad = -alpha * policy_grad
    if esil_term is not None and beta != 0.0:
        esil_value, esil_grad = esil_term
        actor_grad -= beta * esil_grad
    elif esil_term is not None:
        esil_value = esil_term[0]
    if entropy_term is not None and entropy_coef != 0.0:
        actor_grad -= entropy_coef * entropy_term[1]
    critic_grad = (alpha * value_coef) * value_grad

    report = LossReport(
        policy_loss=policy_value,
        value_loss=value_value,
        esil_loss=esil_value,
        combined_loss=alpha * (policy_value - value_coef * value_value) + beta * esil_value,
        alpha=alpha,
        beta=beta,
        clip_ratio=clip_ratio,
        value_coef=value_coef,
    )
    return report, agent.assemble_grad(actor_flat=actor_grad, critic_flat=critic_grad)
