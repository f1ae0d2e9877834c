"""Replay-buffer self-imitation baselines.

The comparison variants imitate past good experience sampled from a
bounded buffer: entries are (state, action, desired goal, episode
return), and sampling weights each entry by the positive part of its
advantage against the *current* critic, so stale entries lose priority
as the value estimates catch up. The hindsight variant fills the same
buffer with episodes relabeled to their final achieved goal before
storage.

This buffer-mediated, transition-level pipeline is exactly what the
episodic approach in :mod:`esil.hindsight` is measured against: here old
experience persists across epochs, there only the current epoch's
episodes are imitated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import EnvSpec
from .hindsight import EsilBatch, compute_returns, relabel_episode
from .losses import esil_loss
from .nn import FLOAT
from .policy import Critic, Policy


class SilBuffer:
    """Ring buffer of per-transition imitation candidates."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self._states = None
        self._goals = None
        self._actions = None
        self._returns = None
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def _ensure_storage(self, state, goal, action) -> None:
        if self._states is not None:
            return
        self._states = np.zeros((self.capacity, len(state)), dtype=FLOAT)
        self._goals = np.zeros((self.capacity, len(goal)), dtype=FLOAT)
        if np.isscalar(action) or np.asarray(action).ndim == 0:
            self._actions = np.zeros(self.capacity, dtype=np.int64)
        else:
            self._actions = np.zeros((self.capacity, len(action)), dtype=FLOAT)
        self._returns = np.zeros(self.capacity, dtype=FLOAT)

    def add(self, state, action, goal, ret: float) -> None:
        self._ensure_storage(state, goal, action)
        i = self._next
        self._states[i] = state
        self._goals[i] = goal
        self._actions[i] = action
        self._returns[i] = ret
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def entries(self) -> tuple:
        """Current contents, oldest-first order not guaranteed."""
        n = self._size
        return (self._states[:n], self._goals[:n], self._actions[:n], self._returns[:n])

    def priorities(self, critic: Critic) -> np.ndarray:
        """Positive-part advantage of every entry under the current critic."""
        if self._size == 0:
            return np.zeros(0, dtype=FLOAT)
        states, goals, _, returns = self.entries()
        values = critic.value(np.concatenate([states, goals], axis=1))
        return np.maximum(returns - values, 0.0)


def sil_store(buffer: SilBuffer, trajectory) -> SilBuffer:
    """Append every transition of a scored trajectory with its return."""
    if trajectory.returns is None:
        raise ValueError("trajectory must carry returns before storage")
    for tr, ret in zip(trajectory.transitions, trajectory.returns):
        buffer.add(tr.state, tr.action, tr.desired_goal, float(ret))
    return buffer


@dataclass
class SilSample:
    states: np.ndarray
    goals: np.ndarray
    actions: object
    returns: np.ndarray

    def __len__(self) -> int:
        return len(self.returns)


def sil_sample(
    buffer: SilBuffer, batch_size: int, critic: Critic, rng: np.random.Generator
) -> SilSample:
    """Draw a batch with replacement, weighted by positive-part advantage.

    Entries at zero priority are never drawn while any positive priority
    exists; if every priority is zero the sample is empty, signalling
    that the buffer currently holds nothing worth imitating.
    """
    if len(buffer) == 0:
        raise ValueError("cannot sample from an empty buffer")
    prios = buffer.priorities(critic)
    total = float(prios.sum())
    states, goals, actions, returns = buffer.entries()
    if total <= 0.0:
        empty_actions = (
            np.zeros(0, dtype=np.int64) if actions.ndim == 1 else np.zeros((0, actions.shape[1]))
        )
        return SilSample(
            states=np.zeros((0, states.shape[1]), dtype=FLOAT),
            goals=np.zeros((0, goals.shape[1]), dtype=FLOAT),
            actions=empty_actions,
            returns=np.zeros(0, dtype=FLOAT),
        )
    cdf = np.cumsum(prios / total)
    idx = np.minimum(np.searchsorted(cdf, rng.random(batch_size), side="right"), len(prios) - 1)
    return SilSample(
        states=states[idx].copy(),
        goals=goals[idx].copy(),
        actions=actions[idx].copy(),
        returns=returns[idx].copy(),
    )


def her_relabel_for_buffer(trajectory, env_spec: EnvSpec, gamma: float):
    """Relabel an episode to its final achieved goal before storage.

    Rewards and returns are recomputed under the substitute goal, so the
    buffer receives positive-priority entries even from episodes that
    failed their original goal.
    """
    relabeled = relabel_episode(trajectory, env_spec)
    relabeled.returns = compute_returns(relabeled.rewards, gamma)
    return relabeled


def sil_loss_terms(policy: Policy, critic: Critic, sample: SilSample):
    """Imitation terms for a sampled batch.

    Returns (policy_term, critic_term) in the convention of
    :mod:`esil.losses`: the policy term is a mean log-probability to
    maximize (actor parameters only); the critic term is the one-sided
    value regression mean(0.5 * ((R - V)+)^2) to minimize, which pulls
    value estimates up toward observed returns but never down.
    """
    n = len(sample)
    if n == 0:
        zero_p = np.zeros(policy.layout.total_size, dtype=FLOAT)
        zero_c = np.zeros(critic.net.n_params, dtype=FLOAT)
        return (0.0, zero_p), (0.0, zero_c)
    batch = EsilBatch(
        states=sample.states, goals=sample.goals, actions=sample.actions, n_esil=n, n_total=n
    )
    policy_term = esil_loss(policy, batch)

    inputs = np.concatenate([sample.states, sample.goals], axis=1)
    out, acts = critic.net.forward_cached(inputs)
    gap = np.maximum(sample.returns - out[:, 0], 0.0)
    value = float(0.5 * (gap * gap).mean())
    d_out = (-gap / n)[:, None]
    grad_w, grad_b, _ = critic.net.backward(acts, d_out)
    return policy_term, (value, critic.net.grads_flat(grad_w, grad_b))
