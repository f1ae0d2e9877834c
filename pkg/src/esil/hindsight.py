"""Episodic hindsight relabeling, returns, and the per-step selection filter.

Every collected episode is cloned with its desired goal replaced by the
goal actually achieved at the final step, and rewards recomputed under
that substitute goal. A failed episode thereby becomes a demonstration
of reaching *somewhere*, and the final-step relabeled reward is the
success value by construction.

Not every relabeled step is worth imitating: a step is selected only
when its discounted return improved strictly under the substitute goal.
The fraction of selected steps is the adaptive imitation weight used by
the combined loss, so imitation fades out on its own as the agent starts
reaching the original goals. Relabeling applies to the current epoch's
episodes only; nothing is replayed from earlier policies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .envs import EnvSpec, compute_reward_batch
from .nn import FLOAT
from .rollout import Trajectory, Transition


@dataclass
class HindsightTrajectory:
    """A relabeled episode; returns and mask are filled by the caller."""

    transitions: list
    hindsight_goal: np.ndarray
    returns: np.ndarray | None = None
    selection_mask: np.ndarray | None = None
    worker_id: int = 0
    episode_key: tuple = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.transitions)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([tr.reward for tr in self.transitions], dtype=FLOAT)


def relabel_episode(traj: Trajectory, env_spec: EnvSpec) -> HindsightTrajectory:
    """Clone an episode under its own final achieved goal.

    States, actions and behavior log-probs are untouched; only the
    desired goal and the rewards change. Relabeling a trajectory whose
    goal was achieved at the final step reproduces it exactly.
    """
    g_prime = np.asarray(traj.final_achieved_goal, dtype=FLOAT).copy()
    achieved = np.stack([np.asarray(tr.achieved_after, dtype=FLOAT) for tr in traj.transitions])
    rewards = compute_reward_batch(env_spec, achieved, g_prime)
    cloned = [
        Transition(
            state=tr.state,
            desired_goal=g_prime,
            achieved_before=tr.achieved_before,
            achieved_after=tr.achieved_after,
            action=tr.action,
            reward=float(r),
            behavior_log_prob=tr.behavior_log_prob,
            next_state=tr.next_state,
        )
        for tr, r in zip(traj.transitions, rewards)
    ]
    return HindsightTrajectory(
        cloned, hindsight_goal=g_prime, worker_id=traj.worker_id, episode_key=traj.episode_key
    )


def compute_returns(rewards, gamma: float) -> np.ndarray:
    """Discounted reward sums truncated at the episode end.

    out[t] = sum_{l=0}^{T-t-1} gamma^l * rewards[t+l], evaluated by the
    backward recursion out[t] = rewards[t] + gamma * out[t+1].
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    r = np.ascontiguousarray(rewards, dtype=FLOAT)
    if r.ndim != 1:
        raise ValueError("rewards must be a flat vector")
    return _kernels.discounted_returns(r, float(gamma))


def select_steps(original_returns, hindsight_returns) -> np.ndarray:
    """Keep exactly the steps whose return strictly improved."""
    r = np.asarray(original_returns, dtype=FLOAT)
    rp = np.asarray(hindsight_returns, dtype=FLOAT)
    if r.shape != rp.shape:
        raise ValueError(f"return vectors differ in length: {r.shape} vs {rp.shape}")
    return rp > r


def score_episode(traj: Trajectory, htraj: HindsightTrajectory, gamma: float) -> None:
    """Fill returns on both views of an episode and the selection mask."""
    traj.returns = compute_returns(traj.rewards, gamma)
    htraj.returns = compute_returns(htraj.rewards, gamma)
    htraj.selection_mask = select_steps(traj.returns, htraj.returns)


@dataclass
class EsilBatch:
    """Flattened imitation data for one epoch."""

    states: np.ndarray  # (n_esil, obs_dim)
    goals: np.ndarray  # (n_esil, goal_dim) -- the substitute goals
    actions: object  # (n_esil,) ints or (n_esil, act_dim) floats
    n_esil: int
    n_total: int

    @property
    def beta(self) -> float:
        return self.n_esil / self.n_total if self.n_total else 0.0

    def __len__(self) -> int:
        return self.n_esil


def build_esil_batch(trajs: list, htrajs: list, use_selection: bool = True) -> EsilBatch:
    """Flatten the hindsight steps that pass the filter.

    With the filter disabled (the ablation), every hindsight step is
    used, so the imitation weight saturates at 1.
    """
    if len(trajs) != len(htrajs):
        raise ValueError("trajectory lists must pair up")
    states, goals, actions = [], [], []
    n_total = 0
    for traj, htraj in zip(trajs, htrajs):
        if len(traj) != len(htraj):
            raise ValueError("paired trajectories differ in length")
        if htraj.selection_mask is None:
            raise ValueError("score_episode() must run before batching")
        n_total += len(htraj)
        for tr, keep in zip(htraj.transitions, htraj.selection_mask):
            if use_selection and not keep:
                continue
            states.append(tr.state)
            goals.append(tr.desired_goal)
            actions.append(tr.action)
    n_esil = len(states)
    if n_esil == 0:
        obs_dim = len(trajs[0].transitions[0].state) if trajs else 0
        goal_dim = len(trajs[0].transitions[0].desired_goal) if trajs else 0
        return EsilBatch(
            states=np.zeros((0, obs_dim), dtype=FLOAT),
            goals=np.zeros((0, goal_dim), dtype=FLOAT),
            actions=np.zeros(0, dtype=np.int64),
            n_esil=0,
            n_total=n_total,
        )
    first_action = actions[0]
    if np.isscalar(first_action) or np.asarray(first_action).ndim == 0:
        packed_actions = np.array(actions, dtype=np.int64)
    else:
        packed_actions = np.stack([np.asarray(a, dtype=FLOAT) for a in actions])
    return EsilBatch(
        states=np.stack([np.asarray(s, dtype=FLOAT) for s in states]),
        goals=np.stack([np.asarray(g, dtype=FLOAT) for g in goals]),
        actions=packed_actions,
        n_esil=n_esil,
        n_total=n_total,
    )
