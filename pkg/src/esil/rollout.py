"""Episode collection and cross-worker gradient reduction.

Workers own disjoint environment instances and random streams; the
policy is shared read-only during collection. Each episode's generator
is derived from (master_seed, epoch, worker, episode), so the collected
data is a pure function of configuration and seed no matter how worker
threads interleave.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .envs import env_spec, make_env
from .nn import FLOAT
from .policy import policy_input
from .seeding import STREAM_COLLECT, rng_for


@dataclass
class Transition:
    """One environment step, with the behavior log-probability recorded
    at collection time."""

    state: np.ndarray
    desired_goal: np.ndarray
    achieved_before: np.ndarray
    achieved_after: np.ndarray
    action: object
    reward: float
    behavior_log_prob: float
    next_state: np.ndarray


@dataclass
class Trajectory:
    """Exactly one fixed-length episode."""

    transitions: list
    returns: np.ndarray | None = None
    worker_id: int = 0
    episode_key: tuple = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.transitions)

    @property
    def desired_goal(self) -> np.ndarray:
        return self.transitions[0].desired_goal

    @property
    def final_achieved_goal(self) -> np.ndarray:
        return self.transitions[-1].achieved_after

    @property
    def rewards(self) -> np.ndarray:
        return np.array([tr.reward for tr in self.transitions], dtype=FLOAT)

    def validate_chain(self) -> None:
        for a, b in zip(self.transitions, self.transitions[1:]):
            if not np.array_equal(a.next_state, b.state):
                raise ValueError("trajectory chain broken: next_state != following state")
            if not np.array_equal(a.desired_goal, b.desired_goal):
                raise ValueError("desired goal changed inside an episode")


def collect_episode(policy, env, rng, worker_id: int = 0, episode_key: tuple = ()) -> Trajectory:
    """Roll one full episode with stochastic actions.

    The stored action is the one the policy chose; environment-side
    action noise is treated as dynamics. Non-finite policy outputs abort
    immediately so a diverged epoch fails loudly.
    """
    obs = env.reset(rng)
    horizon = env.spec.episode_length
    transitions = []
    for _ in range(horizon):
        x = policy_input(obs.observation, obs.desired_goal)
        action, log_prob = policy.action_and_log_prob(x, rng)
        if not np.isfinite(log_prob):
            raise FloatingPointError(
                f"non-finite action log-probability at step {len(transitions)} "
                f"(worker {worker_id})"
            )
        next_obs, reward, _ = env.step(action, rng)
        transitions.append(
            Transition(
                state=obs.observation,
                desired_goal=obs.desired_goal,
                achieved_before=obs.achieved_goal,
                achieved_after=next_obs.achieved_goal,
                action=action,
                reward=reward,
                behavior_log_prob=float(log_prob),
                next_state=next_obs.observation,
            )
        )
        obs = next_obs
    return Trajectory(transitions, worker_id=worker_id, episode_key=tuple(episode_key))


class WorkerPool:
    """Fixed set of rollout workers over one environment family."""

    def __init__(self, env_name: str, worker_count: int, master_seed: int):
        if worker_count < 1:
            raise ValueError("worker_count must be positive")
        self.env_name = env_name
        self.spec = env_spec(env_name)
        self.worker_count = int(worker_count)
        self.master_seed = int(master_seed)
        self.envs = [make_env(env_name) for _ in range(self.worker_count)]

    def _collect_worker(self, worker: int, policy, per_worker: int, epoch: int) -> list:
        out = []
        for episode in range(per_worker):
            rng = rng_for(self.master_seed, STREAM_COLLECT, epoch, worker, episode)
            out.append(
                collect_episode(
                    policy,
                    self.envs[worker],
                    rng,
                    worker_id=worker,
                    episode_key=(epoch, worker, episode),
                )
            )
        return out

    def collect_epoch(self, policy, episodes_per_epoch: int, epoch: int = 0) -> list:
        """Collect N episodes, N/W per worker, ordered by (worker, episode)."""
        n = int(episodes_per_epoch)
        if n % self.worker_count != 0:
            raise ValueError(
                f"episodes_per_epoch={n} not divisible by worker_count={self.worker_count}"
            )
        per_worker = n // self.worker_count
        if self.worker_count == 1:
            batches = [self._collect_worker(0, policy, per_worker, epoch)]
        else:
            with ThreadPoolExecutor(max_workers=self.worker_count) as pool:
                futures = [
                    pool.submit(self._collect_worker, w, policy, per_worker, epoch)
                    for w in range(self.worker_count)
                ]
                batches = [f.result() for f in futures]
        return [traj for batch in batches for traj in batch]


def reduce_gradients(per_worker_grads: list) -> np.ndarray:
    """Element-wise mean over workers, summed in fixed worker order."""
    if not per_worker_grads:
        raise ValueError("no gradients to reduce")
    first = per_worker_grads[0]
    acc = np.array(first, dtype=FLOAT, copy=True)
    for g in per_worker_grads[1:]:
        if g.shape != first.shape:
            raise ValueError(f"gradient length mismatch: {g.shape} vs {first.shape}")
        acc += g
    acc /= len(per_worker_grads)
    return acc
