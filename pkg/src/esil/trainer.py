"""The training loop: collect, relabel, optimize, evaluate, repeat.

Each epoch collects a fixed number of fresh episodes under the current
policy, scores original and (for the hindsight variant) relabeled
returns, then runs a fixed number of optimization iterations on the
combined loss. Behavior log-probs stay frozen for the whole epoch, so
the probability ratios start at one. Per-worker gradients are averaged
in fixed order and a single Adam step is applied, after which every
worker sees the same parameters. Evaluation after each epoch runs greedy
actions on noise-free environments.

Variants:

* ``ppo``          clipped surrogate + value loss only;
* ``ppo_sil``      adds buffer self-imitation of past good transitions;
* ``ppo_sil_her``  same buffer, filled with final-goal-relabeled entries;
* ``ppo_esil``     episodic hindsight imitation of the current epoch.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .baselines import SilBuffer, her_relabel_for_buffer, sil_loss_terms, sil_sample, sil_store
from .envs import ENV_NAMES, env_spec, is_success, make_env
from .hindsight import EsilBatch, build_esil_batch, compute_returns, relabel_episode, score_episode
from .losses import combined_loss, entropy_bonus, esil_loss, ppo_policy_loss, value_loss
from .nn import FLOAT, AdamState, adam_step
from .policy import Agent, policy_input, save_checkpoint
from .rollout import WorkerPool, reduce_gradients
from .seeding import STREAM_EVAL, STREAM_INIT, STREAM_SHUFFLE, STREAM_SIL, rng_for

VARIANTS = ("ppo", "ppo_sil", "ppo_sil_her", "ppo_esil")

METRICS_HEADER = (
    "epoch",
    "success_rate",
    "beta",
    "policy_loss",
    "value_loss",
    "esil_loss",
    "seconds",
)


class TrainingDiverged(RuntimeError):
    """A loss or gradient went non-finite; the last epoch's checkpoint stands."""


@dataclass
class TrainConfig:
    """Everything a run needs; file parsing lives in esil.config."""

    env: str = "empty-room"
    variant: str = "ppo_esil"
    epochs: int = 100
    episodes_per_epoch: int = 100
    updates_per_epoch: int = 10
    minibatch_size: int = 160
    gamma: float = 0.98
    learning_rate: float = 3e-4
    clip_ratio: float = 0.2
    alpha: float = 1.0
    value_coef: float = 1.0
    entropy_coef: float = 0.0
    advantage_normalization: bool = False
    selection_module: bool = True
    worker_count: int = 1
    master_seed: int = 0
    eval_episodes: int = 10
    hidden_sizes: tuple = (256, 256, 256)
    adam_epsilon: float = 1e-5
    sil_capacity: int = 100_000
    sil_batch_size: int = 64
    sil_policy_coef: float = 1.0
    sil_value_term: bool = True
    sil_value_coef: float = 0.01
    beta_override: float | None = None

    @classmethod
    def defaults_for(cls, env: str, **overrides) -> "TrainConfig":
        """Per-environment defaults; keyword overrides win."""
        base = {
            "empty-room": dict(epochs=100, episodes_per_epoch=100, minibatch_size=160,
                               worker_count=1),
            "point-reach": dict(epochs=100, episodes_per_epoch=48, minibatch_size=125,
                                worker_count=4),
            "point-push": dict(epochs=300, episodes_per_epoch=48, minibatch_size=125,
                               worker_count=4),
        }
        if env not in base:
            raise ValueError(f"unknown environment {env!r} (choose from {ENV_NAMES})")
        merged = {"env": env, **base[env], **overrides}
        return cls(**merged)

    def validate(self) -> None:
        if self.env not in ENV_NAMES:
            raise ValueError(f"unknown environment {self.env!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r} (choose from {VARIANTS})")
        positive = {
            "episodes_per_epoch": self.episodes_per_epoch,
            "updates_per_epoch": self.updates_per_epoch,
            "minibatch_size": self.minibatch_size,
            "learning_rate": self.learning_rate,
            "clip_ratio": self.clip_ratio,
            "worker_count": self.worker_count,
            "eval_episodes": self.eval_episodes,
            "adam_epsilon": self.adam_epsilon,
            "sil_capacity": self.sil_capacity,
            "sil_batch_size": self.sil_batch_size,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.episodes_per_epoch % self.worker_count != 0:
            raise ValueError(
                f"episodes_per_epoch={self.episodes_per_epoch} must be divisible by "
                f"worker_count={self.worker_count}"
            )
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden_sizes must be positive integers")
        per_worker = (self.episodes_per_epoch // self.worker_count) * env_spec(
            self.env
        ).episode_length
        if per_worker < self.minibatch_size:
            raise ValueError(
                f"minibatch_size={self.minibatch_size} exceeds a worker's "
                f"{per_worker} transitions per epoch"
            )
        if self.beta_override is not None and not 0.0 <= self.beta_override <= 1.0:
            raise ValueError("beta_override must lie in [0, 1]")


@dataclass
class EpochMetrics:
    epoch: int
    success_rate: float
    beta: float
    policy_loss: float
    value_loss: float
    esil_loss: float
    seconds: float
    episodes: int

    def csv_row(self) -> list:
        return [
            self.epoch,
            repr(self.success_rate),
            repr(self.beta),
            repr(self.policy_loss),
            repr(self.value_loss),
            repr(self.esil_loss),
            repr(self.seconds),
        ]


@dataclass
class TrainResult:
    agent: Agent
    metrics: list
    run_dir: Path | None = None


def evaluate(policy, env, episodes: int, rng: np.random.Generator) -> float:
    """Fraction of episodes whose final step reaches the goal, acting greedily."""
    successes = 0
    for _ in range(int(episodes)):
        obs = env.reset(rng)
        for _ in range(env.spec.episode_length):
            action = policy.greedy_action(policy_input(obs.observation, obs.desired_goal))
            obs, _, _ = env.step(action, rng)
        if is_success(env.spec, obs.achieved_goal, obs.desired_goal):
            successes += 1
    return successes / int(episodes)


class _Cursor:
    """Sequential minibatch slices over a shuffled index set.

    One shuffle up front, consecutive slices after that; exhausting the
    set reshuffles, so ``passes`` sequential reads cover the data about
    ``passes`` times.
    """

    def __init__(self, n: int, batch: int, rng):
        self._rng = rng
        self._batch = int(batch)
        self._order = rng.permutation(int(n))
        self._cursor = 0

    def next(self) -> np.ndarray:
        if self._cursor + self._batch > len(self._order):
            self._order = self._rng.permutation(len(self._order))
            self._cursor = 0
        idx = self._order[self._cursor : self._cursor + self._batch]
        self._cursor += self._batch
        return idx


class _WorkerData:
    """One worker's packed epoch data plus its minibatch cursors."""

    def __init__(self, trajectories, critic, shuffle_rng, esil_rng, minibatch_size):
        self.inputs = np.concatenate(
            [
                np.stack([tr.state for t in trajectories for tr in t.transitions]),
                np.stack([tr.desired_goal for t in trajectories for tr in t.transitions]),
            ],
            axis=1,
        ).astype(FLOAT)
        first_action = trajectories[0].transitions[0].action
        if np.isscalar(first_action) or np.asarray(first_action).ndim == 0:
            self.actions = np.array(
                [tr.action for t in trajectories for tr in t.transitions], dtype=np.int64
            )
        else:
            self.actions = np.stack(
                [np.asarray(tr.action, dtype=FLOAT) for t in trajectories for tr in t.transitions]
            )
        self.behavior_log_probs = np.array(
            [tr.behavior_log_prob for t in trajectories for tr in t.transitions], dtype=FLOAT
        )
        self.returns = np.concatenate([t.returns for t in trajectories])
        # Advantages against the start-of-epoch critic, fixed for all
        # iterations of the epoch; no gradient flows through them.
        self.advantages = self.returns - critic.value(self.inputs)
        self.steps_per_pass = max(1, len(self.returns) // int(minibatch_size))
        self._ppo_cursor = _Cursor(len(self.returns), minibatch_size, shuffle_rng)
        self.esil_batch = None
        self._esil_cursor = None
        self._esil_rng = esil_rng

    def attach_esil(self, batch) -> None:
        """Pair the selected hindsight steps with this worker's passes.

        The slice size is chosen so one optimization iteration (one pass
        over the on-policy data) also covers the selected set about
        once; no separate imitation batch size exists.
        """
        self.esil_batch = batch
        if batch is not None and batch.n_esil > 0:
            slice_size = -(-batch.n_esil // self.steps_per_pass)  # ceil division
            self._esil_cursor = _Cursor(batch.n_esil, slice_size, self._esil_rng)

    def next_minibatch(self) -> np.ndarray:
        return self._ppo_cursor.next()

    def next_esil_slice(self):
        batch = self.esil_batch
        idx = self._esil_cursor.next()
        return EsilBatch(
            states=batch.states[idx],
            goals=batch.goals[idx],
            actions=batch.actions[idx],
            n_esil=len(idx),
            n_total=batch.n_total,
        )


def _worker_gradient(agent, config, data: _WorkerData, beta: float):
    """Combined-loss gradient for one worker's next minibatch."""
    idx = data.next_minibatch()
    adv = data.advantages[idx]
    if config.advantage_normalization:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    inputs = data.inputs[idx]
    policy_term = ppo_policy_loss(
        agent.policy,
        inputs,
        data.actions[idx],
        data.behavior_log_probs[idx],
        adv,
        config.clip_ratio,
    )
    value_term = value_loss(agent.critic, inputs, data.returns[idx])
    esil_term = None
    if beta != 0.0 and data.esil_batch is not None and data.esil_batch.n_esil > 0:
        esil_term = esil_loss(agent.policy, data.next_esil_slice())
    entropy_term = None
    if config.entropy_coef != 0.0:
        entropy_term = entropy_bonus(agent.policy, inputs)
    return combined_loss(
        agent,
        config.alpha,
        beta,
        config.value_coef,
        config.clip_ratio,
        policy_term,
        value_term,
        esil_term=esil_term,
        entropy_term=entropy_term,
        entropy_coef=config.entropy_coef,
    )


def train(config: TrainConfig, run_dir=None, on_epoch=None, log=None) -> TrainResult:
    """Run the full loop; returns the trained agent and per-epoch metrics.

    When ``run_dir`` is given it receives metrics.csv (one row per
    epoch), latest/best actor checkpoints, and summary.json. The whole
    run is a deterministic function of (config, master_seed) per kernel
    backend, apart from the wall-clock seconds column.
    """
    config.validate()
    spec = env_spec(config.env)
    kind = "categorical" if spec.action_kind == "discrete" else "diagonal-gaussian"
    input_dim = spec.observation_dim + spec.achieved_goal_dim

    agent = Agent.create(
        kind,
        input_dim,
        spec.action_dim,
        config.hidden_sizes,
        rng_for(config.master_seed, STREAM_INIT),
    )
    params = agent.params  # views: the Adam step updates the networks in place
    adam = AdamState(
        agent.n_params, learning_rate=config.learning_rate, epsilon=config.adam_epsilon
    )
    pool = WorkerPool(config.env, config.worker_count, config.master_seed)
    buffer = SilBuffer(config.sil_capacity) if config.variant in ("ppo_sil", "ppo_sil_her") else None

    run_dir = Path(run_dir) if run_dir is not None else None
    csv_file = csv_writer = None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        csv_file = open(run_dir / "metrics.csv", "w", newline="")
        csv_writer = csv.writer(csv_file)
        csv_writer.writerow(METRICS_HEADER)
        csv_file.flush()
        save_checkpoint(run_dir / "latest.ckpt", agent.policy)

    metrics: list = []
    best_success = -1.0
    start = time.perf_counter()
    workers = range(config.worker_count)

    try:
        for epoch in range(1, config.epochs + 1):
            t0 = time.perf_counter()
            try:
                trajectories = pool.collect_epoch(agent.policy, config.episodes_per_epoch, epoch)
            except FloatingPointError as exc:
                raise TrainingDiverged(f"collection failed at epoch {epoch}: {exc}") from exc
            by_worker = [[t for t in trajectories if t.worker_id == w] for w in workers]
            for traj in trajectories:
                traj.returns = compute_returns(traj.rewards, config.gamma)

            beta = 0.0
            per_worker_esil = [None] * config.worker_count
            if config.variant == "ppo_esil":
                n_esil = n_total = 0
                for w in workers:
                    htrajs = [relabel_episode(t, spec) for t in by_worker[w]]
                    for t, h in zip(by_worker[w], htrajs):
                        score_episode(t, h, config.gamma)
                    batch = build_esil_batch(by_worker[w], htrajs, config.selection_module)
                    per_worker_esil[w] = batch
                    n_esil += batch.n_esil
                    n_total += batch.n_total
                beta = n_esil / n_total if n_total else 0.0
                if config.beta_override is not None:
                    beta = config.beta_override
            elif buffer is not None:
                for traj in trajectories:
                    if config.variant == "ppo_sil_her":
                        sil_store(buffer, her_relabel_for_buffer(traj, spec, config.gamma))
                    else:
                        sil_store(buffer, traj)

            worker_data = []
            for w in workers:
                # Distinct sub-streams per cursor: the imitation pipeline
                # must not perturb the on-policy minibatch order, or a run
                # with the imitation weight at zero would stop matching
                # the plain variant bit for bit.
                data = _WorkerData(
                    by_worker[w],
                    agent.critic,
                    rng_for(config.master_seed, STREAM_SHUFFLE, epoch, w, 0),
                    rng_for(config.master_seed, STREAM_SHUFFLE, epoch, w, 1),
                    config.minibatch_size,
                )
                if beta != 0.0:
                    data.attach_esil(per_worker_esil[w])
                worker_data.append(data)

            # Each optimization iteration is one shuffled pass over the
            # collected transitions in minibatches (and, in step with it,
            # over the selected hindsight steps).
            steps_per_pass = worker_data[0].steps_per_pass
            reports = []
            global_step = 0
            for iteration in range(config.updates_per_epoch):
                for _ in range(steps_per_pass):
                    grads, step_reports = [], []
                    try:
                        for w in workers:
                            report, grad = _worker_gradient(agent, config, worker_data[w], beta)
                            grads.append(grad)
                            step_reports.append(report)
                    except FloatingPointError as exc:
                        raise TrainingDiverged(
                            f"epoch {epoch}, iteration {iteration}: {exc}"
                        ) from exc
                    total_grad = reduce_gradients(grads)

                    if buffer is not None and len(buffer) > 0:
                        sample = sil_sample(
                            buffer,
                            config.sil_batch_size,
                            agent.critic,
                            rng_for(config.master_seed, STREAM_SIL, epoch, global_step),
                        )
                        if len(sample) > 0:
                            policy_term, critic_term = sil_loss_terms(
                                agent.policy, agent.critic, sample
                            )
                            actor_g = -config.sil_policy_coef * policy_term[1]
                            critic_g = (
                                config.sil_value_coef * critic_term[1]
                                if config.sil_value_term
                                else np.zeros_like(critic_term[1])
                            )
                            total_grad += agent.assemble_grad(actor_g, critic_g)
                            for report in step_reports:
                                report.esil_loss = policy_term[0]

                    mean_combined = float(np.mean([r.combined_loss for r in step_reports]))
                    if not np.isfinite(mean_combined):
                        raise TrainingDiverged(
                            f"non-finite combined loss at epoch {epoch}, "
                            f"iteration {iteration}, step {global_step}"
                        )
                    try:
                        adam_step(adam, params, total_grad, agent.layout)
                    except FloatingPointError as exc:
                        raise TrainingDiverged(
                            f"epoch {epoch}, iteration {iteration}: {exc}"
                        ) from exc
                    reports.append(step_reports)
                    global_step += 1

            total_successes = 0
            for w in workers:
                eval_env = make_env(config.env, evaluation=True)
                rate = evaluate(
                    agent.policy,
                    eval_env,
                    config.eval_episodes,
                    rng_for(config.master_seed, STREAM_EVAL, epoch, w),
                )
                total_successes += rate * config.eval_episodes
            success_rate = total_successes / (config.eval_episodes * config.worker_count)

            flat = [r for group in reports for r in group]
            row = EpochMetrics(
                epoch=epoch,
                success_rate=float(success_rate),
                beta=float(beta),
                policy_loss=float(np.mean([r.policy_loss for r in flat])),
                value_loss=float(np.mean([r.value_loss for r in flat])),
                esil_loss=float(np.mean([r.esil_loss for r in flat])),
                seconds=time.perf_counter() - t0,
                episodes=config.episodes_per_epoch,
            )
            metrics.append(row)

            if csv_writer is not None:
                csv_writer.writerow(row.csv_row())
                csv_file.flush()
            if run_dir is not None:
                save_checkpoint(run_dir / "latest.ckpt", agent.policy)
                if success_rate > best_success:
                    best_success = success_rate
                    save_checkpoint(run_dir / "best.ckpt", agent.policy)
            if on_epoch is not None:
                on_epoch(agent, row)
            if log is not None:
                log(
                    f"epoch {epoch:4d}  success {row.success_rate:.3f}  beta {row.beta:.3f}  "
                    f"policy {row.policy_loss:+.4f}  value {row.value_loss:.4f}  "
                    f"esil {row.esil_loss:+.4f}  {row.seconds:.2f}s"
                )
    finally:
        if csv_file is not None:
            csv_file.close()

    if run_dir is not None:
        summary = {
            "env": config.env,
            "variant": config.variant,
            "epochs_run": len(metrics),
            "episodes_per_epoch": config.episodes_per_epoch,
            "master_seed": config.master_seed,
            "backend": _kernels.BACKEND,
            "n_params": agent.n_params,
            "final_success_rate": metrics[-1].success_rate if metrics else None,
            "best_success_rate": best_success if metrics else None,
            "final_beta": metrics[-1].beta if metrics else None,
            "total_seconds": time.perf_counter() - start,
        }
        (run_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")

    return TrainResult(agent=agent, metrics=metrics, run_dir=run_dir)
