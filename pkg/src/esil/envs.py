"""Goal-conditioned environments behind one small interface.

Three tasks share the same contract (reset/step returning observation,
achieved goal and desired goal):

* ``empty-room`` -- an 11x11 grid. The agent starts in the upper-left
  corner, the target cell is drawn uniformly over the grid, and with
  probability 0.2 the executed action is replaced by a uniformly random
  one. Moves off the grid leave the position unchanged. Reward is +1 on
  every step that ends on the target, else 0. Episodes last 32 steps.
* ``point-reach`` -- a 2-D point agent in the unit box moving by at most
  0.05 per axis per step toward a uniformly drawn goal position. Reward
  is 0 within Euclidean distance 0.05 of the goal, -1 otherwise.
  Episodes last 50 steps.
* ``point-push`` -- as point-reach, plus a passive object: while the
  agent is within contact radius 0.08 of the object, the object moves
  with the agent's displacement (a carry-style contact model); it never
  moves otherwise. The achieved goal is the object position. The
  desired goal is drawn at least 0.2 away from the object's start, so
  success always requires finding the object and transporting it.

The point tasks are desk-scale stand-ins for robotic reach/push
manipulation: same sparse success-indicator reward and goal structure,
no physics engine. Rewards are always recomputed from the post-step
achieved goal via :func:`compute_reward`, the same pure function the
hindsight relabeler uses.

Action noise in the grid world models exploration during interaction;
evaluation rollouts construct the environment with
``evaluation=True``, which disables it (a greedy policy is otherwise
capped well below a perfect success rate by noise at the final step).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FLOAT = np.float64

ENV_NAMES = ("empty-room", "point-reach", "point-push")


@dataclass
class GoalObservation:
    """What an environment hands back each step."""

    observation: np.ndarray
    achieved_goal: np.ndarray
    desired_goal: np.ndarray

    def copy(self) -> "GoalObservation":
        return GoalObservation(
            self.observation.copy(), self.achieved_goal.copy(), self.desired_goal.copy()
        )


@dataclass(frozen=True)
class EnvSpec:
    """Static description of one environment family."""

    name: str
    observation_dim: int
    achieved_goal_dim: int
    action_kind: str  # "discrete" | "continuous"
    action_dim: int  # action count | action vector dimension
    episode_length: int
    reward_convention: str  # "unit-positive" | "negative-indicator"
    distance_threshold: float


def compute_reward(spec: EnvSpec, achieved_goal_after, desired_goal) -> float:
    """Reward as a pure function of the post-step achieved goal.

    unit-positive: 1 if the achieved goal equals the desired goal, else 0.
    negative-indicator: 0 if within the distance threshold (inclusive),
    else -1.
    """
    a = np.asarray(achieved_goal_after, dtype=FLOAT)
    g = np.asarray(desired_goal, dtype=FLOAT)
    if a.shape != (spec.achieved_goal_dim,) or g.shape != (spec.achieved_goal_dim,):
        raise ValueError(
            f"goal dimension mismatch: {a.shape} vs {g.shape} vs ({spec.achieved_goal_dim},)"
        )
    if spec.reward_convention == "unit-positive":
        return 1.0 if np.array_equal(a, g) else 0.0
    if spec.reward_convention == "negative-indicator":
        return 0.0 if float(np.linalg.norm(a - g)) <= spec.distance_threshold else -1.0
    raise ValueError(f"unknown reward convention {spec.reward_convention!r}")


def compute_reward_batch(spec: EnvSpec, achieved_after: np.ndarray, desired_goal) -> np.ndarray:
    """Vectorized :func:`compute_reward` over rows of achieved goals.

    Semantically identical to calling the scalar form per row; the
    relabeler uses this to keep whole-episode recomputation cheap.
    """
    a = np.asarray(achieved_after, dtype=FLOAT)
    g = np.asarray(desired_goal, dtype=FLOAT)
    if a.ndim != 2 or a.shape[1] != spec.achieved_goal_dim or g.shape != (spec.achieved_goal_dim,):
        raise ValueError(f"goal dimension mismatch: {a.shape} vs {g.shape}")
    if spec.reward_convention == "unit-positive":
        return np.where(np.all(a == g, axis=1), 1.0, 0.0)
    if spec.reward_convention == "negative-indicator":
        dist = np.linalg.norm(a - g, axis=1)
        return np.where(dist <= spec.distance_threshold, 0.0, -1.0)
    raise ValueError(f"unknown reward convention {spec.reward_convention!r}")


def is_success(spec: EnvSpec, achieved_goal, desired_goal) -> bool:
    """Whether the achieved goal counts as reaching the desired one.

    Episode success is this predicate evaluated at the final step.
    """
    a = np.asarray(achieved_goal, dtype=FLOAT)
    g = np.asarray(desired_goal, dtype=FLOAT)
    if a.shape != g.shape:
        raise ValueError(f"goal dimension mismatch: {a.shape} vs {g.shape}")
    if spec.reward_convention == "unit-positive":
        return bool(np.array_equal(a, g))
    return bool(float(np.linalg.norm(a - g)) <= spec.distance_threshold)


class EmptyRoom:
    """11x11 grid world with a random target cell.

    Actions: 0 left, 1 right, 2 up, 3 down, 4 stay; position is (x, y)
    with (0, 0) the upper-left corner.
    """

    GRID = 11
    ACTION_DELTAS = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))

    spec = EnvSpec(
        name="empty-room",
        observation_dim=2,
        achieved_goal_dim=2,
        action_kind="discrete",
        action_dim=5,
        episode_length=32,
        reward_convention="unit-positive",
        distance_threshold=0.0,
    )

    def __init__(self, random_action_prob: float = 0.2):
        if not 0.0 <= random_action_prob <= 1.0:
            raise ValueError("random_action_prob must lie in [0, 1]")
        self.random_action_prob = float(random_action_prob)
        self._pos = None
        self._goal = None
        self._t = 0

    def _obs(self) -> GoalObservation:
        pos = np.asarray(self._pos, dtype=FLOAT)
        return GoalObservation(pos.copy(), pos.copy(), np.asarray(self._goal, dtype=FLOAT))

    def reset(self, rng: np.random.Generator) -> GoalObservation:
        self._pos = (0, 0)
        self._goal = (int(rng.integers(self.GRID)), int(rng.integers(self.GRID)))
        self._t = 0
        return self._obs()

    def step(self, action, rng: np.random.Generator):
        if self._pos is None:
            raise RuntimeError("reset() before step()")
        if self._t >= self.spec.episode_length:
            raise RuntimeError(f"episode exhausted after {self.spec.episode_length} steps")
        action = int(action)
        if not 0 <= action < 5:
            raise ValueError(f"action {action} out of range [0, 5)")
        if self.random_action_prob > 0 and rng.random() < self.random_action_prob:
            action = int(rng.integers(5))
        dx, dy = self.ACTION_DELTAS[action]
        nx, ny = self._pos[0] + dx, self._pos[1] + dy
        if 0 <= nx < self.GRID and 0 <= ny < self.GRID:
            self._pos = (nx, ny)
        obs = self._obs()
        reward = compute_reward(self.spec, obs.achieved_goal, obs.desired_goal)
        step_index = self._t
        self._t += 1
        return obs, reward, step_index


class _PointBase:
    """Shared kinematics for the continuous point tasks: unit-box
    workspace, per-axis displacement capped at MAX_STEP."""

    MAX_STEP = 0.05

    def __init__(self):
        self._t = 0
        self._agent = None

    def _clip_workspace(self, p: np.ndarray) -> np.ndarray:
        return np.clip(p, 0.0, 1.0)

    def _displacement(self, action) -> np.ndarray:
        a = np.asarray(action, dtype=FLOAT)
        if a.shape != (2,):
            raise ValueError(f"expected a 2-D action, got shape {a.shape}")
        return np.clip(a, -1.0, 1.0) * self.MAX_STEP


class PointReach(_PointBase):
    """Move the point itself onto the goal."""

    START = (0.5, 0.5)

    spec = EnvSpec(
        name="point-reach",
        observation_dim=2,
        achieved_goal_dim=2,
        action_kind="continuous",
        action_dim=2,
        episode_length=50,
        reward_convention="negative-indicator",
        distance_threshold=0.05,
    )

    def __init__(self):
        super().__init__()
        self._goal = None

    def _obs(self) -> GoalObservation:
        return GoalObservation(self._agent.copy(), self._agent.copy(), self._goal.copy())

    def reset(self, rng: np.random.Generator) -> GoalObservation:
        self._agent = np.array(self.START, dtype=FLOAT)
        self._goal = rng.uniform(0.0, 1.0, size=2)
        self._t = 0
        return self._obs()

    def step(self, action, rng: np.random.Generator):
        if self._agent is None:
            raise RuntimeError("reset() before step()")
        if self._t >= self.spec.episode_length:
            raise RuntimeError(f"episode exhausted after {self.spec.episode_length} steps")
        self._agent = self._clip_workspace(self._agent + self._displacement(action))
        obs = self._obs()
        reward = compute_reward(self.spec, obs.achieved_goal, obs.desired_goal)
        step_index = self._t
        self._t += 1
        return obs, reward, step_index


class PointPush(_PointBase):
    """Transport a passive object onto the goal.

    Contact model: using pre-step positions, if the agent is within
    CONTACT_RADIUS of the object, the object translates with the agent's
    displacement. The object never moves otherwise.

    A projection-style model (object receives only the displacement
    component along the agent-to-object line, pushes never pulls) leaves
    random policies moving the object a few hundredths at most, and the
    relabeled goals then never cover the test goals 0.2+ away; hindsight
    training collapses onto do-nothing episodes and never takes off at
    this task's episode budget. Carrying keeps object transport exactly
    as informative as the agent's own motion, which is what makes the
    task learnable at desk scale while staying sparse and contact-gated.
    The agent starts just inside the contact radius for the same reason:
    an approach phase starves early epochs of object-moving episodes.
    """

    AGENT_START = (0.45, 0.45)
    OBJECT_START = (0.5, 0.5)
    CONTACT_RADIUS = 0.08
    MIN_GOAL_OFFSET = 0.2

    spec = EnvSpec(
        name="point-push",
        observation_dim=4,
        achieved_goal_dim=2,
        action_kind="continuous",
        action_dim=2,
        episode_length=50,
        reward_convention="negative-indicator",
        distance_threshold=0.05,
    )

    def __init__(self):
        super().__init__()
        self._object = None
        self._goal = None

    def _obs(self) -> GoalObservation:
        return GoalObservation(
            np.concatenate([self._agent, self._object]),
            self._object.copy(),
            self._goal.copy(),
        )

    def reset(self, rng: np.random.Generator) -> GoalObservation:
        self._agent = np.array(self.AGENT_START, dtype=FLOAT)
        self._object = np.array(self.OBJECT_START, dtype=FLOAT)
        obj_start = np.array(self.OBJECT_START, dtype=FLOAT)
        while True:
            goal = rng.uniform(0.0, 1.0, size=2)
            if float(np.linalg.norm(goal - obj_start)) >= self.MIN_GOAL_OFFSET:
                break
        self._goal = goal
        self._t = 0
        return self._obs()

    def step(self, action, rng: np.random.Generator):
        if self._agent is None:
            raise RuntimeError("reset() before step()")
        if self._t >= self.spec.episode_length:
            raise RuntimeError(f"episode exhausted after {self.spec.episode_length} steps")
        d = self._displacement(action)
        gap = float(np.linalg.norm(self._object - self._agent))
        if gap <= self.CONTACT_RADIUS:
            self._object = self._clip_workspace(self._object + d)
        self._agent = self._clip_workspace(self._agent + d)
        obs = self._obs()
        reward = compute_reward(self.spec, obs.achieved_goal, obs.desired_goal)
        step_index = self._t
        self._t += 1
        return obs, reward, step_index


_REGISTRY = {
    "empty-room": EmptyRoom,
    "point-reach": PointReach,
    "point-push": PointPush,
}


def env_spec(name: str) -> EnvSpec:
    if name not in _REGISTRY:
        raise ValueError(f"unknown environment {name!r} (choose from {ENV_NAMES})")
    return _REGISTRY[name].spec


def make_env(name: str, evaluation: bool = False):
    """Instantiate an environment by its configuration name.

    ``evaluation=True`` disables the grid world's action noise; the
    point tasks have deterministic dynamics either way.
    """
    if name not in _REGISTRY:
        raise ValueError(f"unknown environment {name!r} (choose from {ENV_NAMES})")
    if name == "empty-room":
        return EmptyRoom(random_action_prob=0.0 if evaluation else 0.2)
    return _REGISTRY[name]()
