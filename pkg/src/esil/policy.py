"""Actor/critic bundles over the MLP core, plus checkpoint files.

The actor maps concat(observation, desired_goal) to distribution
parameters: logits for discrete actions, means for continuous ones (the
per-dimension log standard deviation is a separate learnable vector,
initialized to zero). The critic maps the same input to a scalar value.

Checkpoint byte layout (little-endian throughout)::

    offset  size  field
    0       5     magic b"ESIL1"
    5       1     distribution kind: 0 categorical, 1 diagonal-gaussian
    6       4     uint32 L = number of actor layer sizes
    10      4*L   uint32 layer sizes (input, hidden..., output)
    ...     4     uint32 S = number of log-std parameters (0 when categorical)
    ...     8*S   float64 log-std values
    ...     8*P   float64 flat actor parameters (w0, b0, w1, b1, ...)

P is determined by the layer sizes; any size mismatch or trailing bytes
fail the load.
"""

from __future__ import annotations

import struct

import numpy as np

from .distributions import Categorical, DiagGaussian
from .nn import FLOAT, Mlp, ParamLayout

CHECKPOINT_MAGIC = b"ESIL1"
_KIND_CODES = {"categorical": 0, "diagonal-gaussian": 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


class CheckpointError(Exception):
    """Raised when a checkpoint file cannot be read back."""


def policy_input(observation, desired_goal) -> np.ndarray:
    """Network input convention: observation and goal concatenated."""
    return np.concatenate(
        [np.asarray(observation, dtype=FLOAT), np.asarray(desired_goal, dtype=FLOAT)]
    )


class Policy:
    """Goal-conditioned actor."""

    def __init__(self, kind: str, net: Mlp, log_std: np.ndarray | None = None):
        if kind not in _KIND_CODES:
            raise ValueError(f"unknown distribution kind {kind!r}")
        if kind == "diagonal-gaussian":
            if log_std is None:
                log_std = np.zeros(net.output_size, dtype=FLOAT)
            if log_std.shape != (net.output_size,):
                raise ValueError("log_std length must equal the action dimension")
        elif log_std is not None:
            raise ValueError("categorical policies carry no log_std")
        self.kind = kind
        self.net = net
        self.log_std = None if log_std is None else np.asarray(log_std, dtype=FLOAT)

    @classmethod
    def create(cls, kind, input_dim, action_dim, hidden_sizes, rng) -> "Policy":
        net = Mlp.create(
            [input_dim, *hidden_sizes, action_dim], rng, final_gain=0.01
        )
        return cls(kind, net)

    def distribution(self, x):
        out = self.net.forward(x)
        if self.kind == "categorical":
            return Categorical(out)
        return DiagGaussian(out, self.log_std)

    def distribution_cached(self, x):
        """Distribution plus the activation cache needed for backward."""
        out, acts = self.net.forward_cached(x)
        if self.kind == "categorical":
            return Categorical(out), acts
        return DiagGaussian(out, self.log_std), acts

    def action_and_log_prob(self, x, rng):
        dist = self.distribution(x)
        a = dist.sample(rng)
        return a, dist.log_prob(a)

    def greedy_action(self, x):
        return self.distribution(x).mode()

    @property
    def layout(self) -> ParamLayout:
        base = self.net.layout
        if self.log_std is None:
            return base
        return ParamLayout(
            names=base.names + ("log_std",), shapes=base.shapes + ((self.log_std.size,),)
        )

    def get_flat(self) -> np.ndarray:
        flat = self.net.get_flat()
        return flat if self.log_std is None else np.concatenate([flat, self.log_std])

    def set_flat(self, vec) -> None:
        n = self.net.n_params
        self.net.set_flat(vec[:n])
        if self.log_std is not None:
            self.log_std[...] = vec[n:]

    def rehome(self, buf: np.ndarray, offset: int) -> int:
        offset = self.net.rehome(buf, offset)
        if self.log_std is not None:
            view = buf[offset : offset + self.log_std.size]
            view[...] = self.log_std
            self.log_std = view
            offset += view.size
        return offset


class Critic:
    """Goal-conditioned state-value estimator."""

    def __init__(self, net: Mlp):
        if net.output_size != 1:
            raise ValueError("critic nets have a single output")
        self.net = net

    @classmethod
    def create(cls, input_dim, hidden_sizes, rng) -> "Critic":
        return cls(Mlp.create([input_dim, *hidden_sizes, 1], rng, final_gain=1.0))

    def value(self, x):
        out = self.net.forward(x)
        return float(out[0]) if out.ndim == 1 else out[:, 0]


class Agent:
    """Actor + critic behind one flat parameter vector for the optimizer.

    The networks' weight arrays are views into ``params``, so in-place
    optimizer updates on the flat vector are immediately visible to
    forward passes.
    """

    def __init__(self, policy: Policy, critic: Critic):
        self.policy = policy
        self.critic = critic
        self.layout = ParamLayout.concat("actor.", policy.layout, "critic.", critic.net.layout)
        self.params = np.empty(self.layout.total_size, dtype=FLOAT)
        offset = policy.rehome(self.params, 0)
        critic.net.rehome(self.params, offset)

    @classmethod
    def create(cls, kind, input_dim, action_dim, hidden_sizes, rng) -> "Agent":
        policy = Policy.create(kind, input_dim, action_dim, hidden_sizes, rng)
        critic = Critic.create(input_dim, hidden_sizes, rng)
        return cls(policy, critic)

    @property
    def n_params(self) -> int:
        return self.layout.total_size

    @property
    def n_policy_params(self) -> int:
        return self.policy.layout.total_size

    def get_flat(self) -> np.ndarray:
        return self.params.copy()

    def set_flat(self, vec) -> None:
        self.params[...] = vec

    def assemble_grad(
        self,
        actor_flat: np.ndarray | None = None,
        critic_flat: np.ndarray | None = None,
    ) -> np.ndarray:
        """Build a full-agent flat gradient from per-network pieces."""
        g = np.zeros(self.n_params, dtype=FLOAT)
        n = self.n_policy_params
        if actor_flat is not None:
            g[:n] = actor_flat
        if critic_flat is not None:
            g[n:] = critic_flat
        return g


# -- checkpoint I/O ----------------------------------------------------------


def save_checkpoint(path, policy: Policy) -> None:
    sizes = policy.net.layer_sizes
    log_std = policy.log_std if policy.log_std is not None else np.zeros(0, dtype=FLOAT)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<B", _KIND_CODES[policy.kind]))
        fh.write(struct.pack("<I", len(sizes)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        fh.write(struct.pack("<I", log_std.size))
        fh.write(np.ascontiguousarray(log_std, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(policy.net.get_flat(), dtype="<f8").tobytes())


def load_checkpoint(path) -> Policy:
    with open(path, "rb") as fh:
        blob = fh.read()

    def take(n, what):
        nonlocal off
        if off + n > len(blob):
            raise CheckpointError(f"{path}: truncated while reading {what}")
        piece = blob[off : off + n]
        off += n
        return piece

    off = 0
    if take(5, "magic") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic (not an ESIL1 checkpoint)")
    kind_code = struct.unpack("<B", take(1, "kind"))[0]
    if kind_code not in _KIND_NAMES:
        raise CheckpointError(f"{path}: unknown distribution kind code {kind_code}")
    kind = _KIND_NAMES[kind_code]
    (n_sizes,) = struct.unpack("<I", take(4, "layer count"))
    if n_sizes < 2:
        raise CheckpointError(f"{path}: needs at least input and output sizes")
    sizes = list(struct.unpack(f"<{n_sizes}I", take(4 * n_sizes, "layer sizes")))
    (n_std,) = struct.unpack("<I", take(4, "log-std count"))
    expected_std = sizes[-1] if kind == "diagonal-gaussian" else 0
    if n_std != expected_std:
        raise CheckpointError(f"{path}: expected {expected_std} log-std values, found {n_std}")
    log_std = np.frombuffer(take(8 * n_std, "log-std values"), dtype="<f8").astype(FLOAT)

    net = Mlp(
        sizes,
        [np.zeros((sizes[i], sizes[i + 1]), dtype=FLOAT) for i in range(n_sizes - 1)],
        [np.zeros(sizes[i + 1], dtype=FLOAT) for i in range(n_sizes - 1)],
    )
    flat = np.frombuffer(take(8 * net.n_params, "parameters"), dtype="<f8").astype(FLOAT)
    if off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - off} trailing bytes")
    net.set_flat(flat)
    return Policy(kind, net, log_std if kind == "diagonal-gaussian" else None)
