"""Action distributions for the two policy heads.

``Categorical`` covers discrete action sets (softmax over logits),
``DiagGaussian`` covers continuous ones (independent normal per
dimension, state-independent learnable log standard deviation). Both
work on a single parameter vector or a batch of rows, and both expose
the analytic log-probability gradients the policy losses chain through.
"""

from __future__ import annotations

import numpy as np

FLOAT = np.float64
LOG_2PI = float(np.log(2.0 * np.pi))


def _rows(x) -> tuple:
    x = np.asarray(x, dtype=FLOAT)
    single = x.ndim == 1
    return (x[None, :] if single else x), single


class Categorical:
    """Softmax distribution over a fixed number of actions.

    Log-probabilities are computed with max-subtraction so logits with
    magnitude up to ~1e300 stay finite.
    """

    kind = "categorical"

    def __init__(self, logits):
        self.logits, self._single = _rows(logits)
        if self.logits.shape[1] < 1:
            raise ValueError("need at least one action")
        self._lp = None

    @property
    def n_actions(self) -> int:
        return self.logits.shape[1]

    def _log_probs(self) -> np.ndarray:
        if self._lp is None:
            z = self.logits - self.logits.max(axis=1, keepdims=True)
            self._lp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return self._lp

    def probs(self) -> np.ndarray:
        p = np.exp(self._log_probs())
        return p[0] if self._single else p

    def _actions(self, actions) -> np.ndarray:
        a = np.atleast_1d(np.asarray(actions))
        if not np.issubdtype(a.dtype, np.integer):
            if not np.all(a == np.floor(a)):
                raise ValueError("categorical actions must be integer indices")
            a = a.astype(np.int64)
        if a.shape != (self.logits.shape[0],):
            raise ValueError(f"expected {self.logits.shape[0]} action indices, got {a.shape}")
        if np.any(a < 0) or np.any(a >= self.n_actions):
            bad = a[(a < 0) | (a >= self.n_actions)][0]
            raise ValueError(f"action index {bad} out of range [0, {self.n_actions})")
        return a

    def log_prob(self, actions):
        a = self._actions(actions)
        lp = self._log_probs()[np.arange(len(a)), a]
        return float(lp[0]) if self._single else lp

    def grad_log_prob(self, actions) -> np.ndarray:
        """d log p(a) / d logits, one row per sample: onehot(a) - softmax."""
        a = self._actions(actions)
        g = -np.exp(self._log_probs())
        g[np.arange(len(a)), a] += 1.0
        return g[0] if self._single else g

    def sample(self, rng: np.random.Generator):
        """Inverse-CDF draw; deterministic given the generator state."""
        cdf = np.cumsum(np.exp(self._log_probs()), axis=1)
        u = rng.random(self.logits.shape[0])
        idx = np.minimum(
            (u[:, None] > cdf).sum(axis=1), self.n_actions - 1
        ).astype(np.int64)
        return int(idx[0]) if self._single else idx

    def mode(self):
        """Highest-probability action; ties break to the lowest index."""
        idx = np.argmax(self.logits, axis=1)
        return int(idx[0]) if self._single else idx

    def entropy(self):
        lp = self._log_probs()
        h = -(np.exp(lp) * lp).sum(axis=1)
        return float(h[0]) if self._single else h

    def grad_entropy(self) -> np.ndarray:
        """dH / d logits = -p * (log p + H), rowwise."""
        lp = self._log_probs()
        p = np.exp(lp)
        h = -(p * lp).sum(axis=1, keepdims=True)
        g = -p * (lp + h)
        return g[0] if self._single else g


class DiagGaussian:
    """Independent normal per action dimension.

    ``log_std`` is shared across the batch (a learnable parameter vector
    rather than a network output).
    """

    kind = "diagonal-gaussian"

    def __init__(self, mean, log_std):
        self.mean, self._single = _rows(mean)
        self.log_std = np.asarray(log_std, dtype=FLOAT)
        if self.log_std.shape != (self.mean.shape[1],):
            raise ValueError(
                f"log_std shape {self.log_std.shape} does not match action dim {self.mean.shape[1]}"
            )
        self.std = np.exp(self.log_std)
        if not np.all(self.std > 0):
            raise ValueError("standard deviations must be strictly positive")

    @property
    def dim(self) -> int:
        return self.mean.shape[1]

    def _actions(self, actions) -> np.ndarray:
        a, single = _rows(actions)
        if a.shape != self.mean.shape:
            raise ValueError(f"action shape {a.shape} does not match mean {self.mean.shape}")
        if single != self._single:
            raise ValueError("action batching does not match distribution batching")
        return a

    def log_prob(self, actions):
        a = self._actions(actions)
        z = (a - self.mean) / self.std
        lp = -0.5 * (z * z).sum(axis=1) - self.log_std.sum() - 0.5 * self.dim * LOG_2PI
        return float(lp[0]) if self._single else lp

    def grad_log_prob(self, actions) -> tuple:
        """Returns (d logp / d mean, d logp / d log_std), both per sample."""
        a = self._actions(actions)
        z = (a - self.mean) / self.std
        d_mean = z / self.std
        d_log_std = z * z - 1.0
        if self._single:
            return d_mean[0], d_log_std[0]
        return d_mean, d_log_std

    def sample(self, rng: np.random.Generator):
        eps = rng.standard_normal(self.mean.shape)
        s = self.mean + self.std * eps
        return s[0] if self._single else s

    def mode(self):
        return self.mean[0].copy() if self._single else self.mean.copy()

    def entropy(self):
        h = float(self.log_std.sum() + 0.5 * self.dim * (1.0 + LOG_2PI))
        return h if self._single else np.full(self.mean.shape[0], h)

    def grad_entropy_log_std(self) -> np.ndarray:
        return np.ones_like(self.log_std)
