"""Dense network machinery: fixed-architecture MLPs with analytic
gradients, flat parameter views, and the Adam optimizer.

Everything is float64. The multilayer perceptron is the only
architecture: rectified-linear hidden layers, linear output. Gradients
come from a hand-rolled backward pass (no autodiff graph) and are
checked against finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

FLOAT = np.float64


@dataclass(frozen=True)
class ParamLayout:
    """Maps named parameter segments to slices of one flat vector."""

    names: tuple
    shapes: tuple

    def __post_init__(self):
        sizes, offsets, off = [], [], 0
        for shape in self.shapes:
            n = 1
            for d in shape:
                n *= int(d)
            sizes.append(n)
            offsets.append(off)
            off += n
        object.__setattr__(self, "sizes", tuple(sizes))
        object.__setattr__(self, "offsets", tuple(offsets))
        object.__setattr__(self, "total_size", off)

    def flatten(self, arrays: list) -> np.ndarray:
        if len(arrays) != len(self.shapes):
            raise ValueError(
                f"layout has {len(self.shapes)} segments, got {len(arrays)} arrays"
            )
        for arr, shape, name in zip(arrays, self.shapes, self.names):
            if tuple(arr.shape) != tuple(shape):
                raise ValueError(f"segment {name}: expected shape {shape}, got {arr.shape}")
        return np.concatenate([np.asarray(a, dtype=FLOAT).ravel() for a in arrays])

    def unflatten(self, vec: np.ndarray) -> list:
        vec = np.asarray(vec, dtype=FLOAT)
        if vec.shape != (self.total_size,):
            raise ValueError(f"expected flat vector of length {self.total_size}, got {vec.shape}")
        out = []
        for off, sz, shape in zip(self.offsets, self.sizes, self.shapes):
            out.append(vec[off : off + sz].reshape(shape).copy())
        return out

    def segment_at(self, index: int) -> str:
        """Name of the segment containing flat index ``index``."""
        for name, off, sz in zip(self.names, self.offsets, self.sizes):
            if off <= index < off + sz:
                return name
        raise IndexError(index)

    @staticmethod
    def concat(prefix_a: str, a: "ParamLayout", prefix_b: str, b: "ParamLayout") -> "ParamLayout":
        names = tuple(f"{prefix_a}{n}" for n in a.names) + tuple(
            f"{prefix_b}{n}" for n in b.names
        )
        return ParamLayout(names=names, shapes=a.shapes + b.shapes)


def orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float = 1.0) -> np.ndarray:
    """Orthogonal weight init via QR of a Gaussian draw, seeded."""
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))  # fix the sign ambiguity so the draw is unique
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q[:rows, :cols], dtype=FLOAT)


class Mlp:
    """Multilayer perceptron with ReLU hidden layers and a linear output.

    ``layer_sizes`` runs input, hidden..., output. Weights are stored as
    (fan_in, fan_out) matrices so batches of row vectors multiply on the
    left.
    """

    def __init__(self, layer_sizes, weights, biases):
        layer_sizes = [int(s) for s in layer_sizes]
        if len(layer_sizes) < 2 or any(s <= 0 for s in layer_sizes):
            raise ValueError(f"bad layer sizes {layer_sizes}")
        if len(weights) != len(layer_sizes) - 1 or len(biases) != len(weights):
            raise ValueError("weights/biases do not match layer sizes")
        for i, (w, b) in enumerate(zip(weights, biases)):
            expect = (layer_sizes[i], layer_sizes[i + 1])
            if w.shape != expect or b.shape != (expect[1],):
                raise ValueError(f"layer {i}: expected {expect}, got {w.shape}/{b.shape}")
        self.layer_sizes = layer_sizes
        self.weights = [np.ascontiguousarray(w, dtype=FLOAT) for w in weights]
        self.biases = [np.ascontiguousarray(b, dtype=FLOAT) for b in biases]

    @classmethod
    def create(
        cls,
        layer_sizes,
        rng: np.random.Generator,
        hidden_gain: float = np.sqrt(2.0),
        final_gain: float = 1.0,
    ) -> "Mlp":
        """Seeded orthogonal init; biases start at zero.

        ``final_gain`` scales the output layer only (policy heads use a
        small gain so the initial action distribution stays near flat).
        """
        weights, biases = [], []
        n = len(layer_sizes) - 1
        for i in range(n):
            gain = final_gain if i == n - 1 else hidden_gain
            weights.append(orthogonal(rng, layer_sizes[i], layer_sizes[i + 1], gain))
            biases.append(np.zeros(layer_sizes[i + 1], dtype=FLOAT))
        return cls(layer_sizes, weights, biases)

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    def _as_batch(self, x) -> tuple:
        x = np.asarray(x, dtype=FLOAT)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_size:
            raise ValueError(
                f"input of shape {x.shape} does not match network input size {self.input_size}"
            )
        return np.ascontiguousarray(x), single

    def forward(self, x) -> np.ndarray:
        """Pure forward pass; accepts a single vector or a batch of rows."""
        xb, single = self._as_batch(x)
        out = _kernels.mlp_forward(self.weights, self.biases, xb)[-1]
        return out[0] if single else out

    def forward_cached(self, x) -> tuple:
        """Forward pass keeping per-layer activations for backward()."""
        xb, _ = self._as_batch(x)
        acts = _kernels.mlp_forward(self.weights, self.biases, xb)
        return acts[-1], acts

    def backward(self, acts: list, grad_out) -> tuple:
        """Gradient of sum(output * grad_out) w.r.t. parameters and input.

        ``acts`` comes from forward_cached on the same input. Returns
        (grad_weights, grad_biases, grad_input).
        """
        grad_out = np.asarray(grad_out, dtype=FLOAT)
        if grad_out.ndim == 1:
            grad_out = grad_out[None, :]
        if grad_out.shape != acts[-1].shape:
            raise ValueError(
                f"output gradient shape {grad_out.shape} does not match output {acts[-1].shape}"
            )
        return _kernels.mlp_backward(self.weights, acts, np.ascontiguousarray(grad_out))

    # -- flat parameter view -------------------------------------------------

    @property
    def layout(self) -> ParamLayout:
        if getattr(self, "_layout", None) is None:
            names, shapes = [], []
            for i, (w, b) in enumerate(zip(self.weights, self.biases)):
                names += [f"w{i}", f"b{i}"]
                shapes += [w.shape, b.shape]
            self._layout = ParamLayout(names=tuple(names), shapes=tuple(shapes))
        return self._layout

    def rehome(self, buf: np.ndarray, offset: int) -> int:
        """Rebind weights/biases to views of a flat buffer holding the
        same values, so in-place optimizer updates reach them directly."""
        for i in range(len(self.weights)):
            for attr, current in (("weights", self.weights[i]), ("biases", self.biases[i])):
                view = buf[offset : offset + current.size].reshape(current.shape)
                view[...] = current
                getattr(self, attr)[i] = view
                offset += current.size
        return offset

    @property
    def n_params(self) -> int:
        return self.layout.total_size

    def _interleave(self, ws, bs) -> list:
        out = []
        for w, b in zip(ws, bs):
            out += [w, b]
        return out

    def get_flat(self) -> np.ndarray:
        return self.layout.flatten(self._interleave(self.weights, self.biases))

    def set_flat(self, vec: np.ndarray) -> None:
        arrays = self.layout.unflatten(vec)
        for i in range(len(self.weights)):
            self.weights[i][...] = arrays[2 * i]
            self.biases[i][...] = arrays[2 * i + 1]

    def grads_flat(self, grad_w: list, grad_b: list) -> np.ndarray:
        return self.layout.flatten(self._interleave(grad_w, grad_b))


class AdamState:
    """Adam accumulators for one flat parameter vector."""

    def __init__(
        self,
        n_params: int,
        learning_rate: float = 3e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-5,
    ):
        if learning_rate <= 0 or epsilon <= 0:
            raise ValueError("learning_rate and epsilon must be positive")
        if not (0 < beta1 < 1 and 0 < beta2 < 1):
            raise ValueError("beta1/beta2 must lie in (0, 1)")
        self.step_count = 0
        self.m = np.zeros(n_params, dtype=FLOAT)
        self.v = np.zeros(n_params, dtype=FLOAT)
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)


def adam_step(
    state: AdamState,
    params: np.ndarray,
    grads: np.ndarray,
    layout: ParamLayout | None = None,
) -> np.ndarray:
    """Apply one Adam update in place; returns ``params`` for convenience.

    Non-finite gradient entries abort with the offending segment named
    when a layout is supplied.
    """
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError(
            f"parameter/gradient/accumulator lengths differ: "
            f"{params.shape} vs {grads.shape} vs {state.m.shape}"
        )
    if not np.all(np.isfinite(grads)):
        idx = int(np.flatnonzero(~np.isfinite(grads))[0])
        where = f" in segment '{layout.segment_at(idx)}'" if layout is not None else ""
        raise FloatingPointError(f"non-finite gradient at flat index {idx}{where}")
    state.step_count += 1
    _kernels.adam_update(
        params,
        np.ascontiguousarray(grads, dtype=FLOAT),
        state.m,
        state.v,
        state.step_count,
        state.learning_rate,
        state.beta1,
        state.beta2,
        state.epsilon,
    )
    return params
