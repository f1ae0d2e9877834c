"""Backend kernels against independent oracles, on every available backend."""

import numpy as np
import pytest

from esil._kernels import available_backends, get_backend

BACKENDS = available_backends()


@pytest.fixture(params=BACKENDS)
def backend(request):
    return get_backend(request.param)


def _random_net(rng, sizes):
    weights = [
        np.ascontiguousarray(rng.standard_normal((sizes[i], sizes[i + 1])))
        for i in range(len(sizes) - 1)
    ]
    biases = [rng.standard_normal(sizes[i + 1]) for i in range(len(sizes) - 1)]
    return weights, biases


def _oracle_forward(weights, biases, x):
    """Straight-line matrix arithmetic, loops only."""
    out = np.array(x, dtype=float)
    for layer, (w, b) in enumerate(zip(weights, biases)):
        nxt = np.zeros((out.shape[0], w.shape[1]))
        for i in range(out.shape[0]):
            for j in range(w.shape[1]):
                acc = b[j]
                for k in range(w.shape[0]):
                    acc += out[i, k] * w[k, j]
                if layer < len(weights) - 1 and acc < 0:
                    acc = 0.0
                nxt[i, j] = acc
        out = nxt
    return out


class TestForward:
    def test_matches_loop_oracle(self, backend):
        rng = np.random.default_rng(7)
        weights, biases = _random_net(rng, [2, 3, 1])
        x = np.ascontiguousarray(rng.standard_normal((4, 2)))
        got = backend.mlp_forward(weights, biases, x)[-1]
        np.testing.assert_allclose(got, _oracle_forward(weights, biases, x), rtol=1e-12)

    def test_zero_network_maps_to_zero(self, backend):
        sizes = [3, 4, 2]
        weights = [np.zeros((sizes[i], sizes[i + 1])) for i in range(2)]
        biases = [np.zeros(sizes[i + 1]) for i in range(2)]
        x = np.ascontiguousarray(np.random.default_rng(0).standard_normal((5, 3)))
        out = backend.mlp_forward(weights, biases, x)[-1]
        assert np.all(out == 0.0)

    def test_identity_single_layer(self, backend):
        weights = [np.array([[1.0]])]
        biases = [np.array([0.0])]
        out = backend.mlp_forward(weights, biases, np.array([[2.5]]))[-1]
        assert out[0, 0] == 2.5

    def test_activation_cache_shapes(self, backend):
        rng = np.random.default_rng(3)
        weights, biases = _random_net(rng, [4, 8, 8, 3])
        x = np.ascontiguousarray(rng.standard_normal((6, 4)))
        acts = backend.mlp_forward(weights, biases, x)
        assert [a.shape for a in acts] == [(6, 4), (6, 8), (6, 8), (6, 3)]
        assert all(np.all(a >= 0) for a in acts[1:-1])  # hidden activations rectified


class TestBackward:
    def test_zero_cotangent_gives_zero_grads(self, backend):
        rng = np.random.default_rng(5)
        weights, biases = _random_net(rng, [3, 5, 2])
        x = np.ascontiguousarray(rng.standard_normal((4, 3)))
        acts = backend.mlp_forward(weights, biases, x)
        gw, gb, gx = backend.mlp_backward(weights, acts, np.zeros((4, 2)))
        assert all(np.all(g == 0) for g in gw + gb)
        assert np.all(gx == 0)

    def test_linear_single_parameter(self, backend):
        weights = [np.array([[0.7]])]
        biases = [np.array([0.0])]
        x = np.array([[3.0]])
        acts = backend.mlp_forward(weights, biases, x)
        gw, gb, gx = backend.mlp_backward(weights, acts, np.array([[1.0]]))
        assert gw[0][0, 0] == 3.0  # d(w*x)/dw = x
        assert gb[0][0] == 1.0
        assert gx[0, 0] == 0.7

    def test_matches_finite_differences(self, backend):
        rng = np.random.default_rng(11)
        weights, biases = _random_net(rng, [4, 8, 3])
        x = np.ascontiguousarray(rng.standard_normal((5, 4)))
        cot = np.ascontiguousarray(rng.standard_normal((5, 3)))

        def loss(ws, bs):
            return float((_oracle_forward(ws, bs, x) * cot).sum())

        acts = backend.mlp_forward(weights, biases, x)
        gw, gb, _ = backend.mlp_backward(weights, acts, cot)
        step = 1e-5
        for layer in range(len(weights)):
            for idx in np.ndindex(weights[layer].shape):
                w_hi = [w.copy() for w in weights]
                w_lo = [w.copy() for w in weights]
                w_hi[layer][idx] += step
                w_lo[layer][idx] -= step
                numeric = (loss(w_hi, biases) - loss(w_lo, biases)) / (2 * step)
                assert abs(gw[layer][idx] - numeric) <= 1e-4 * max(abs(numeric), 1e-6)
            for j in range(len(biases[layer])):
                b_hi = [b.copy() for b in biases]
                b_lo = [b.copy() for b in biases]
                b_hi[layer][j] += step
                b_lo[layer][j] -= step
                numeric = (loss(weights, b_hi) - loss(weights, b_lo)) / (2 * step)
                assert abs(gb[layer][j] - numeric) <= 1e-4 * max(abs(numeric), 1e-6)


class TestAdam:
    def _scalar_adam(self, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-5, p0=0.0):
        """Independent scalar reference implementation."""
        p, m, v = p0, 0.0, 0.0
        trail = []
        for t, g in enumerate(grads, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            p -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
            trail.append(p)
        return trail

    def test_first_step_moves_by_learning_rate(self, backend):
        lr, eps = 3e-4, 1e-5
        p = np.zeros(1)
        m = np.zeros(1)
        v = np.zeros(1)
        backend.adam_update(p, np.ones(1), m, v, 1, lr, 0.9, 0.999, eps)
        # bias-corrected first step: -lr * 1 / (1 + eps)
        np.testing.assert_allclose(p[0], -lr / (1.0 + eps), rtol=1e-12)
        assert abs(p[0] + lr) < 1e-8

    def test_two_steps_match_scalar_reference(self, backend):
        p = np.zeros(1)
        m = np.zeros(1)
        v = np.zeros(1)
        backend.adam_update(p, np.array([0.5]), m, v, 1, 1e-3, 0.9, 0.999, 1e-5)
        backend.adam_update(p, np.array([0.5]), m, v, 2, 1e-3, 0.9, 0.999, 1e-5)
        expected = self._scalar_adam([0.5, 0.5], lr=1e-3)[-1]
        np.testing.assert_allclose(p[0], expected, rtol=1e-12)

    def test_vector_matches_scalar_per_component(self, backend):
        rng = np.random.default_rng(2)
        grads = rng.standard_normal((3, 4))
        p = np.zeros(4)
        m = np.zeros(4)
        v = np.zeros(4)
        for t in range(3):
            backend.adam_update(p, np.ascontiguousarray(grads[t]), m, v, t + 1, 1e-2, 0.9, 0.999, 1e-5)
        for j in range(4):
            expected = self._scalar_adam(grads[:, j], lr=1e-2)[-1]
            np.testing.assert_allclose(p[j], expected, rtol=1e-12)


class TestDiscountedReturns:
    def _oracle(self, rewards, gamma):
        """O(T^2) direct summation."""
        T = len(rewards)
        return np.array(
            [sum(gamma**l * rewards[t + l] for l in range(T - t)) for t in range(T)]
        )

    def test_matches_direct_summation(self, backend):
        rng = np.random.default_rng(9)
        for _ in range(20):
            T = int(rng.integers(1, 60))
            rewards = np.ascontiguousarray(rng.standard_normal(T))
            gamma = float(rng.uniform(0, 1))
            got = backend.discounted_returns(rewards, gamma)
            np.testing.assert_allclose(got, self._oracle(rewards, gamma), atol=1e-12)

    def test_frozen_example(self, backend):
        got = backend.discounted_returns(np.array([-1.0, -1.0, 0.0]), 0.98)
        np.testing.assert_allclose(got, [-1.98, -1.0, 0.0], atol=1e-15)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend not built")
class TestBackendEquivalence:
    def test_forward_backward_agree(self):
        nb = get_backend("numpy")
        cb = get_backend("compiled")
        rng = np.random.default_rng(21)
        for sizes in ([3, 7, 2], [5, 16, 16, 4], [2, 1]):
            weights, biases = _random_net(rng, sizes)
            x = np.ascontiguousarray(rng.standard_normal((9, sizes[0])))
            a1 = nb.mlp_forward(weights, biases, x)
            a2 = cb.mlp_forward(weights, biases, x)
            np.testing.assert_allclose(a1[-1], a2[-1], rtol=1e-10, atol=1e-12)
            cot = np.ascontiguousarray(rng.standard_normal(a1[-1].shape))
            g1 = nb.mlp_backward(weights, a1, cot)
            g2 = cb.mlp_backward(weights, a2, cot)
            for lhs, rhs in zip(g1[0] + g1[1], g2[0] + g2[1]):
                np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(g1[2], g2[2], rtol=1e-10, atol=1e-12)

    def test_adam_and_returns_agree(self):
        nb = get_backend("numpy")
        cb = get_backend("compiled")
        rng = np.random.default_rng(22)
        p1 = rng.standard_normal(50)
        p2 = p1.copy()
        m1 = np.zeros(50)
        v1 = np.zeros(50)
        m2 = np.zeros(50)
        v2 = np.zeros(50)
        for t in range(1, 6):
            g = np.ascontiguousarray(rng.standard_normal(50))
            nb.adam_update(p1, g, m1, v1, t, 3e-4, 0.9, 0.999, 1e-5)
            cb.adam_update(p2, g, m2, v2, t, 3e-4, 0.9, 0.999, 1e-5)
        np.testing.assert_allclose(p1, p2, rtol=1e-12)
        r = np.ascontiguousarray(rng.standard_normal(33))
        np.testing.assert_allclose(
            nb.discounted_returns(r, 0.98), cb.discounted_returns(r, 0.98), rtol=1e-12
        )
