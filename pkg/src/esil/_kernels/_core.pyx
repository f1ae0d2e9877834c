# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementation of the training hot paths.

Same contract as esil._kernels.numpy_backend. Matrix products go
through BLAS (dgemm) and bias/activation/Adam loops are fused in C,
which mostly pays off on the batch-of-one forward passes that dominate
episode collection.
"""

from libc.math cimport sqrt

import numpy as np

from scipy.linalg.cython_blas cimport dgemm

NAME = "compiled"


cdef void _matmul(
    double[:, ::1] a, bint trans_a,
    double[:, ::1] b, bint trans_b,
    double[:, ::1] c,
) noexcept nogil:
    # Row-major C = op(A) @ op(B) computed as the column-major product
    # C^T = op(B)^T op(A)^T, so operands swap and leading dimensions are
    # the row-major column counts.
    cdef int m_rows = a.shape[1] if trans_a else a.shape[0]
    cdef int k_dim = a.shape[0] if trans_a else a.shape[1]
    cdef int n_cols = b.shape[0] if trans_b else b.shape[1]
    cdef int lda = a.shape[1]
    cdef int ldb = b.shape[1]
    cdef int ldc = c.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef char tb = b'T' if trans_b else b'N'
    cdef char ta = b'T' if trans_a else b'N'
    dgemm(
        &tb, &ta, &n_cols, &m_rows, &k_dim,
        &one, &b[0, 0], &ldb, &a[0, 0], &lda,
        &zero, &c[0, 0], &ldc,
    )


cdef void _add_bias_relu(double[:, ::1] z, const double[::1] bias, bint relu) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double v
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            v = z[i, j] + bias[j]
            if relu and v < 0.0:
                v = 0.0
            z[i, j] = v


cdef void _relu_mask(double[:, ::1] grad, const double[:, ::1] activation) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(grad.shape[0]):
        for j in range(grad.shape[1]):
            if activation[i, j] <= 0.0:
                grad[i, j] = 0.0


cdef void _column_sums(const double[:, ::1] a, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j
    for j in range(out.shape[0]):
        out[j] = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            out[j] += a[i, j]


def mlp_forward(list weights, list biases, x):
    """See numpy_backend.mlp_forward."""
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t i
    acts = [x]
    a = x
    for i in range(n_layers):
        w = weights[i]
        z = np.empty((a.shape[0], w.shape[1]), dtype=np.float64)
        _matmul(a, False, w, False, z)
        _add_bias_relu(z, biases[i], i < n_layers - 1)
        acts.append(z)
        a = z
    return acts


def mlp_backward(list weights, list acts, grad_out):
    """See numpy_backend.mlp_backward."""
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t i
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    dz = grad_out
    for i in range(n_layers - 1, -1, -1):
        w = weights[i]
        a_prev = acts[i]
        gw = np.empty((w.shape[0], w.shape[1]), dtype=np.float64)
        _matmul(a_prev, True, dz, False, gw)
        gb = np.empty(w.shape[1], dtype=np.float64)
        _column_sums(dz, gb)
        grad_w[i] = gw
        grad_b[i] = gb
        da = np.empty((dz.shape[0], w.shape[0]), dtype=np.float64)
        _matmul(dz, False, w, True, da)
        if i > 0:
            _relu_mask(da, a_prev)
        dz = da
    return grad_w, grad_b, dz


def adam_update(
    double[::1] params,
    const double[::1] grads,
    double[::1] m,
    double[::1] v,
    long step,
    double lr,
    double beta1,
    double beta2,
    double eps,
):
    """See numpy_backend.adam_update."""
    cdef double c1 = 1.0, c2 = 1.0
    cdef long t
    for t in range(step):
        c1 *= beta1
        c2 *= beta2
    c1 = 1.0 - c1
    c2 = 1.0 - c2
    cdef Py_ssize_t i
    cdef double g
    with nogil:
        for i in range(params.shape[0]):
            g = grads[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            params[i] -= lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)


def discounted_returns(const double[::1] rewards, double gamma):
    """See numpy_backend.discounted_returns."""
    out = np.empty(rewards.shape[0], dtype=np.float64)
    cdef double[::1] view = out
    cdef double acc = 0.0
    cdef Py_ssize_t t
    with nogil:
        for t in range(rewards.shape[0] - 1, -1, -1):
            acc = rewards[t] + gamma * acc
            view[t] = acc
    return out
