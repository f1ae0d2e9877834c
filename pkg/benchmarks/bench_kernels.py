#!/usr/bin/env python3
"""Compare the compiled kernel backend against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeats 200]

Shapes mirror the training workload: batch-of-one forwards dominate
episode collection, larger batches dominate the optimization phase.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from esil._kernels import available_backends, get_backend


def _net(rng, sizes):
    weights = [
        np.ascontiguousarray(rng.standard_normal((sizes[i], sizes[i + 1])))
        for i in range(len(sizes) - 1)
    ]
    biases = [rng.standard_normal(sizes[i + 1]) for i in range(len(sizes) - 1)]
    return weights, biases


def _time(fn, repeats):
    fn()  # warm up
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeats)
    return best


def build_cases(repeats):
    rng = np.random.default_rng(0)
    sizes = [6, 256, 256, 256, 5]
    weights, biases = _net(rng, sizes)
    x1 = np.ascontiguousarray(rng.standard_normal((1, 6)))
    x160 = np.ascontiguousarray(rng.standard_normal((160, 6)))
    x2500 = np.ascontiguousarray(rng.standard_normal((2500, 6)))
    cot160 = np.ascontiguousarray(rng.standard_normal((160, 5)))
    cot2500 = np.ascontiguousarray(rng.standard_normal((2500, 5)))
    params = rng.standard_normal(200_000)
    grads = rng.standard_normal(200_000)
    rewards = rng.standard_normal(50)

    def forward(backend, x):
        return lambda: backend.mlp_forward(weights, biases, x)

    def forward_backward(backend, x, cot):
        def run():
            acts = backend.mlp_forward(weights, biases, x)
            backend.mlp_backward(weights, acts, cot)

        return run

    def adam(backend):
        p = params.copy()
        m = np.zeros_like(p)
        v = np.zeros_like(p)
        state = {"t": 0}

        def run():
            state["t"] += 1
            backend.adam_update(p, grads, m, v, state["t"], 3e-4, 0.9, 0.999, 1e-5)

        return run

    def returns(backend):
        return lambda: backend.discounted_returns(rewards, 0.98)

    return [
        ("forward batch=1 (rollout)", forward, (x1,), repeats * 20),
        ("forward+backward batch=160", forward_backward, (x160, cot160), repeats),
        ("forward+backward batch=2500", forward_backward, (x2500, cot2500), max(repeats // 10, 5)),
        ("adam update 200k params", adam, (), repeats),
        ("discounted returns T=50", returns, (), repeats * 20),
    ]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    backends = available_backends()
    if "compiled" not in backends:
        print("compiled backend not built; run `python setup.py build_ext --inplace` first")

    results = {}
    for name in backends:
        backend = get_backend(name)
        for label, factory, extra, reps in build_cases(args.repeats):
            fn = factory(backend, *extra)
            results[(label, name)] = _time(fn, reps)

    width = max(len(label) for label, *_ in build_cases(1)) + 2
    header = f"{'case':<{width}}" + "".join(f"{n:>14}" for n in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for label, *_ in build_cases(1):
        row = f"{label:<{width}}"
        times = [results[(label, n)] for n in backends]
        for t in times:
            row += f"{t * 1e6:>12.1f}us"
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.2f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
