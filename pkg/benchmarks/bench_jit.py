#!/usr/bin/env python3
"""Benchmark the hot kernels: numba-compiled vs the same source as pure NumPy.

The package's kernels carry @njit but fall back to their uncompiled Python
implementation when HDDRUL_DISABLE_JIT=1 (or numba is absent). This script
times both paths on realistic shapes and verifies they agree numerically.

Usage:
    python benchmarks/bench_jit.py [--repeats 5] [--batch 64] [--timesteps 30]
"""
import argparse
import os
import sys
import time

import numpy as np

from hddrul._jit import JIT_ENABLED, python_impl
from hddrul.forest import _grow_tree_arrays
from hddrul.neural import _lstm_backward_tbf, _lstm_forward_tbf


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_lstm(args, rng):
    hidden = 32
    features = 5
    X = np.ascontiguousarray(rng.normal(size=(args.timesteps, args.batch, features)))
    w_x = rng.normal(size=(features, 4 * hidden)) * 0.1
    w_h = rng.normal(size=(hidden, 4 * hidden)) * 0.1
    bias = rng.normal(size=4 * hidden) * 0.1
    dh = rng.normal(size=(args.batch, hidden))

    def fwd_bwd(forward, backward):
        def run():
            states = forward(X, w_x, w_h, bias)
            backward(X, w_x, w_h, *states, dh)
        return run

    jit = fwd_bwd(_lstm_forward_tbf, _lstm_backward_tbf)
    py = fwd_bwd(python_impl(_lstm_forward_tbf), python_impl(_lstm_backward_tbf))
    jit()  # trigger compilation before timing
    t_jit = timeit(jit, args.repeats)
    t_py = timeit(py, args.repeats)

    jit_states = _lstm_forward_tbf(X, w_x, w_h, bias)
    py_states = python_impl(_lstm_forward_tbf)(X, w_x, w_h, bias)
    drift = max(np.abs(a - b).max() for a, b in zip(jit_states, py_states))
    return ("lstm fwd+bwd (B=%d,T=%d)" % (args.batch, args.timesteps), t_jit, t_py, drift)


def bench_tree(args, rng):
    n, features = 2000, 5
    X = np.ascontiguousarray(rng.normal(size=(n, features)))
    y = np.ascontiguousarray(np.minimum(np.abs(rng.normal(size=n)) * 10, 30.0))

    jit = lambda: _grow_tree_arrays(X, y, 2)
    py = lambda: python_impl(_grow_tree_arrays)(X, y, 2)
    jit()
    t_jit = timeit(jit, args.repeats)
    t_py = timeit(py, max(1, args.repeats // 5))
    drift = max(np.abs(a.astype(float) - b.astype(float)).max()
                for a, b in zip(jit(), py()))
    return ("tree growth (n=%d,f=%d)" % (n, features), t_jit, t_py, drift)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--timesteps", type=int, default=30)
    args = parser.parse_args()

    if not JIT_ENABLED:
        flag = os.environ.get("HDDRUL_DISABLE_JIT", "")
        print(f"JIT disabled (HDDRUL_DISABLE_JIT={flag!r} or numba missing); "
              "nothing to compare — both paths are pure NumPy.")
        sys.exit(0)

    rng = np.random.default_rng(0)
    rows = [bench_lstm(args, rng), bench_tree(args, rng)]
    print("%-28s %12s %12s %10s %12s" % ("kernel", "jit (ms)", "numpy (ms)", "speedup", "max |diff|"))
    for name, t_jit, t_py, drift in rows:
        print("%-28s %12.3f %12.3f %9.1fx %12.2e"
              % (name, t_jit * 1e3, t_py * 1e3, t_py / t_jit, drift))


if __name__ == "__main__":
    main()
