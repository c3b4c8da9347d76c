"""Timing comparison between the active kernels and their plain-numpy twins.

The active set is whatever the GROWNET_BACKEND policy picked at import time
(compiled when numba is available, numpy otherwise); the *_numpy twins are
always the interpreter versions, so under the compiled backend the table
shows the JIT speedup and under the numpy backend both columns match.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --samples 50000 --layers 12
"""

import argparse
import time

import numpy as np

from grownet import kernels
from grownet.backend import backend_name
from grownet.linalg import make_rng


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def chain_case(rng, samples, layers):
    x = rng.uniform(-1.0, 1.0, size=samples)
    y = rng.standard_normal(samples)
    th = rng.normal(scale=0.4, size=(layers, 3))
    c = 0.1
    states = np.empty((layers + 1, samples))
    adjoints = np.empty_like(states)
    grads = np.empty((layers, 3))
    order = np.arange(samples, dtype=np.int64)
    return x, y, th, c, states, adjoints, grads, order


def bench_chain(rng, samples, layers, batch, repeats):
    x, y, th, c, states, adjoints, grads, order = chain_case(
        rng, samples, layers)
    rows = []

    def epoch(fn):
        def run():
            fn(x, y, order, th.copy(), np.zeros((layers, 3)),
               np.zeros((layers, 3)), 0, 1e-3, 0.9, 0.999, 1e-8, batch, c)
        return run

    cases = (
        ("states", lambda: kernels.rbf_states(x, th, c, states),
         lambda: kernels.rbf_states_numpy(x, th, c, states)),
        ("loss", lambda: kernels.rbf_loss(x, y, th, c),
         lambda: kernels.rbf_loss_numpy(x, y, th, c)),
        ("trace", lambda: kernels.rbf_trace(x, y, th, c, states, adjoints,
                                            grads),
         lambda: kernels.rbf_trace_numpy(x, y, th, c, states, adjoints,
                                         grads)),
        ("epoch", epoch(kernels.rbf_epoch), epoch(kernels.rbf_epoch_numpy)),
    )
    for name, active, plain in cases:
        rows.append((name, best_of(plain, repeats), best_of(active, repeats)))
    return rows


def bench_jacobi(rng, size, repeats):
    base = rng.standard_normal((size, size))
    a = base + base.T

    def run(fn):
        def call():
            fn(a.copy(), np.eye(size), 100, 1e-24)
        return call

    return [("jacobi %dx%d" % (size, size),
             best_of(run(kernels.jacobi_rotate_numpy), repeats),
             best_of(run(kernels.jacobi_rotate), repeats))]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--samples", type=int, default=20000)
    parser.add_argument("--layers", type=int, default=8)
    parser.add_argument("--batch", type=int, default=1000)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    kernels.warmup()
    rng = make_rng(args.seed)
    rows = bench_chain(rng, args.samples, args.layers, args.batch,
                       args.repeats)
    for size in (16, 64):
        rows.extend(bench_jacobi(rng, size, args.repeats))

    print("backend: %s" % backend_name())
    print("chain: %d samples, %d layers, batch %d; best of %d"
          % (args.samples, args.layers, args.batch, args.repeats))
    print("%-14s %12s %12s %9s" % ("kernel", "numpy (ms)", "active (ms)",
                                   "speedup"))
    for name, plain, active in rows:
        print("%-14s %12.3f %12.3f %8.1fx"
              % (name, plain * 1e3, active * 1e3, plain / active))


if __name__ == "__main__":
    main()
