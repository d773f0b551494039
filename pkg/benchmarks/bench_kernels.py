"""Benchmark the compiled critic kernels against the numpy reference.

Times the three operations the training loop leans on (forward pass, fused
SGD step, gradient accumulation) at training-realistic sizes, plus one full
continuous-game training run per backend.

Usage: python benchmarks/bench_kernels.py [--batch 32] [--hidden 64]
"""

import argparse
import time

import numpy as np

from polargrad import _mlpref

try:
    from polargrad import _fastmlp
except ImportError:
    _fastmlp = None


def make_net(rng, input_dim, hidden):
    sizes = (input_dim, hidden, hidden, 1)
    Ws = [rng.standard_normal((a, b)) * 0.3 for a, b in zip(sizes[:-1], sizes[1:])]
    bs = [rng.standard_normal(b) * 0.3 for b in sizes[1:]]
    return Ws, bs


def time_op(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_kernels(backend, name, batch, hidden, repeats):
    rng = np.random.default_rng(0)
    Ws, bs = make_net(rng, 2, hidden)
    X = rng.uniform(-1, 1, (batch, 2))
    y = rng.standard_normal(batch)
    dy = rng.standard_normal(batch)
    _, h1, h2 = backend.forward_cached(X, Ws, bs)
    rows = {
        "forward": time_op(lambda: backend.forward(X, Ws, bs), repeats),
        "sgd_mse_step": time_op(lambda: backend.sgd_mse_step(X, y, Ws, bs, 1e-3), repeats),
        "param_grads": time_op(lambda: backend.param_grads(X, h1, h2, dy, Ws), repeats),
    }
    for op, dt in rows.items():
        print(f"  {name:7s} {op:13s} {dt * 1e6:9.2f} us/call")
    return rows


def bench_training_run(steps):
    import os
    import dataclasses
    from polargrad.envs import max_of_two_quadratics
    from polargrad.learner import default_train_config, run

    game = max_of_two_quadratics()
    cfg = dataclasses.replace(default_train_config(game, "mappg", seed=0),
                              total_steps=steps)
    t0 = time.perf_counter()
    run(cfg, game)
    return time.perf_counter() - t0


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=32)
    parser.add_argument("--hidden", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=2000)
    parser.add_argument("--train-steps", type=int, default=0,
                        help="also time a full continuous training run per backend")
    args = parser.parse_args()

    print(f"kernel micro-benchmarks (batch={args.batch}, hidden={args.hidden}):")
    ref = bench_kernels(_mlpref, "python", args.batch, args.hidden, args.repeats)
    if _fastmlp is None:
        print("  compiled backend not built; reference only")
    else:
        fast = bench_kernels(_fastmlp, "cython", args.batch, args.hidden, args.repeats)
        for op in ref:
            print(f"  speedup {op:13s} {ref[op] / fast[op]:9.2f}x")

    if args.train_steps:
        from polargrad import kernels

        dt = bench_training_run(args.train_steps)
        print(f"training run ({args.train_steps} steps, backend={kernels.BACKEND}): "
              f"{dt:.2f}s")


if __name__ == "__main__":
    main()
