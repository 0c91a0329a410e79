"""Benchmark the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Covers the three hot paths: the seeded gaussian stream, the attention
forward pass, and the backward pass, at desk-experiment sizes plus one
larger shape.  Also times a full training epoch on the planted corpus
under whichever backend is active for attncomp.training.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from attncomp._kernels import _pure

try:
    from attncomp._kernels import _core
except ImportError:
    _core = None


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_case(name, make_args, pure_fn, core_fn, repeats):
    args = make_args()
    t_pure = best_of(lambda: pure_fn(*args), repeats)
    row = f"{name:<42} pure {t_pure * 1e3:9.3f} ms"
    if core_fn is not None:
        t_core = best_of(lambda: core_fn(*args), repeats)
        row += f"   compiled {t_core * 1e3:9.3f} ms   speedup {t_pure / t_core:6.2f}x"
    print(row)


def forward_args(m, n, h, d_model, d_a, seed=0):
    rng = np.random.default_rng(seed)
    return (
        rng.normal(size=(m, d_model)),
        rng.normal(size=(n, d_model)),
        rng.normal(size=(h, d_model, d_a)) * 0.3,
        rng.normal(size=(h, d_model, d_a)) * 0.3,
    )


def backward_args(m, n, h, d_model, d_a, seed=0):
    x_q, x_c, w_q, w_k = forward_args(m, n, h, d_model, d_a, seed)
    _, probs = _pure.attention_forward(x_q, x_c, w_q, w_k)
    col = np.random.default_rng(seed + 1).normal(size=n)
    return x_q, x_c, w_q, w_k, probs, col


def bench_training_epoch():
    from attncomp import KERNEL_BACKEND
    from attncomp.synthetic import make_planted_instances
    from attncomp.training import TrainConfig, TrainingInstance, train

    pairs = make_planted_instances(100, 34, seed=3)
    dataset = [TrainingInstance(bundle=b, labels=l) for b, l in pairs]
    t0 = time.perf_counter()
    train(dataset, TrainConfig(epochs=1, seed=3))
    elapsed = time.perf_counter() - t0
    print(f"\ntraining epoch (134 instances, active backend = {KERNEL_BACKEND}): "
          f"{elapsed * 1e3:.0f} ms")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    repeats = args.repeats

    if _core is None:
        print("compiled kernels not built; showing pure-backend timings only\n")

    core = _core
    print("== seeded gaussian stream ==")
    bench_case(
        "gaussians n=100k", lambda: (42, 1, 100_000),
        _pure.pcg_gaussians, core.pcg_gaussians if core else None, repeats,
    )
    bench_case(
        "raw32 n=1M", lambda: (42, 1, 1_000_000),
        _pure.pcg_raw32, core.pcg_raw32 if core else None, repeats,
    )

    print("\n== checksum ==")
    payload = bytes(range(256)) * 4096  # 1 MiB
    bench_case(
        "fnv1a64 1MiB", lambda: (payload,),
        _pure.fnv1a64, core.fnv1a64 if core else None, repeats,
    )

    print("\n== attention forward ==")
    for shape in ((6, 72, 16, 32, 2), (3, 8, 2, 8, 2), (8, 512, 16, 64, 4)):
        m, n, h, dm, da = shape
        bench_case(
            f"forward m={m} n={n} H={h} d_model={dm} d_a={da}",
            lambda s=shape: forward_args(*s),
            _pure.attention_forward, core.attention_forward if core else None, repeats,
        )

    print("\n== attention backward ==")
    for shape in ((6, 72, 16, 32, 2), (8, 512, 16, 64, 4)):
        m, n, h, dm, da = shape
        bench_case(
            f"backward m={m} n={n} H={h} d_model={dm} d_a={da}",
            lambda s=shape: backward_args(*s),
            _pure.attention_backward, core.attention_backward if core else None, repeats,
        )

    bench_training_epoch()


if __name__ == "__main__":
    main()
