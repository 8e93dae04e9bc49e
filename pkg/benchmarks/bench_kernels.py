#!/usr/bin/env python3
"""Benchmark the numba-compiled kernels against the pure-numpy fallback.

Times the LSTM forward/backward recurrences at the production sizes (the
discriminator and the widest generator layer), one full training step, and
one latent-inversion objective step, then prints a table with speedups.
Also cross-checks that the two lanes agree numerically.

Usage: python benchmarks/bench_kernels.py [--iters N] [--chunk B]
"""

import argparse
import time

import numpy as np

from mguard import backend, detection, model, nn, training
from mguard.rng import Rng


def timeit(fn, iters):
    fn()  # warm up (and JIT-compile on the numba lane)
    t0 = time.perf_counter()
    for _ in range(iters):
        fn()
    return (time.perf_counter() - t0) / iters


def build_cases(chunk):
    rng = Rng(2024)
    g = model.init_generator(rng.spawn(1))
    d = model.init_discriminator(rng.spawn(2))
    cases = {}

    disc_layer = nn.init_lstm(rng.spawn(3), 1, 100)
    x_disc = rng.spawn(4).normal(0, 0.3, (60, 32, 1))
    cases["lstm fwd  (D: T60 B32 H100)"] = lambda: nn.lstm_forward_batch(disc_layer, x_disc)

    gen_layer = nn.init_lstm(rng.spawn(5), 64, 128)
    x_gen = rng.spawn(6).normal(0, 0.3, (60, 16, 64))
    cases["lstm fwd  (G3: T60 B16 H128)"] = lambda: nn.lstm_forward_batch(gen_layer, x_gen)

    _, cache_d = nn.lstm_forward_batch(disc_layer, x_disc)
    gseq_d = rng.spawn(7).normal(0, 1, (60, 32, 100))
    cases["lstm bptt (D: T60 B32 H100)"] = lambda: nn.lstm_backward(cache_d, gseq_d)

    _, cache_g = nn.lstm_forward_batch(gen_layer, x_gen)
    gseq_g = rng.spawn(8).normal(0, 1, (60, 16, 128))
    cases["lstm bptt (G3: T60 B16 H128)"] = lambda: nn.lstm_backward(cache_g, gseq_g)

    real = rng.spawn(9).normal(0, 0.3, (16, 60))
    opt_g = nn.Adam(model.generator_params(g))
    opt_d = nn.Adam(model.discriminator_params(d))
    step_rng = rng.spawn(10)
    cases["train step (16 real + 16 fake)"] = lambda: training.train_step(
        g, d, real, step_rng, opt_g, opt_d
    )

    X = rng.spawn(11).normal(0, 0.3, (chunk, 60)).astype(np.float32)
    _, feat_x = model.discriminate_batch(d, X)
    z = rng.spawn(12).normal(0, 0.1, (chunk, 100))
    cases[f"inversion step (chunk {chunk})"] = lambda: detection._objective_and_grad(
        g, d, X, feat_x, z, 0.1
    )
    return cases, (g, d, X, z)


def check_lanes_agree(g, d, X, z):
    results = {}
    for lane in ("numpy", "numba"):
        backend.use(lane)
        y = model.generate_batch(g, z)
        p, feat = model.discriminate_batch(d, X)
        results[lane] = (y, p, feat)
    for a, b in zip(results["numpy"], results["numba"]):
        if not np.allclose(a, b, rtol=1e-4, atol=1e-5):
            return False
    return True


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--iters", type=int, default=10, help="timed iterations per case")
    parser.add_argument("--chunk", type=int, default=64, help="inversion chunk size")
    args = parser.parse_args()

    if not backend.HAVE_NUMBA:
        print("numba is not installed; only the numpy lane is available")
        return

    cases, handles = build_cases(args.chunk)
    times = {}
    for lane in ("numpy", "numba"):
        backend.use(lane)
        times[lane] = {name: timeit(fn, args.iters) for name, fn in cases.items()}

    width = max(map(len, cases))
    print(f"{'case':<{width}}  {'numpy':>10}  {'numba':>10}  {'numba/numpy':>11}")
    for name in cases:
        t_np = times["numpy"][name] * 1000
        t_nb = times["numba"][name] * 1000
        print(f"{name:<{width}}  {t_np:>8.2f}ms  {t_nb:>8.2f}ms  {t_nb / t_np:>10.2f}x")

    agree = check_lanes_agree(*handles)
    print(f"\nlane outputs agree: {agree}")
    backend.use("numpy")


if __name__ == "__main__":
    main()
