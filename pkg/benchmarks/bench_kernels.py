#!/usr/bin/env python3
"""Time the flow solver's hot kernels: compiled extension vs numpy fallback.

Both implementations share one contract, so besides the timings the script
reports the worst output disagreement per kernel (expected: exactly zero).

    python3 benchmarks/bench_kernels.py [--size 256] [--iters 50] [--repeats 5]
"""

import argparse
import time

import numpy as np

from hhmon import _purekernels, backend, tvl1

try:
    from hhmon._accel import kernels as _compiled
except ImportError:
    _compiled = None


def texture(rng, h, w):
    img = rng.random((h, w), dtype=np.float32)
    for _ in range(4):
        acc = img.copy()
        for axis in (0, 1):
            for shift in (-1, 1):
                acc = acc + np.roll(img, shift, axis=axis)
        img = acc / 5.0
    img -= img.min()
    return img / img.max()


def best_of(fn, repeats):
    times = []
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_warp(mod, rng, size, repeats):
    img = texture(rng, size, size) * np.float32(255.0)
    u = rng.standard_normal((size, size)).astype(np.float32) * 2.0
    v = rng.standard_normal((size, size)).astype(np.float32) * 2.0
    return best_of(lambda: mod.warp_bilinear(img, u, v), repeats)


def bench_iterations(mod, rng, size, n_iters, repeats):
    I1wx = rng.standard_normal((size, size)).astype(np.float32)
    I1wy = rng.standard_normal((size, size)).astype(np.float32)
    grad = I1wx**2 + I1wy**2
    rho_c = rng.standard_normal((size, size)).astype(np.float32)

    times = []
    out = None
    for _ in range(repeats):
        # the kernel updates its six state fields in place: fresh copies each
        # run, allocated outside the timed region
        state = [np.zeros((size, size), dtype=np.float32) for _ in range(6)]
        t0 = time.perf_counter()
        out = mod.tvl1_iterations(I1wx, I1wy, rho_c, grad, *state,
                                  0.15, 0.3, 0.25, n_iters, 0.0)
        times.append(time.perf_counter() - t0)
    return min(times), np.stack(out[:2])


def bench_flow(mod, rng, size, repeats):
    img0 = texture(rng, size, size)
    img1 = np.roll(img0, 1, axis=1)
    saved = (backend.warp_bilinear, backend.tvl1_iterations)
    backend.warp_bilinear = mod.warp_bilinear
    backend.tvl1_iterations = mod.tvl1_iterations
    try:
        t, res = best_of(lambda: tvl1.tvl1_flow(img0, img1), repeats)
    finally:
        backend.warp_bilinear, backend.tvl1_iterations = saved
    return t, res.flow


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=256, help="kernel grid side")
    ap.add_argument("--flow-size", type=int, default=128,
                    help="image side for the full solver")
    ap.add_argument("--iters", type=int, default=50,
                    help="fixed-point iterations per tvl1_iterations call")
    ap.add_argument("--repeats", type=int, default=5, help="take the best of N")
    args = ap.parse_args()

    rows = [
        (f"warp_bilinear {args.size}x{args.size}",
         lambda mod: bench_warp(mod, np.random.default_rng(0), args.size, args.repeats)),
        (f"tvl1_iterations x{args.iters} {args.size}x{args.size}",
         lambda mod: bench_iterations(mod, np.random.default_rng(1), args.size,
                                      args.iters, args.repeats)),
        (f"tvl1_flow {args.flow_size}x{args.flow_size}",
         lambda mod: bench_flow(mod, np.random.default_rng(2), args.flow_size,
                                args.repeats)),
    ]

    print(f"active backend: {backend.BACKEND}"
          + ("" if _compiled is not None else " (compiled extension not built)"))
    print(f"{'kernel':<36} {'pure':>10} {'compiled':>10} {'speedup':>8} {'max|diff|':>10}")
    for name, run in rows:
        t_pure, out_pure = run(_purekernels)
        if _compiled is None:
            print(f"{name:<36} {t_pure * 1e3:>8.2f}ms {'-':>10} {'-':>8} {'-':>10}")
            continue
        t_comp, out_comp = run(_compiled)
        diff = float(np.abs(np.asarray(out_pure) - np.asarray(out_comp)).max())
        print(f"{name:<36} {t_pure * 1e3:>8.2f}ms {t_comp * 1e3:>8.2f}ms "
              f"{t_pure / t_comp:>7.1f}x {diff:>10.1e}")


if __name__ == "__main__":
    main()
