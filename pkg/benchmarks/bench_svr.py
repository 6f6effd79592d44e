#!/usr/bin/env python3
"""Compare the compiled and pure-numpy SVR backends.

Workloads:
  band    one finest-scale oriented band of a noisy 256x256 image
          (256 patch problems, n = 256, shared kernel)
  single  a batch of independent small problems solved one at a time

Prints wall time per backend, the speedup and the largest difference in
the dual coefficients.

Usage: python benchmarks/bench_svr.py [--repeat 3] [--image data/lena256.pgm]
"""

import argparse
import time

import numpy as np

from svrdenoise import svr
from svrdenoise.imagio import load_image
from svrdenoise.kern import KernelSpec, kernel_matrix, patch_kernel
from svrdenoise.noisegen import Gaussian, apply_noise
from svrdenoise.xform import SteerableSpec, noise_gain, steerable_forward


def band_workload(path, tau=1.5, var=400.0):
    img = load_image(path)
    noisy, _ = apply_noise(img, Gaussian(var, seed=1))
    spec = SteerableSpec(image_dims=img.shape)
    band = steerable_forward(noisy, spec).bands[(1, 0)]
    Y = band.reshape(16, 16, 16, 16).transpose(0, 2, 1, 3).reshape(256, 256).copy()
    eps = tau * np.sqrt(var) * noise_gain(spec)[(1, 0)]
    K = np.array(patch_kernel((16, 16), KernelSpec().for_band(0.0)))
    return K, Y, eps, 1e4


def timed(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--image", default="data/lena256.pgm")
    ap.add_argument("--tol", type=float, default=1e-3)
    args = ap.parse_args(argv)

    backends = svr.available_backends()
    print(f"backends available: {', '.join(backends)} (default: {svr.BACKEND})")

    K, Y, eps, c = band_workload(args.image)
    res = {}
    for b in backends:
        t, (A, sweeps, viol) = timed(lambda: svr.solve_batch(K, Y, eps, c, args.tol, backend=b), args.repeat)
        res[b] = (t, A)
        print(f"band    {b:7s} {t * 1e3:9.1f} ms  mean sweeps {sweeps.mean():.1f}  max KKT {viol.max():.2e}")
    if len(res) == 2:
        tc, Ac = res["cython"]
        tp, Ap = res["python"]
        print(f"band    speedup {tp / tc:.1f}x  max |alpha diff| {np.abs(Ac - Ap).max():.2e}")

    rng = np.random.default_rng(0)
    probs = []
    for k in range(200):
        n = [8, 32, 64][k % 3]
        pos = rng.choice(100, size=n, replace=False)
        P = np.column_stack([pos % 10, pos // 10])
        Kr = kernel_matrix(P, KernelSpec(3.0, 1.5, rng.uniform(0, np.pi)))
        probs.append(svr.SvrProblem(Kr, rng.normal(0, 10, n), rng.uniform(0, 3, n), 50.0))
    single = {}
    for b in backends:
        t, sols = timed(lambda: [svr.solve(p, 1e-6, backend=b) for p in probs], args.repeat)
        single[b] = (t, sols)
        print(f"single  {b:7s} {t * 1e3:9.1f} ms  ({len(probs)} problems, n in 8/32/64)")
    if len(single) == 2:
        d = max(np.abs(a.alpha - b.alpha).max() for a, b in zip(single["cython"][1], single["python"][1]))
        print(f"single  speedup {single['python'][0] / single['cython'][0]:.1f}x  max |alpha diff| {d:.2e}")


if __name__ == "__main__":
    main()
