"""Time the compiled kernels against the NumPy fallback on training-sized inputs.

    python benchmarks/bench_kernels.py [--repeat 20]
"""

import argparse
import timeit

import numpy as np

from utda import kernels


def cases(rng):
    z = rng.standard_normal((128, 784))
    beta = np.full(784, 0.1)
    v = rng.standard_normal((128, 1700))
    L = np.full(128, 10)
    A = rng.standard_normal((300, 400))
    x = np.zeros((32, 400))
    for row in x:
        row[rng.choice(400, 8, replace=False)] = rng.choice([-1.0, 1.0], 8)
    u = x @ A.T
    y = u ** 2 + 0.01 * rng.standard_normal(u.shape)
    S = kernels.topl_support(np.abs(x) + 1e-3 * rng.random(x.shape), np.full(32, 8))
    return {
        "soft_threshold 128x784": lambda b: kernels.soft_threshold(z, beta, backend=b),
        "topl_support 128x1700 L=10": lambda b: kernels.topl_support(v, L, backend=b),
        "pr_newton 32x(300x400) L=8": lambda b: kernels.pr_newton(A, u, y, S, backend=b),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)} (default {kernels.BACKEND})")
    print(f"{'kernel':30s}" + "".join(f"{b + ' ms':>12s}" for b in backends) + f"{'speedup':>10s}")
    for name, fn in cases(np.random.default_rng(args.seed)).items():
        ms = {}
        for b in backends:
            fn(b)  # warm up
            ms[b] = 1e3 * min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat))
        speed = ms["numpy"] / ms["cython"] if "cython" in ms else 1.0
        print(f"{name:30s}" + "".join(f"{ms[b]:12.3f}" for b in backends) + f"{speed:9.1f}x")


if __name__ == "__main__":
    main()
