"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from fictsc import _kernels_py

try:
    from fictsc import _kernels as _compiled
except ImportError:
    _compiled = None


def cases(rng):
    B, C, T, K = 64, 32, 96, 39
    xpad = rng.normal(size=(B, C, T + K - 1))
    dcols = rng.normal(size=(B, T, C * K))
    x = rng.normal(size=(B, C, T))
    u = np.sort(rng.normal(size=2000))
    v = np.sort(rng.normal(size=1500))

    def pool(mod):
        out, idx = mod.maxpool1d_same(x, 3)
        mod.maxpool1d_backward(out, idx)

    return {
        "im2col1d B=64 C=32 T=96 K=39": lambda mod: mod.im2col1d(xpad, K, T),
        "col2im1d B=64 C=32 T=96 K=39": lambda mod: mod.col2im1d(dcols, C, K, T + K - 1),
        "maxpool1d fwd+bwd B=64 C=32 T=96": pool,
        "w1_sorted 2000 vs 1500 atoms": lambda mod: mod.w1_sorted(u, v),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<36} {'python ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for name, fn in cases(rng).items():
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        if _compiled is None:
            print(f"{name:<36} {t_py:>10.3f} {'n/a':>12} {'':>8}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_compiled), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<36} {t_py:>10.3f} {t_c:>12.3f} {t_py / t_c:>7.2f}x")


if __name__ == "__main__":
    main()
