"""Compare the numba and pure-numpy kernels on realistic problem sizes.

    python benchmarks/bench_kernels.py [--repeat 5]

The synthesis case is the adapted field of a 33-node signal with 65 plane
waves on the default 65536-point torus; the cyclic solve is the 1D FD
oracle system of the same size.
"""
import argparse
import time

import numpy as np

from blochopt import _kernels


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t)
    return min(times), out


def synthesis_case(rng, npts=65536, J=33, N=32):
    x = (np.arange(npts) * 8.0 / npts)[:, None]
    eta = (np.arange(J) - J // 2)[:, None] * 0.125
    uhat = rng.standard_normal(J) + 1j * rng.standard_normal(J)
    kidx = np.arange(-N, N + 1)[:, None].astype(np.int64)
    coeffs = (rng.standard_normal((J, 2 * N + 1)) + 1j * rng.standard_normal((J, 2 * N + 1))) / (1 + kidx.T ** 2)
    return x, eta, uhat, coeffs, kidx, 8.0, 0.125


def cyclic_case(rng, n=65536):
    lower, upper = -rng.uniform(0.5, 2, n), -rng.uniform(0.5, 2, n)
    diag = 1.0 + np.abs(lower) + np.abs(upper)
    return lower, diag, upper, rng.standard_normal(n)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    cases = [
        ("bloch_synthesis", synthesis_case(rng), _kernels.bloch_synthesis_numpy, _kernels.bloch_synthesis_numba),
        ("cyclic_tridiag", cyclic_case(rng), _kernels.cyclic_tridiag_numpy, _kernels.cyclic_tridiag_numba),
    ]
    print(f"{'kernel':<16} {'numpy [ms]':>11} {'numba [ms]':>11} {'speedup':>8} {'max |diff|':>11}")
    for name, data, np_fn, nb_fn in cases:
        t_np, ref = best_of(np_fn, data, args.repeat)
        if nb_fn is None:
            print(f"{name:<16} {1e3 * t_np:11.2f} {'n/a':>11}")
            continue
        nb_fn(*data)      # compile (or load from cache) outside the timing
        t_nb, out = best_of(nb_fn, data, args.repeat)
        print(f"{name:<16} {1e3 * t_np:11.2f} {1e3 * t_nb:11.2f} {t_np / t_nb:7.1f}x {np.abs(out - ref).max():11.2e}")


if __name__ == "__main__":
    main()
