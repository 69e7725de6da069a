"""Time the numba and numpy implementations of each kernel side by side.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Both implementations are called directly, so the result does not depend on
SQAGUIDE_DISABLE_NUMBA. The first numba call (compilation) is excluded.
"""
import argparse
import timeit

import numpy as np

from sqaguide import kernels


def cases(rng):
    frames = rng.standard_normal((100, 512))
    spec = np.fft.rfft(frames, axis=1)
    codes = rng.integers(0, 30, 60), rng.integers(0, 30, 60)
    ref = rng.standard_normal(16000)
    est = ref + 0.1 * rng.standard_normal(16000)
    return [
        ("fft 100x512", kernels._fft_rows, (frames.astype(np.complex128), False)),
        ("rfft 100x512", kernels._rfft_rows, (frames, 512)),
        ("irfft 100x512", kernels._irfft_rows, (np.ascontiguousarray(spec), 512)),
        ("overlap_add 100x512 hop 128", kernels._overlap_add, (frames, 128)),
        ("levenshtein 60x60", kernels._levenshtein, codes),
        ("fir normal eq 1 s, 512 taps", kernels._fir_normal_eq, (ref, est, 512)),
    ]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':30s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, fn, a in cases(rng):
        fn.numba_impl(*a)  # compile
        t_nb = min(timeit.repeat(lambda: fn.numba_impl(*a), number=1, repeat=args.repeat))
        t_np = min(timeit.repeat(lambda: fn.numpy_impl(*a), number=1, repeat=args.repeat))
        print(f"{name:30s} {1e3 * t_nb:10.3f} {1e3 * t_np:10.3f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
