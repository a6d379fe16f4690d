"""Benchmark the numba-JIT kernels against their pure-numpy fallbacks.

Run:  python3 benchmarks/bench_accel.py
The same comparison can be made end to end by timing any workload twice,
once with TMSVFISHER_NO_NUMBA=1 (numpy lane) and once without (numba lane).
"""

import timeit

import numpy as np

from tmsvfisher import _accel


def _em_problem(M=220, K=10, N=10, seed=0):
    rng = np.random.default_rng(seed)
    C = rng.random((M, K))
    theta = np.full((K, N), 1.0 / N)
    counts = rng.integers(0, 10_000, size=(M, N)).astype(float)
    return counts, C, theta


def _cfi_problem(n=10_000, seed=1):
    rng = np.random.default_rng(seed)
    p = rng.random(n)
    p[::9] = 0.0
    dp = rng.normal(size=n)
    return p, dp


def _qfi_problem(n=121, seed=2):
    rng = np.random.default_rng(seed)
    lam = np.abs(rng.random(n))
    lam /= lam.sum()
    M = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return lam, M


def bench(name, numpy_fn, numba_fn, args, repeat=5, number=50):
    t_np = min(timeit.repeat(lambda: numpy_fn(*args), repeat=repeat, number=number))
    line = f"{name:18s} numpy {t_np / number * 1e6:10.1f} us"
    if numba_fn is not None:
        numba_fn(*args)  # trigger JIT compilation outside the timed region
        t_nb = min(timeit.repeat(lambda: numba_fn(*args), repeat=repeat, number=number))
        line += f"   numba {t_nb / number * 1e6:10.1f} us   speedup {t_np / t_nb:6.2f}x"
    else:
        line += "   numba unavailable (TMSVFISHER_NO_NUMBA set or not installed)"
    print(line)


def main():
    print(f"numba lane active: {_accel.HAVE_NUMBA}")
    counts, C, theta = _em_problem()
    bench("em_step", _accel.em_step_numpy, _accel.em_step_numba, (counts, C, theta))
    bench("em_loglik", _accel.em_loglik_numpy, _accel.em_loglik_numba, (counts, C, theta))
    p, dp = _cfi_problem()
    bench("cfi_terms", _accel.cfi_terms_numpy, _accel.cfi_terms_numba, (p, dp, 1e-15, 1e-12))
    lam, M = _qfi_problem()
    bench(
        "qfi_sector_sum",
        _accel.qfi_sector_sum_numpy,
        _accel.qfi_sector_sum_numba,
        (lam, M, 1e-12),
    )


if __name__ == "__main__":
    main()
