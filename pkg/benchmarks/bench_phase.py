"""Benchmark the compiled phase-sum kernel against the numpy fallback.

The kernel computes |sum_k w_k exp(-i d_k t)|^2 for a block of sampled
spectra over a shared time grid -- the inner loop of the Monte Carlo
average.  Run from the repository root:

    python3 benchmarks/bench_phase.py [--samples N] [--times T] [--repeat R]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from tridot import _kernels


def make_inputs(n_samples: int, n_times: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    eigvals = rng.normal(0.0, 2.0, (n_samples, 3))
    amps = rng.dirichlet(np.ones(3), n_samples)
    times = np.linspace(0.0, 10.0, n_times)
    return eigvals, amps, times


def bench(func, args, repeat: int) -> float:
    """Best-of-repeat wall time per call, in seconds."""
    func(*args)  # warm up / JIT caches out of the timing
    times = timeit.repeat(lambda: func(*args), number=1, repeat=repeat)
    return min(times)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--samples", type=int, default=4096)
    parser.add_argument("--times", type=int, default=400)
    parser.add_argument("--repeat", type=int, default=7)
    args = parser.parse_args()

    eigvals, amps, times = make_inputs(args.samples, args.times)
    call = (eigvals, amps, times)

    t_numpy = bench(_kernels.phase_probs_numpy, call, args.repeat)
    print(f"numpy fallback : {t_numpy * 1e3:8.2f} ms / block "
          f"({args.samples} samples x {args.times} times)")

    if _kernels.phase_probs_compiled is None:
        print("compiled kernel: not built (pip install -e . rebuilds it)")
        return

    t_comp = bench(_kernels.phase_probs_compiled, call, args.repeat)
    print(f"compiled kernel: {t_comp * 1e3:8.2f} ms / block")
    print(f"speedup        : {t_numpy / t_comp:8.2f}x")

    a = _kernels.phase_probs_numpy(*call)
    b = _kernels.phase_probs_compiled(*call)
    print(f"max |diff|     : {np.max(np.abs(a - b)):8.2e}")


if __name__ == "__main__":
    main()
