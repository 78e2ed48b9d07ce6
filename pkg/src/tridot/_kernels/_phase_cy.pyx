# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled phase-sum kernel.

For each disorder sample i with eigenvalues E[i, :] and real return
weights W[i, :], accumulates

    P[i, t] = | sum_k W[i, k] * exp(-1j * E[i, k] * times[t]) | ** 2

This triple loop dominates the Monte Carlo runtime, hence the compiled
version; tridot._kernels.phase_numpy is the drop-in fallback.
"""

import numpy as np

from libc.math cimport cos, sin


def phase_probs(const double[:, ::1] eigvals, const double[:, ::1] weights,
                const double[::1] times):
    """Return probabilities as an (n_samples, n_times) float64 array."""
    cdef Py_ssize_t n = eigvals.shape[0]
    cdef Py_ssize_t k = eigvals.shape[1]
    cdef Py_ssize_t m = times.shape[0]
    if weights.shape[0] != n or weights.shape[1] != k:
        raise ValueError("eigvals and weights must have identical shapes")

    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, a
    cdef double re, im, ph, t, w

    with nogil:
        for i in range(n):
            for j in range(m):
                t = times[j]
                re = 0.0
                im = 0.0
                for a in range(k):
                    ph = eigvals[i, a] * t
                    w = weights[i, a]
                    re += w * cos(ph)
                    im -= w * sin(ph)
                o[i, j] = re * re + im * im
    return out
