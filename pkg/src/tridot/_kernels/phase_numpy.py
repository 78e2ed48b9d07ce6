"""Pure-numpy fallback for the phase-sum kernel."""

from __future__ import annotations

import numpy as np


def phase_probs(eigvals: np.ndarray, weights: np.ndarray, times: np.ndarray) -> np.ndarray:
    """|sum_k W[i,k] exp(-i E[i,k] t)|^2 as an (n_samples, n_times) array."""
    eigvals = np.asarray(eigvals, dtype=float)
    weights = np.asarray(weights, dtype=float)
    times = np.asarray(times, dtype=float)
    if eigvals.shape != weights.shape:
        raise ValueError("eigvals and weights must have identical shapes")
    phase = eigvals[:, None, :] * times[None, :, None]
    amp = np.einsum("nk,ntk->nt", weights, np.cos(phase)) - 1j * np.einsum(
        "nk,ntk->nt", weights, np.sin(phase)
    )
    return amp.real**2 + amp.imag**2
