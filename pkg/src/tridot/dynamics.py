"""Exact time evolution and the Monte Carlo disorder average.

Every probability here comes from brute-force spectral evolution of a
sampled Hamiltonian, in either the full 8-dim spin space or the reduced
3-dim manifold.  No closed-form averaging enters this module; it is the
reference the quadrature and the asymptotic formulas are tested
against.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels, spin8
from .hyperfine import CHUNK, DotPair, DotSigmas, deltas_array, sample_block
from .su3 import (
    HF_DBAR_MAT,
    HF_DELTA_MAT,
    PHI,
    Gauge,
    exchange12,
    exchange23,
    u2,
)

GAUGES = ("up", "down", "average")
REPRESENTATIONS = ("8dim", "3dim")


@dataclass(frozen=True)
class ExperimentSpec:
    """One pulsed free-induction experiment.

    A singlet is prepared on prepared_pair, the exchange j >= 0 is
    pulsed on pulsed_pair, and the singlet-return probability is read
    out on the time grid.  gauge selects which spin manifold carries
    the prepared state ("average" weighs both equally, which is the
    physical unpolarized case).
    """

    prepared_pair: DotPair
    pulsed_pair: DotPair
    j: float
    time_grid: np.ndarray
    gauge: str = "average"

    def __post_init__(self) -> None:
        if self.prepared_pair is self.pulsed_pair:
            raise ValueError("prepared and pulsed pair must differ")
        if not (self.j >= 0.0) or not math.isfinite(self.j):
            raise ValueError(f"exchange must be finite and >= 0, got {self.j!r}")
        if self.gauge not in GAUGES:
            raise ValueError(f"gauge must be one of {GAUGES}, got {self.gauge!r}")
        grid = np.asarray(self.time_grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0:
            raise ValueError("time grid must be a non-empty 1-d array")
        if grid[0] < 0.0 or np.any(np.diff(grid) <= 0.0):
            raise ValueError("time grid must be non-negative and strictly increasing")
        grid.setflags(write=False)
        object.__setattr__(self, "time_grid", grid)


@dataclass
class Curve:
    """A singlet-return curve with provenance.

    method is one of mc8, mc3, quadrature, inf_j, high_j, low_j,
    zero_j.  stderr is only present for Monte Carlo curves; flags carry
    validity warnings for asymptotic methods evaluated off-domain.
    """

    times: np.ndarray
    values: np.ndarray
    method: str
    meta: dict = field(default_factory=dict)
    stderr: np.ndarray | None = None
    flags: tuple[str, ...] = ()

    #: methods whose values are mathematically confined to [0, 1], with the
    #: slack they are allowed (quadrature carries its own tolerance);
    #: asymptotic expansions (low_j, high_j) may legitimately leave it.
    _BOUNDED = {
        "mc8": 1e-9,
        "mc3": 1e-9,
        "quadrature": 1e-6,
        "inf_j": 1e-9,
        "zero_j": 1e-9,
    }

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have matching shapes")
        eps = self._BOUNDED.get(self.method)
        if eps is not None:
            if np.any(self.values < -eps) or np.any(self.values > 1.0 + eps):
                raise ValueError(f"{self.method} values leave [0, 1]")


def propagate(h: np.ndarray, t: float) -> np.ndarray:
    """exp(-i h t) for a Hermitian h via spectral decomposition."""
    h = np.asarray(h)
    if np.max(np.abs(h - h.conj().T)) > 1e-10:
        raise ValueError("propagate requires a Hermitian matrix")
    evals, vecs = np.linalg.eigh(h)
    return (vecs * np.exp(-1j * evals * t)) @ vecs.conj().T


_PREP3 = {
    # prepared singlet on (1,2) is the first basis vector; on (2,3) it is
    # the image of that vector under the exchange-axis rotation.
    DotPair.P12: np.array([1.0, 0.0, 0.0], dtype=complex),
    DotPair.P23: u2(PHI)[:, 0].copy(),
}


def _prepared_vec8(prepared: DotPair, gauge: Gauge) -> np.ndarray:
    if prepared is DotPair.P12:
        return spin8.basis_state("0", gauge)
    # Singlet on (2,3), outside dot polarized along the gauge, expressed
    # in the named basis; the overall sign is a global phase.
    return -0.5 * spin8.basis_state("0", gauge) - (
        math.sqrt(3.0) / 2.0
    ) * spin8.basis_state("1", gauge)


def _gauges_of(spec_gauge: str) -> tuple[Gauge, ...]:
    return {
        "up": (Gauge.UP,),
        "down": (Gauge.DOWN,),
        "average": (Gauge.UP, Gauge.DOWN),
    }[spec_gauge]


def _exchange_couplings(spec: ExperimentSpec) -> tuple[float, float]:
    """(jz, jn) with the pulse routed to the right pair."""
    if spec.pulsed_pair is DotPair.P23:
        return 0.0, spec.j
    return spec.j, 0.0


def _batched_h3(fields: np.ndarray, spec: ExperimentSpec, gauge: Gauge) -> np.ndarray:
    """(n, 3, 3) reduced Hamiltonians for an (n, 3) field block."""
    delta, delta_bar = deltas_array(fields, DotPair.P12)
    jz, jn = _exchange_couplings(spec)
    sign = float(gauge)
    h = sign * (
        delta[:, None, None] * HF_DELTA_MAT + delta_bar[:, None, None] * HF_DBAR_MAT
    )
    return h + (jz * exchange12().real + jn * exchange23().real)


def _batched_h8(fields: np.ndarray, spec: ExperimentSpec) -> np.ndarray:
    """(n, 8, 8) full-space Hamiltonians for an (n, 3) field block."""
    jz, jn = _exchange_couplings(spec)
    sz = np.stack([spin8.spin_z(j) for j in (1, 2, 3)])
    h = np.einsum("nj,jab->nab", np.asarray(fields, dtype=float), sz)
    return h + (jz * spin8.exchange8(1, 2) + jn * spin8.exchange8(2, 3))


def _probs_block(
    fields: np.ndarray, spec: ExperimentSpec, times: np.ndarray, rep: str
) -> np.ndarray:
    """Per-sample return probabilities, gauge-combined, as (n, T)."""
    gauges = _gauges_of(spec.gauge)
    acc = None
    for gauge in gauges:
        if rep == "3dim":
            h = _batched_h3(fields, spec, gauge)
            psi0 = _PREP3[spec.prepared_pair]
        else:
            h = _batched_h8(fields, spec)
            psi0 = _prepared_vec8(spec.prepared_pair, gauge).astype(complex)
        evals, vecs = np.linalg.eigh(h)
        amps = np.einsum("nkj,k->nj", vecs.conj(), psi0)
        weights = amps.real**2 + amps.imag**2
        p = _kernels.phase_probs(evals, weights, times)
        acc = p if acc is None else acc + p
    return acc / len(gauges)


def p0_single(
    spec: ExperimentSpec,
    fields: Iterable[float],
    t: float | Sequence[float],
    rep: str = "3dim",
) -> float | np.ndarray:
    """Singlet-return probability for one frozen field configuration.

    rep selects the representation; "8dim" and "3dim" agree to float
    precision, which is one of the load-bearing cross-checks.
    """
    if rep not in REPRESENTATIONS:
        raise ValueError(f"rep must be one of {REPRESENTATIONS}, got {rep!r}")
    b = np.asarray(tuple(fields), dtype=float)[None, :]
    times = np.atleast_1d(np.asarray(t, dtype=float))
    p = _probs_block(b, spec, times, rep)[0]
    return float(p[0]) if np.isscalar(t) or np.ndim(t) == 0 else p


def p0_mc(
    spec: ExperimentSpec,
    sigmas: DotSigmas,
    n_samples: int,
    seed: int,
    rep: str = "3dim",
    workers: int = 1,
    field_sign: float = 1.0,
) -> Curve:
    """Monte Carlo disorder average of the singlet-return probability.

    Deterministic for fixed (seed, n_samples): fields are drawn in
    fixed-size chunks from counter-addressed streams and the per-chunk
    partial sums are combined in chunk order, so the result is
    byte-identical for any worker count.  field_sign = -1 evolves the
    mirrored ensemble (used by the gauge-symmetry checks).
    """
    if rep not in REPRESENTATIONS:
        raise ValueError(f"rep must be one of {REPRESENTATIONS}, got {rep!r}")
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    if field_sign not in (1.0, -1.0):
        raise ValueError("field_sign must be +1 or -1")
    times = spec.time_grid

    def chunk_stats(chunk_index: int) -> tuple[np.ndarray, np.ndarray]:
        start = chunk_index * CHUNK
        count = min(CHUNK, n_samples - start)
        fields = sample_block(sigmas, seed, start, count)
        if field_sign < 0:
            fields = -fields
        p = _probs_block(fields, spec, times, rep)
        return p.sum(axis=0), (p * p).sum(axis=0)

    n_chunks = -(-n_samples // CHUNK)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(chunk_stats, range(n_chunks)))
    else:
        partials = [chunk_stats(c) for c in range(n_chunks)]

    total = np.zeros_like(times)
    total_sq = np.zeros_like(times)
    for s, s2 in partials:  # fixed chunk order keeps the sum bit-stable
        total = total + s
        total_sq = total_sq + s2

    mean = total / n_samples
    if n_samples > 1:
        var = (total_sq - n_samples * mean**2) / (n_samples - 1)
        stderr = np.sqrt(np.maximum(var, 0.0) / n_samples)
    else:
        stderr = np.full_like(mean, np.nan)
    method = "mc3" if rep == "3dim" else "mc8"
    meta = {
        "n_samples": n_samples,
        "seed": seed,
        "rep": rep,
        "chunk": CHUNK,
        "gauge": spec.gauge,
        "backend": _kernels.backend(),
    }
    return Curve(times=times.copy(), values=mean, method=method, meta=meta, stderr=stderr)
