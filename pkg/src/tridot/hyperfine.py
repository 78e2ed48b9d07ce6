"""Quasistatic hyperfine disorder model.

Each dot sees an independent zero-mean Gaussian field along z with a
per-dot deviation sigma_j.  The dynamics only ever depends on two
linear combinations per dot pair: the in-pair difference and the
out-of-pair difference, so this module also carries their joint second
moments.

Sampling is counter-addressable: sample i of a seed is a pure function
of (seed, i), drawn from a Philox stream that is split per fixed-size
chunk.  This is what makes the Monte Carlo averages reproducible
independent of worker count.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

#: Samples per RNG chunk.  Fixed: changing it changes every stream.
CHUNK = 4096


class DotPair(enum.Enum):
    """The two nearest-neighbour pairs of the linear triple dot."""

    P12 = (1, 2)
    P23 = (2, 3)

    @property
    def dots(self) -> tuple[int, int]:
        return self.value

    @property
    def outside(self) -> int:
        """The dot not in the pair."""
        return {self.P12: 3, self.P23: 1}[self]


@dataclass(frozen=True)
class DotSigmas:
    """Per-dot hyperfine deviations, all >= 0."""

    sigma1: float
    sigma2: float
    sigma3: float

    def __post_init__(self) -> None:
        for name in ("sigma1", "sigma2", "sigma3"):
            v = getattr(self, name)
            if not (v >= 0.0) or not math.isfinite(v):
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.sigma1, self.sigma2, self.sigma3])


@dataclass(frozen=True)
class FieldSample:
    """One realization of the three frozen dot fields."""

    b1: float
    b2: float
    b3: float

    def __iter__(self) -> Iterator[float]:
        yield from (self.b1, self.b2, self.b3)


@dataclass(frozen=True)
class PairStats:
    """Second moments of the pair field differences.

    sigma_pair**2 = var(in-pair difference), sigma_bar**2 = var(out-of-pair
    difference) and cov their covariance.
    """

    sigma_pair: float
    sigma_bar: float
    cov: float


def pair_stats(sigmas: DotSigmas, pair: DotPair) -> PairStats:
    """Joint Gaussian moments of (delta, delta_bar) for the given pair.

    For pair (j, k) with remaining dot l:

        var(delta)     = sigma_j^2 + sigma_k^2
        var(delta_bar) = sigma_l^2 + (sigma_j^2 + sigma_k^2) / 4
        cov            = (sigma_k^2 - sigma_j^2) / 2

    The covariance sign follows directly from delta = B_j - B_k and
    delta_bar = B_l - (B_j + B_k)/2; it is pinned by a sampling test.
    """
    s = {1: sigmas.sigma1**2, 2: sigmas.sigma2**2, 3: sigmas.sigma3**2}
    j, k = pair.dots
    l = pair.outside
    var_pair = s[j] + s[k]
    var_bar = s[l] + (s[j] + s[k]) / 4.0
    cov = (s[k] - s[j]) / 2.0
    return PairStats(math.sqrt(var_pair), math.sqrt(var_bar), cov)


def effective_pair_stats(sigmas: DotSigmas, prepared: DotPair, pulsed: DotPair) -> PairStats:
    """Pulsed-pair moments oriented for the return-probability average.

    The averaged dynamics depends on the covariance through the sign of
    the in-pair difference, and the natural orientation is shared dot
    first (the dot common to the prepared and pulsed pairs).  For the
    standard experiment (prepared (1,2), pulsed (2,3)) this is the plain
    pair_stats of (2,3); for the swapped one the covariance flips sign.
    """
    if prepared is pulsed:
        raise ValueError("prepared and pulsed pairs must differ")
    base = pair_stats(sigmas, pulsed)
    shared = set(prepared.dots).intersection(pulsed.dots).pop()
    outer = pulsed.dots[0] if pulsed.dots[1] == shared else pulsed.dots[1]
    s = sigmas.as_array() ** 2
    return PairStats(base.sigma_pair, base.sigma_bar, (s[outer - 1] - s[shared - 1]) / 2.0)


def _chunk_fields(sigmas: DotSigmas, seed: int, chunk_index: int, count: int) -> np.ndarray:
    """Rows [0, count) of the given chunk as a (count, 3) array."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(chunk_index,))
    rng = np.random.Generator(np.random.Philox(ss))
    return rng.standard_normal((count, 3)) * sigmas.as_array()


def sample_block(sigmas: DotSigmas, seed: int, start: int, count: int) -> np.ndarray:
    """Samples [start, start + count) of the stream as a (count, 3) array."""
    if start < 0 or count < 0:
        raise ValueError("start and count must be non-negative")
    parts = []
    i = start
    remaining = count
    while remaining > 0:
        chunk, offset = divmod(i, CHUNK)
        take = min(CHUNK - offset, remaining)
        block = _chunk_fields(sigmas, seed, chunk, offset + take)
        parts.append(block[offset:])
        i += take
        remaining -= take
    if not parts:
        return np.empty((0, 3))
    return np.concatenate(parts, axis=0)


def sample(sigmas: DotSigmas, seed: int, index: int = 0) -> FieldSample:
    """Deterministic single draw: a pure function of (seed, index)."""
    row = sample_block(sigmas, seed, index, 1)[0]
    return FieldSample(*row)


def deltas_array(fields: np.ndarray, pair: DotPair) -> tuple[np.ndarray, np.ndarray]:
    """(delta, delta_bar) columns for an (n, 3) field array."""
    b = np.asarray(fields, dtype=float)
    j, k = pair.dots
    l = pair.outside
    delta = b[..., j - 1] - b[..., k - 1]
    delta_bar = b[..., l - 1] - (b[..., j - 1] + b[..., k - 1]) / 2.0
    return delta, delta_bar


def deltas(s: FieldSample, pair: DotPair) -> tuple[float, float]:
    """In-pair difference B_j - B_k and out-of-pair difference
    B_l - (B_j + B_k)/2 for pair (j, k)."""
    d, db = deltas_array(np.array(tuple(s))[None, :], pair)
    return float(d[0]), float(db[0])
