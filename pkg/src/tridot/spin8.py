"""Brute-force three-spin-1/2 representation on the full 8-dim space.

This module is the ground truth the reduced three-level algebra is
checked against: Hamiltonians are built directly from spin operators in
the product basis |s1 s2 s3> (dot 1 most significant, up before down),
with no basis-change cleverness anywhere.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from .su3 import Gauge

DIM = 8

_ID2 = np.eye(2)
_SZ1 = np.array([[0.5, 0.0], [0.0, -0.5]])
_SP1 = np.array([[0.0, 1.0], [0.0, 0.0]])  # raising
_SM1 = _SP1.T


def _site_op(op: np.ndarray, site: int) -> np.ndarray:
    mats = [_ID2, _ID2, _ID2]
    mats[site - 1] = op
    return np.kron(np.kron(mats[0], mats[1]), mats[2])


_SZ = {j: _site_op(_SZ1, j) for j in (1, 2, 3)}
_SP = {j: _site_op(_SP1, j) for j in (1, 2, 3)}
_SM = {j: _site_op(_SM1, j) for j in (1, 2, 3)}

TOTAL_SZ = _SZ[1] + _SZ[2] + _SZ[3]


def spin_z(j: int) -> np.ndarray:
    """z-projection operator of dot j (j = 1, 2, 3) on the product basis."""
    if j not in (1, 2, 3):
        raise ValueError(f"dot index must be 1, 2 or 3, got {j!r}")
    return _SZ[j].copy()


def exchange8(j: int, k: int) -> np.ndarray:
    """Heisenberg exchange S_j . S_k; eigenvalues -3/4 (twice) and +1/4."""
    if j == k or j not in (1, 2, 3) or k not in (1, 2, 3):
        raise ValueError(f"exchange needs two distinct dots, got ({j!r}, {k!r})")
    return _SZ[j] @ _SZ[k] + (_SP[j] @ _SM[k] + _SM[j] @ _SP[k]) / 2.0


def _ket(pattern: str) -> np.ndarray:
    """Product state from a pattern like 'udu' (u = up, d = down)."""
    index = 0
    for ch in pattern:
        index = 2 * index + (0 if ch == "u" else 1)
    v = np.zeros(DIM)
    v[index] = 1.0
    return v


def _flip(v: np.ndarray) -> np.ndarray:
    """Flip all three spins: product index i -> 7 - i."""
    return v[::-1].copy()


def _manifold_states() -> dict[tuple[str, Gauge], np.ndarray]:
    s2, s3, s6 = math.sqrt(2.0), math.sqrt(3.0), math.sqrt(6.0)
    udu, duu, uud = _ket("udu"), _ket("duu"), _ket("uud")
    up = {
        "0": (udu - duu) / s2,
        "1": (udu + duu) / s6 - math.sqrt(2.0 / 3.0) * uud,
        "Q": (udu + duu + uud) / s3,
        "P": _ket("uuu"),
    }
    states = {}
    for name, vec in up.items():
        states[(name, Gauge.UP)] = vec
        states[(name, Gauge.DOWN)] = _flip(vec)
    return states


_BASIS = _manifold_states()


def basis_state(logical: str, gauge: Gauge = Gauge.UP) -> np.ndarray:
    """Named 8-dim basis vector.

    logical is one of "0", "1", "Q" (the three-level states of the
    m_z = +-1/2 manifold selected by gauge) or "P" for the fully
    polarized state of that gauge (m_z = +-3/2).
    """
    try:
        return _BASIS[(logical, Gauge(gauge))].copy()
    except KeyError:
        raise ValueError(f"unknown basis label {logical!r}") from None


def full_basis() -> np.ndarray:
    """All eight named states as columns: (0,1,Q,P) x (up, down)."""
    cols = [
        _BASIS[(name, g)]
        for g in (Gauge.UP, Gauge.DOWN)
        for name in ("0", "1", "Q", "P")
    ]
    return np.column_stack(cols)


def build_hamiltonian(fields: Iterable[float], jz: float = 0.0, jn: float = 0.0) -> np.ndarray:
    """sum_j B_j S_j^z + jz * S1.S2 + jn * S2.S3 for fields (B1, B2, B3)."""
    b1, b2, b3 = (float(b) for b in fields)
    return (
        b1 * _SZ[1]
        + b2 * _SZ[2]
        + b3 * _SZ[3]
        + jz * exchange8(1, 2)
        + jn * exchange8(2, 3)
    )


def project_su3(h: np.ndarray, gauge: Gauge = Gauge.UP) -> tuple[np.ndarray, float]:
    """Project an m_z-conserving 8-dim Hamiltonian onto one gauge manifold.

    Returns (traceless 3x3 block in the (|0>, |1>, |Q>) basis, scalar
    shift), so that block + shift * I reproduces the manifold block of h.
    Raises if h does not commute with the total spin projection, since
    the projection is only meaningful for block-diagonal Hamiltonians.
    """
    h = np.asarray(h)
    comm = h @ TOTAL_SZ - TOTAL_SZ @ h
    if np.max(np.abs(comm)) > 1e-10:
        raise ValueError("Hamiltonian does not conserve total spin projection")
    cols = np.column_stack([_BASIS[(n, Gauge(gauge))] for n in ("0", "1", "Q")])
    block = cols.conj().T @ h @ cols
    shift = float(np.trace(block).real) / 3.0
    return block - shift * np.eye(3), shift
