"""Operator algebra on one gauge manifold of three exchange-coupled spins.

With a fixed total spin projection, the three-spin problem reduces to a
three-level system spanned by (|0>, |1>, |Q>): the pair-(1,2) singlet,
its orthogonal doublet partner, and the fully symmetric quadruplet
state.  Everything here is written in that basis using the standard
Gell-Mann matrices, so the two exchange couplings and the hyperfine
field differences act as rotations of an eight-component generalized
Bloch vector.

Energies are dimensionless (units of the root-mean-square per-dot
hyperfine deviation); times are in the inverse of that unit.
"""

from __future__ import annotations

import enum
import math

import numpy as np

# Angle between the two exchange axes in the (lambda_3, lambda_1) plane.
PHI = 2.0 * math.pi / 3.0

# Rotation that maps the field-difference axes onto the exchange frame;
# cos(BETA) = -1/3 (the tetrahedral angle).
BETA = math.pi - math.atan(math.sqrt(8.0))

_SQRT3 = math.sqrt(3.0)


class Gauge(enum.IntEnum):
    """Sign carried by the hyperfine block in each gauge manifold.

    The spin-up manifold (total projection +1/2) maps to +1, the
    flipped manifold to -1.  Exchange terms are gauge even.
    """

    UP = 1
    DOWN = -1


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


_L = {
    1: np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=complex),
    2: np.array([[0, -1j, 0], [1j, 0, 0], [0, 0, 0]], dtype=complex),
    3: np.array([[1, 0, 0], [0, -1, 0], [0, 0, 0]], dtype=complex),
    4: np.array([[0, 0, 1], [0, 0, 0], [1, 0, 0]], dtype=complex),
    5: np.array([[0, 0, -1j], [0, 0, 0], [1j, 0, 0]], dtype=complex),
    6: np.array([[0, 0, 0], [0, 0, 1], [0, 1, 0]], dtype=complex),
    7: np.array([[0, 0, 0], [0, 0, -1j], [0, 1j, 0]], dtype=complex),
    8: np.array([[1, 0, 0], [0, 1, 0], [0, 0, -2]], dtype=complex) / _SQRT3,
}
for _m in _L.values():
    _readonly(_m)


def gell_mann(j: int) -> np.ndarray:
    """Return the j-th Gell-Mann matrix (j = 1..8), trace-normalized to
    tr(lambda_a lambda_b) = 2 delta_ab."""
    try:
        return _L[j]
    except KeyError:
        raise ValueError(f"Gell-Mann index must be in 1..8, got {j!r}") from None


def u2(angle: float) -> np.ndarray:
    """exp(-i angle lambda_2 / 2): a real rotation in the (|0>, |1>) plane."""
    c, s = math.cos(angle / 2.0), math.sin(angle / 2.0)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=complex)


def u7(angle: float) -> np.ndarray:
    """exp(-i angle lambda_7 / 2): a real rotation in the (|1>, |Q>) plane."""
    c, s = math.cos(angle / 2.0), math.sin(angle / 2.0)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=complex)


# E_12 = -lambda_8/(2 sqrt 3) - lambda_3/2 = diag(-2/3, 1/3, 1/3)
_E12 = _readonly(-_L[8] / (2 * _SQRT3) - _L[3] / 2)
# E_23 is E_12 conjugated onto the second exchange axis (rotation by PHI).
_E23 = _readonly(
    -_L[8] / (2 * _SQRT3) - (math.cos(PHI) * _L[3] + math.sin(PHI) * _L[1]) / 2
)


def exchange12() -> np.ndarray:
    """Traceless part of the (1,2) exchange projector; spectrum {-2/3, 1/3, 1/3}."""
    return _E12


def exchange23() -> np.ndarray:
    """Traceless part of the (2,3) exchange projector; spectrum {-2/3, 1/3, 1/3}."""
    return _E23


def exchange_mix_angle(jz: float, jn: float) -> float:
    """Angle eta of the lambda_2 rotation diagonalizing jz*E12 + jn*E23.

    Uses the two-argument arctangent, so the branch is well defined for
    any sign combination.  Raises for the fully degenerate input
    jz = jn = 0 where no axis is singled out.
    """
    if jz == 0.0 and jn == 0.0:
        raise ValueError("exchange mix angle undefined for jz = jn = 0")
    return math.atan2(jn * math.sin(PHI), jn * math.cos(PHI) + jz)


def _symmetrized(m: np.ndarray) -> np.ndarray:
    return (m + m.T) / 2.0


_U7B_REAL = np.array(
    [
        [1.0, 0.0, 0.0],
        [0.0, math.cos(BETA / 2), -math.sin(BETA / 2)],
        [0.0, math.sin(BETA / 2), math.cos(BETA / 2)],
    ]
)

# Hyperfine couplings are linear in the two field differences; keep the two
# constant coefficient matrices so scalar and vectorized callers share them.
HF_DELTA_MAT = _readonly(
    _symmetrized(_U7B_REAL @ (_L[1].real / 2.0) @ _U7B_REAL.T)
)
HF_DBAR_MAT = _readonly(
    _symmetrized(_U7B_REAL @ (_L[8].real / _SQRT3) @ _U7B_REAL.T)
)


def hyperfine_su3(delta: float, delta_bar: float, gauge: Gauge = Gauge.UP) -> np.ndarray:
    """Hyperfine Hamiltonian block for field differences (delta, delta_bar).

    delta is the in-pair field difference B1 - B2 and delta_bar the
    out-of-pair difference B3 - (B1 + B2)/2.  The block is real
    symmetric and traceless, and odd under the gauge flip.
    """
    sign = float(Gauge(gauge))
    return (sign * (delta * HF_DELTA_MAT + delta_bar * HF_DBAR_MAT)).astype(complex)


def diagonalize_pulsed(jn: float, delta: float, delta_bar: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form eigensystem of the hyperfine + pulsed-exchange block.

    delta and delta_bar are the pulsed-pair field differences of a
    sample (B2 - B3 and B1 - (B2 + B3)/2).  The returned unitary
    W = U2(PHI) U7(BETA) U2(theta), with theta = -atan2(delta, jn),
    diagonalizes the pulse-frame block

        u2(PHI) @ hyperfine_su3(delta, delta_bar) @ u2(PHI).conj().T
            + jn * exchange23(),

    i.e. the hyperfine written directly in the pulsed-pair differences
    and carried onto the pulsed exchange axis.  That block is not equal
    to the lab-frame hyperfine_su3(B1 - B2, B3 - (B1 + B2)/2) of the
    same sample, but it is equivalent for every observable used here:
    both share the eigenvalues returned by this function, and both give
    identical singlet-return weights |<0|w_k>|^2 =
    ((1 - sin theta)/4, (1 + sin theta)/4, 1/2).

    At jn = 0 the branch theta = -sign(delta) * pi/2 is used (the atan2
    limit), which keeps the unitary continuous as jn -> 0+.
    """
    if jn < 0.0:
        raise ValueError(f"pulsed exchange must be >= 0, got {jn}")
    theta = -math.atan2(delta, jn)
    unitary = u2(PHI) @ u7(BETA) @ u2(theta)
    omega = math.hypot(jn, delta)
    nu = jn - 2.0 * delta_bar
    eigenvalues = np.array(
        [-omega / 2.0 - nu / 6.0, omega / 2.0 - nu / 6.0, nu / 3.0]
    )
    return unitary, eigenvalues
