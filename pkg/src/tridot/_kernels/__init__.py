"""Kernel backend selection.

The compiled Cython kernel is used when present; set TRIDOT_FORCE_NUMPY=1
to force the pure-numpy fallback (used by the benchmark and for
debugging).  Both backends implement the same phase_probs contract.
"""

from __future__ import annotations

import os

import numpy as np

from . import phase_numpy

try:
    from . import _phase_cy
except ImportError:  # extension not built
    _phase_cy = None

phase_probs_numpy = phase_numpy.phase_probs

if _phase_cy is not None:

    def phase_probs_compiled(eigvals, weights, times):
        return _phase_cy.phase_probs(
            np.ascontiguousarray(eigvals, dtype=np.float64),
            np.ascontiguousarray(weights, dtype=np.float64),
            np.ascontiguousarray(times, dtype=np.float64),
        )

else:
    phase_probs_compiled = None

if phase_probs_compiled is not None and not os.environ.get("TRIDOT_FORCE_NUMPY"):
    phase_probs = phase_probs_compiled
    BACKEND = "compiled"
else:
    phase_probs = phase_probs_numpy
    BACKEND = "numpy"


def backend() -> str:
    """Name of the active kernel backend ("compiled" or "numpy")."""
    return BACKEND
