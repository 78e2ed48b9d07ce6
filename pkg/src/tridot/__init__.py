"""Singlet-return dynamics of an exchange-pulsed triple quantum dot.

A singlet prepared on two of three tunnel-coupled dots dephases under
quasistatic hyperfine field disorder while an exchange pulse drives
coherent rotations.  The package evaluates the disorder-averaged
return probability four independent ways -- full-space and reduced
Monte Carlo, Gaussian quadrature of the reduced integrals, and
closed-form limit expansions -- and fits measured traces back to the
per-dot field variances.
"""

from .analytic import (
    DEFAULT_QUADRATURE,
    QuadratureError,
    QuadratureSpec,
    ReducedParams,
    big_f,
    curve,
    i1,
    i2,
    p0_exact,
    p0_high_j,
    p0_inf_j,
    p0_low_j,
    p0_zero_j,
    reduced,
    width_a,
)
from .dynamics import Curve, ExperimentSpec, p0_mc, p0_single, propagate
from .fitting import (
    FitResult,
    SigmaSolution,
    Trace,
    UnderdeterminedError,
    estimate_j,
    fit_dephasing,
    fit_rabi,
    sigma3_sq_shortcut,
    solve_sigmas,
)
from .hyperfine import (
    DotPair,
    DotSigmas,
    PairStats,
    effective_pair_stats,
    pair_stats,
    sample_block,
)
from .su3 import Gauge

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_QUADRATURE",
    "Curve",
    "DotPair",
    "DotSigmas",
    "ExperimentSpec",
    "FitResult",
    "Gauge",
    "PairStats",
    "QuadratureError",
    "QuadratureSpec",
    "ReducedParams",
    "SigmaSolution",
    "Trace",
    "UnderdeterminedError",
    "big_f",
    "curve",
    "effective_pair_stats",
    "estimate_j",
    "fit_dephasing",
    "fit_rabi",
    "i1",
    "i2",
    "p0_exact",
    "p0_high_j",
    "p0_inf_j",
    "p0_low_j",
    "p0_mc",
    "p0_single",
    "p0_zero_j",
    "pair_stats",
    "propagate",
    "reduced",
    "sigma3_sq_shortcut",
    "solve_sigmas",
    "width_a",
    "__version__",
]
