"""Reduced forms of the disorder-averaged singlet-return probability.

Averaging the return probability over the two pulsed-pair field
differences leaves two one-dimensional Gaussian integrals (i1, i2) plus
elementary prefactors; p0_exact evaluates that reduced form by
quadrature and is the workhorse "exact" curve.  The closed-form regimes
around it:

* p0_zero_j   -- no exchange pulse; pure prepared-pair dephasing.
* p0_inf_j    -- exchange much larger than the field spread.
* p0_high_j   -- first-order finite-exchange corrections (validity
                 jn >~ 3 sigma_pair), an approximation-regime curve.
* p0_low_j    -- quadratic small-exchange expansion (validity
                 jn <~ 0.5 sigma_pair), an approximation-regime curve.

Reduced variables throughout: u = sigma_pair * t, y = jn / sigma_pair,
w = cov / sigma_pair**2, with the pulsed-pair moments oriented shared
dot first (hyperfine.effective_pair_stats), so the standard and the
swapped preparation share one set of formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable

import numpy as np
from scipy import integrate, special

from .dynamics import Curve, ExperimentSpec
from .hyperfine import DotSigmas, effective_pair_stats, pair_stats

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
# exp() underflows below this; clamping keeps tails at the smallest
# positive float instead of tripping FP underflow on long grids.
_EXP_FLOOR = -745.0

#: Validity edges for the approximation-regime curves, in units of
#: jn / sigma_pair; outside them curve() attaches a warning flag.
HIGH_J_MIN_RATIO = 3.0
LOW_J_MAX_RATIO = 0.5

CURVE_METHODS = ("quadrature", "zero_j", "inf_j", "high_j", "low_j")


class QuadratureError(ArithmeticError):
    """Quadrature failed to reach the requested absolute tolerance."""

    def __init__(self, message: str, **context: Any) -> None:
        super().__init__(message)
        self.context = context

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        base = super().__str__()
        if self.context:
            details = ", ".join(f"{k}={v!r}" for k, v in sorted(self.context.items()))
            return f"{base} ({details})"
        return base


@dataclass(frozen=True)
class QuadratureSpec:
    """Evaluation knobs for the i1/i2 integrals.

    node_count Gauss-Hermite nodes against the standard normal weight,
    with a doubled-node error estimate; points that miss target_abs_tol
    fall back to adaptive quadrature truncated at +-truncation standard
    deviations.
    """

    node_count: int = 200
    truncation: float = 8.0
    target_abs_tol: float = 1e-8

    def __post_init__(self) -> None:
        if self.node_count < 32:
            raise ValueError(f"node_count must be >= 32, got {self.node_count}")
        if not self.truncation >= 6.0:
            raise ValueError(f"truncation must be >= 6, got {self.truncation}")
        if not self.target_abs_tol > 0.0:
            raise ValueError("target_abs_tol must be positive")


DEFAULT_QUADRATURE = QuadratureSpec()


@dataclass(frozen=True)
class ReducedParams:
    """Dimensionless parameter bundle of the averaged problem at one t."""

    u: float
    y: float
    w: float
    sbar: float
    spair: float

    def __post_init__(self) -> None:
        if not self.spair > 0.0:
            raise ValueError("reduced variables require sigma_pair > 0")
        # cov**2 <= var * var_bar, i.e. w**2 <= (sbar/spair)**2
        bound = (self.sbar / self.spair) ** 2
        if self.w**2 > bound * (1.0 + 1e-12) + 1e-15:
            raise ValueError(
                f"w={self.w} violates the covariance bound |w| <= sbar/spair"
            )


def reduced(sigmas: DotSigmas, spec: ExperimentSpec, t: float) -> ReducedParams:
    """Reduced variables of the experiment at time t."""
    stats = effective_pair_stats(sigmas, spec.prepared_pair, spec.pulsed_pair)
    s = stats.sigma_pair
    if s <= 0.0:
        raise ValueError("pulsed pair has zero field spread; no reduced form")
    return ReducedParams(
        u=s * t, y=spec.j / s, w=stats.cov / s**2, sbar=stats.sigma_bar, spair=s
    )


@lru_cache(maxsize=64)
def _normal_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights with sum(w * f(x)) ~ E[f(X)] for X ~ N(0,1)."""
    x, w = special.roots_hermitenorm(n)
    return x, w / _SQRT_2PI


def _gauss(exponent: np.ndarray | float) -> np.ndarray | float:
    """exp(-exponent) for exponent >= 0, clamped against underflow."""
    return np.exp(np.maximum(-np.asarray(exponent, dtype=float), _EXP_FLOOR))


def _i1_nodes(u: np.ndarray, y: float, n: int) -> np.ndarray:
    x, wt = _normal_nodes(n)
    s = np.hypot(x, y)
    z = np.multiply.outer(u, s) / 2.0
    core = np.sinc(z / np.pi) ** 2
    return (y * u) ** 2 / 4.0 * (core @ wt)


def _i2_nodes(u: np.ndarray, y: float, w: float, n: int) -> np.ndarray:
    x, wt = _normal_nodes(n)
    s = np.hypot(x, y)
    # x/s -> 0 as x -> 0 is the correct limit of the odd kernel piece.
    ratio = np.divide(x, s, out=np.zeros_like(x), where=s > 0.0)
    xu = np.multiply.outer(u, x)
    kern = np.cos(w * xu) - 1j * ratio * np.sin(w * xu)
    phase = np.exp(0.5j * np.multiply.outer(u, s - y))
    return (kern * phase) @ wt


def _i1_quad(u: float, y: float, q: QuadratureSpec) -> tuple[float, float]:
    pref = (y * u) ** 2 / 4.0
    if pref == 0.0:
        return 0.0, 0.0

    def f(x: float) -> float:
        z = math.hypot(x, y) * u / 2.0
        core = 1.0 if z == 0.0 else math.sin(z) / z
        return core * core * math.exp(-x * x / 2.0) / _SQRT_2PI

    tol = max(q.target_abs_tol / pref, 1e-14)
    val, err = integrate.quad(f, -q.truncation, q.truncation, epsabs=tol, epsrel=0.0, limit=800)
    return pref * val, pref * err


def _i2_quad(u: float, y: float, w: float, q: QuadratureSpec) -> tuple[complex, float]:
    def f(x: float, part: int) -> float:
        s = math.hypot(x, y)
        ratio = 0.0 if s == 0.0 else x / s
        kern = complex(math.cos(w * x * u), -ratio * math.sin(w * x * u))
        val = kern * complex(math.cos((s - y) * u / 2.0), math.sin((s - y) * u / 2.0))
        comp = val.real if part == 0 else val.imag
        return comp * math.exp(-x * x / 2.0) / _SQRT_2PI

    tol = q.target_abs_tol / 2.0
    re, re_err = integrate.quad(f, -q.truncation, q.truncation, args=(0,), epsabs=tol, epsrel=0.0, limit=800)
    im, im_err = integrate.quad(f, -q.truncation, q.truncation, args=(1,), epsabs=tol, epsrel=0.0, limit=800)
    return complex(re, im), math.hypot(re_err, im_err)


def _refine(
    u: np.ndarray,
    node_eval: Callable[[int], np.ndarray],
    point_quad: Callable[[float], tuple[complex, float]],
    q: QuadratureSpec,
    label: str,
) -> np.ndarray:
    """Doubled-node error estimate with per-point adaptive fallback."""
    coarse = node_eval(q.node_count)
    fine = node_eval(2 * q.node_count)
    vals = np.array(fine)
    drift = np.abs(fine - coarse)
    for idx in np.flatnonzero(drift > q.target_abs_tol):
        val, err = point_quad(float(u[idx]))
        if err > q.target_abs_tol:
            raise QuadratureError(
                f"{label} did not converge to target_abs_tol",
                label=label,
                u=float(u[idx]),
                node_drift=float(drift[idx]),
                fallback_error=float(err),
                target_abs_tol=q.target_abs_tol,
            )
        vals[idx] = val
    return vals


def i1(u: float, y: float, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """First reduced integral: the incoherent leakage-return weight.

    (yu)^2/4 times the normal average of sinc^2(sqrt(x^2+y^2) u / 2),
    with sinc z = sin(z)/z and sinc 0 = 1.
    """
    if not (u >= 0.0 and y >= 0.0):
        raise ValueError(f"i1 requires u >= 0 and y >= 0, got u={u}, y={y}")
    return float(_i1_refined(np.atleast_1d(float(u)), float(y), quad)[0])


def _i1_refined(u: np.ndarray, y: float, quad: QuadratureSpec) -> np.ndarray:
    return _refine(
        u,
        lambda n: _i1_nodes(u, y, n),
        lambda ui: _i1_quad(ui, y, quad),
        quad,
        "i1",
    ).real


def i2(u: float, y: float, w: float, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> complex:
    """Second reduced integral: the coherent return amplitude kernel.

    Normal average of [cos(wxu) - i x sin(wxu)/sqrt(x^2+y^2)] times the
    phase exp(i (sqrt(x^2+y^2) - y) u / 2); i2(0, y, w) = 1.
    """
    if not (u >= 0.0 and y >= 0.0):
        raise ValueError(f"i2 requires u >= 0 and y >= 0, got u={u}, y={y}")
    if not math.isfinite(w):
        raise ValueError(f"i2 requires finite w, got {w}")
    return complex(_i2_refined(np.atleast_1d(float(u)), float(y), float(w), quad)[0])


def _i2_refined(u: np.ndarray, y: float, w: float, quad: QuadratureSpec) -> np.ndarray:
    return _refine(
        u,
        lambda n: _i2_nodes(u, y, w, n),
        lambda ui: _i2_quad(ui, y, w, quad),
        quad,
        "i2",
    )


def _as_times(t: Any) -> tuple[np.ndarray, bool]:
    arr = np.asarray(t, dtype=float)
    scalar = arr.ndim == 0
    flat = np.atleast_1d(arr)
    if flat.size and (not np.all(np.isfinite(flat)) or np.any(flat < 0.0)):
        raise ValueError("times must be finite and >= 0")
    return flat, scalar


def _maybe_scalar(values: np.ndarray, scalar: bool) -> Any:
    return float(values[0]) if scalar else values


def p0_exact(
    sigmas: DotSigmas,
    spec: ExperimentSpec,
    t: Any,
    quad: QuadratureSpec = DEFAULT_QUADRATURE,
) -> Any:
    """Quadrature evaluation of the averaged return probability.

    Exact up to quadrature tolerance; the only model content is the
    Gaussian field average.  Accepts a scalar t or an array of times.
    """
    ts, scalar = _as_times(t)
    r = reduced(sigmas, spec, 0.0)
    u = r.spair * ts
    i1v = _i1_refined(u, r.y, quad)
    i2v = _i2_refined(u, r.y, r.w, quad)
    envelope = _gauss((r.sbar**2 - r.w**2 * r.spair**2) * ts**2 / 2.0)
    coherent = np.real((1.0 + np.exp(1j * spec.j * ts)) * i2v)
    vals = 0.5 - i1v / 4.0 + 0.25 * envelope * coherent
    return _maybe_scalar(vals, scalar)


def p0_zero_j(sigmas: DotSigmas, spec: ExperimentSpec, t: Any) -> Any:
    """Zero-exchange closed form: pure prepared-pair Gaussian dephasing.

    (1 + exp(-(sigma_prep t)^2 / 2)) / 2 with sigma_prep the prepared
    in-pair difference deviation; the outside dot drops out entirely.
    Evaluates the jn = 0 form regardless of spec.j.
    """
    ts, scalar = _as_times(t)
    prep = pair_stats(sigmas, spec.prepared_pair).sigma_pair
    vals = 0.5 * (1.0 + _gauss(prep**2 * ts**2 / 2.0))
    return _maybe_scalar(vals, scalar)


def p0_inf_j(sigmas: DotSigmas, spec: ExperimentSpec, t: Any) -> Any:
    """Infinite-exchange limit: 3/8 offset plus two equal oscillations.

    3/8 + cos(jn t)/8 + (1 + cos(jn t))/4 * exp(-(sigma_bar t)^2 / 2);
    only the second oscillation dephases, with effective T2* of
    sqrt(2)/sigma_bar independent of jn.
    """
    if not spec.j > 0.0:
        raise ValueError("p0_inf_j requires jn > 0")
    ts, scalar = _as_times(t)
    sbar = effective_pair_stats(sigmas, spec.prepared_pair, spec.pulsed_pair).sigma_bar
    osc = np.cos(spec.j * ts)
    vals = 3.0 / 8.0 + osc / 8.0 + (1.0 + osc) / 4.0 * _gauss(sbar**2 * ts**2 / 2.0)
    return _maybe_scalar(vals, scalar)


def width_a(t: Any, xi: float, w: float, spair: float) -> Any:
    """Width function 1/sqrt(1 + [(spair^2 t / xi)(1 + 2w)]^2).

    Controls the slow amplitude decay and phase pull of the
    high-exchange corrections; xi is the relevant exchange scale.
    """
    if xi == 0.0:
        raise ValueError("width_a requires xi != 0")
    ts = np.asarray(t, dtype=float)
    vals = 1.0 / np.sqrt(1.0 + ((spair**2 * ts / xi) * (1.0 + 2.0 * w)) ** 2)
    return float(vals) if ts.ndim == 0 else vals


def big_f(x: Any) -> Any:
    """sqrt(2 pi) x e^{x^2} erfc(x), via the scaled erfcx (no overflow).

    Monotone on x >= 0, big_f(0) = 0, and -> sqrt(2) as x -> infinity.
    """
    xs = np.asarray(x, dtype=float)
    vals = _SQRT_2PI * xs * special.erfcx(xs)
    return float(vals) if xs.ndim == 0 else vals


def p0_high_j(sigmas: DotSigmas, spec: ExperimentSpec, t: Any) -> Any:
    """First-order high-exchange approximation (validity jn >~ 3 spair).

    Closed-form corrections to the infinite-exchange limit: the
    incoherent term gains the big_f(y/sqrt 2) envelope with width
    width_a(t, jn, 0), the coherent term the width_a(t, 2 jn, .) pair
    and the phase pull phi.  The phase's quadratic term is evaluated as
    w^2 [1 - A^2] with w the dimensionless covariance ratio -- the only
    reading that keeps the expression dimensionless -- and the envelope
    convention of big_f is kept as is even though it overshoots the
    exact oscillation amplitude by sqrt(2) deep in the high-exchange
    regime; curves from this function are approximation-regime by
    construction and are validated against p0_exact with a calibrated
    tolerance rather than trusted blindly.
    """
    if not spec.j > 0.0:
        raise ValueError("p0_high_j requires jn > 0")
    ts, scalar = _as_times(t)
    r = reduced(sigmas, spec, 0.0)
    jn = spec.j
    cov = r.w * r.spair**2

    a1 = width_a(ts, jn, 0.0, r.spair)
    a20 = width_a(ts, 2.0 * jn, 0.0, r.spair)
    a2w = width_a(ts, 2.0 * jn, r.w, r.spair)

    i1_approx = big_f(r.y / math.sqrt(2.0)) * (
        1.0 - np.sqrt(a1) * np.cos(jn * ts + 0.5 * np.arccos(a1))
    ) / 2.0

    phi = 1.5 * np.arccos(a20) - np.arccos(a2w) - r.w**2 * (1.0 - a20**2)
    coherent = (
        a20**1.5
        / a2w
        * _gauss(a20**2 * cov**2 * ts**2 / (2.0 * r.spair**2))
        * (np.cos(phi) + np.cos(jn * ts + phi))
    )
    envelope = _gauss((r.sbar**2 - r.w**2 * r.spair**2) * ts**2 / 2.0)
    vals = 0.5 - i1_approx / 4.0 + 0.25 * envelope * coherent
    return _maybe_scalar(vals, scalar)


def p0_low_j(sigmas: DotSigmas, spec: ExperimentSpec, t: Any) -> Any:
    """Quadratic small-exchange expansion (validity jn <~ 0.5 spair).

    Leading bracket (1 + cos(jn t / 2) exp(-(sbar t)^2/2)) / 2 plus the
    y^2 corrections from the incoherent integral and from the coherent
    kernel's curvature,

        (y^2/8) [1 - e^{-u^2/2} - sqrt(pi/2) u erf(u/sqrt 2)]
        + (1/2) cos(jn t/2) E y^2 [ (e^{-q^2 u^2/2} - e^{-p^2 u^2/2})/4
            - sqrt(pi/2) (u p / 4)(erf(pu/sqrt 2) + erf(qu/sqrt 2)) ]

    with p = 1/2 - w, q = 1/2 + w and E the coherent envelope of
    p0_exact.  The closed form is kept exactly in this shape: note the
    leading exponent carries the cross-pair deviation sbar rather than
    the prepared-pair width, so for generic sigmas the jn -> 0 limit
    differs from p0_zero_j by up to a few percent (the two coincide
    when cov = spair^2/4); and the curvature bracket is not the exact
    y^2 derivative of the quadrature curve (the exact one swaps p and q
    between the Gaussian difference and the erf prefactor).  Accuracy
    is therefore pinned empirically by regression against p0_exact
    rather than claimed from the expansion order; see the tests for
    the measured deviation bounds.
    """
    ts, scalar = _as_times(t)
    r = reduced(sigmas, spec, 0.0)
    u = r.spair * ts
    y = r.y
    p = 0.5 - r.w
    q = 0.5 + r.w

    half_osc = np.cos(spec.j * ts / 2.0)
    lead = 0.5 * (1.0 + half_osc * _gauss(r.sbar**2 * ts**2 / 2.0))

    incoherent = (y**2 / 8.0) * (
        1.0 - _gauss(u**2 / 2.0) - _SQRT_HALF_PI * u * special.erf(u / math.sqrt(2.0))
    )

    curvature = 0.25 * (_gauss(q**2 * u**2 / 2.0) - _gauss(p**2 * u**2 / 2.0)) - (
        _SQRT_HALF_PI * u * p / 4.0
    ) * (special.erf(p * u / math.sqrt(2.0)) + special.erf(q * u / math.sqrt(2.0)))
    envelope = _gauss((r.sbar**2 - r.w**2 * r.spair**2) * ts**2 / 2.0)
    vals = lead + incoherent + 0.5 * half_osc * envelope * y**2 * curvature
    return _maybe_scalar(vals, scalar)


def curve(
    method: str,
    sigmas: DotSigmas,
    spec: ExperimentSpec,
    quad: QuadratureSpec = DEFAULT_QUADRATURE,
) -> Curve:
    """Evaluate one analytic method on the experiment's time grid.

    Returns a Curve tagged with the method name; approximation-regime
    methods additionally carry validity flags when the exchange falls
    outside their documented domain.
    """
    if method not in CURVE_METHODS:
        raise ValueError(f"method must be one of {CURVE_METHODS}, got {method!r}")
    ts = spec.time_grid
    stats = effective_pair_stats(sigmas, spec.prepared_pair, spec.pulsed_pair)
    flags: list[str] = []
    meta: dict[str, Any] = {
        "j": spec.j,
        "sigmas": (sigmas.sigma1, sigmas.sigma2, sigmas.sigma3),
        "prepared_pair": spec.prepared_pair.name,
        "pulsed_pair": spec.pulsed_pair.name,
    }
    if stats.sigma_pair > 0.0:
        meta["y"] = spec.j / stats.sigma_pair
        meta["w"] = stats.cov / stats.sigma_pair**2

    if method == "quadrature":
        vals = p0_exact(sigmas, spec, ts, quad)
        meta["node_count"] = quad.node_count
    elif method == "zero_j":
        vals = p0_zero_j(sigmas, spec, ts)
        if spec.j != 0.0:
            flags.append("nonzero-jn-ignored")
    elif method == "inf_j":
        vals = p0_inf_j(sigmas, spec, ts)
    elif method == "high_j":
        vals = p0_high_j(sigmas, spec, ts)
        flags.append("approximation-regime")
        if meta.get("y", math.inf) < HIGH_J_MIN_RATIO:
            flags.append("jn-below-high-j-domain")
    else:
        vals = p0_low_j(sigmas, spec, ts)
        flags.append("approximation-regime")
        if meta.get("y", 0.0) > LOW_J_MAX_RATIO:
            flags.append("jn-above-low-j-domain")

    return Curve(times=ts, values=vals, method=method, meta=meta, flags=tuple(flags))
