"""Least-squares extraction of decay constants from return-probability traces.

Two forward models are fit: a pure Gaussian dephasing decay (the
zero-exchange shape) yielding the prepared-pair width, and the
large-exchange oscillation shape yielding the exchange frequency and
the cross-pair width.  A linear solver then combines several fitted
constants into the three per-dot field variances.  Everything here is
dimensionless; unit conversion happens at the CLI boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

import numpy as np
from scipy.optimize import least_squares

#: Linear forms of the measurable squared widths in the per-dot field
#: variances (a, b, c) = (sigma1^2, sigma2^2, sigma3^2): an in-pair
#: width is the sum of the pair's variances, a cross-pair width is the
#: outside variance plus a quarter of the pair's sum.
MEASUREMENT_FORMS: dict[str, tuple[float, float, float]] = {
    "sigma12": (1.0, 1.0, 0.0),
    "sigma23": (0.0, 1.0, 1.0),
    "sigma_bar12": (0.25, 0.25, 1.0),
    "sigma_bar23": (1.0, 0.25, 0.25),
}

#: Fewer points per oscillation period than this gets an undersampling flag.
MIN_POINTS_PER_PERIOD = 8.0


class UnderdeterminedError(ValueError):
    """The measurement set does not pin all three dot variances."""

    def __init__(self, message: str, missing: tuple[str, ...]) -> None:
        super().__init__(message)
        self.missing = missing


@dataclass(frozen=True)
class Trace:
    """A sampled return-probability trace.

    weights, when given, are per-point inverse variances.  Fits require
    at least 8 points and a strictly increasing time axis.
    """

    times: np.ndarray
    values: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape:
            raise ValueError("times and values must be matching 1-d arrays")
        if times.size < 8:
            raise ValueError(f"fits need >= 8 points, got {times.size}")
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("times must be strictly increasing")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise ValueError("times and values must be finite")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if self.weights is not None:
            weights = np.asarray(self.weights, dtype=float)
            if weights.shape != times.shape:
                raise ValueError("weights must match times in shape")
            if not np.all(np.isfinite(weights)) or np.any(weights <= 0.0):
                raise ValueError("weights must be finite and positive")
            weights.setflags(write=False)
            object.__setattr__(self, "weights", weights)

    @property
    def span(self) -> float:
        return float(self.times[-1] - self.times[0])

    def root_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.ones_like(self.times)
        return np.sqrt(self.weights)


@dataclass(frozen=True)
class FitResult:
    """Outcome of one least-squares fit.

    params holds the named parameter estimates; param_stderr is empty
    unless the fit converged (estimated from the local quadratic model
    at the solution).  n_iter counts solver model evaluations.
    """

    params: dict[str, float]
    residual_rms: float
    param_stderr: dict[str, float]
    converged: bool
    n_iter: int
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.residual_rms < 0.0:
            raise ValueError("residual_rms must be >= 0")
        if not self.converged and self.param_stderr:
            raise ValueError("stderr is only reported for converged fits")


@dataclass(frozen=True)
class SigmaSolution:
    """Per-dot field variances solved from measured widths.

    sigma_sq is reported even when some component comes out negative;
    feasible is false in that case (beyond the stderr slack).
    """

    sigma_sq: tuple[float, float, float]
    feasible: bool
    stderr_sq: tuple[float, float, float]
    residual_rms: float

    @property
    def sigmas(self) -> tuple[float, float, float]:
        """Root variances, with infeasible components mapped to nan."""
        return tuple(math.sqrt(v) if v >= 0.0 else math.nan for v in self.sigma_sq)


def _stderr_from_jacobian(
    jac: np.ndarray, residuals: np.ndarray, names: tuple[str, ...]
) -> dict[str, float]:
    """Parameter standard errors from the local quadratic model.

    jac and residuals are the weighted quantities at the solution; the
    covariance is the scaled pseudo-inverse of J^T J, so parameters the
    data does not constrain get stderr inf rather than an exception.
    """
    n, p = jac.shape
    dof = max(n - p, 1)
    scale = float(residuals @ residuals) / dof
    jtj = jac.T @ jac
    try:
        cov = np.linalg.inv(jtj) * scale
    except np.linalg.LinAlgError:
        cov = np.full((p, p), np.inf)
    diag = np.diag(cov)
    return {
        name: float(math.sqrt(v)) if v >= 0.0 else math.inf
        for name, v in zip(names, diag)
    }


def fit_dephasing(trace: Trace) -> FitResult:
    """Fit offset + amplitude * exp(-(sigma t)^2 / 2) to a trace.

    For the standard preparation this recovers the prepared-pair width
    sigma12; amplitude and offset are left free to absorb readout
    imperfections (ideal values are both 1/2).  Non-convergence is
    reported in the result, never raised.
    """
    t, v = trace.times, trace.values
    rw = trace.root_weights()

    tail = float(np.mean(v[3 * v.size // 4 :]))
    amp0 = float(v[0] - tail)
    # first crossing of one decay constant sets the initial width
    target = tail + amp0 * math.exp(-0.5)
    below = np.flatnonzero(v <= target) if amp0 > 0 else np.array([], dtype=int)
    if below.size and t[below[0]] > 0.0:
        sigma0 = 1.0 / float(t[below[0]])
    else:
        sigma0 = 2.0 / max(trace.span, 1e-12)

    def model(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        sigma, amp, off = theta
        g = np.exp(-((sigma * t) ** 2) / 2.0)
        f = off + amp * g
        jac = np.column_stack((-amp * g * sigma * t**2, g, np.ones_like(t)))
        return f, jac

    def resid(theta: np.ndarray) -> np.ndarray:
        return rw * (model(theta)[0] - v)

    def jac(theta: np.ndarray) -> np.ndarray:
        return rw[:, None] * model(theta)[1]

    x0 = np.array([max(sigma0, 1e-6), amp0 if amp0 != 0.0 else 1e-3, tail])
    res = least_squares(
        resid,
        x0,
        jac=jac,
        bounds=([0.0, -np.inf, -np.inf], [np.inf, np.inf, np.inf]),
        method="trf",
    )
    names = ("sigma_pair", "amplitude", "offset")
    params = dict(zip(names, (float(x) for x in res.x)))
    converged = bool(res.success)

    flags: list[str] = []
    if abs(params["amplitude"]) < 1e-6 * max(1.0, abs(params["offset"])):
        flags.append("amplitude-near-zero")
    if params["sigma_pair"] * trace.span < 2.0:
        flags.append("short-trace")

    stderr = (
        _stderr_from_jacobian(res.jac, res.fun, names) if converged else {}
    )
    rms = float(np.sqrt(np.mean((model(res.x)[0] - v) ** 2)))
    return FitResult(params, rms, stderr, converged, int(res.nfev), tuple(flags))


def estimate_j(trace: Trace) -> float:
    """Dominant oscillation frequency of a trace, from an FFT peak.

    The trace is resampled onto a uniform grid, mean-removed, and the
    strongest nonzero Fourier mode is returned as an angular frequency.
    Used as the default exchange guess for fit_rabi.
    """
    n = max(trace.times.size, 256)
    tu = np.linspace(trace.times[0], trace.times[-1], n)
    vu = np.interp(tu, trace.times, trace.values)
    vu = vu - vu.mean()
    spectrum = np.abs(np.fft.rfft(vu))
    freqs = 2.0 * math.pi * np.fft.rfftfreq(n, d=tu[1] - tu[0])
    if spectrum.size < 2:
        return 0.0
    peak = 1 + int(np.argmax(spectrum[1:]))
    return float(freqs[peak])


def _rabi_design(t: np.ndarray, j: float, sbar: float) -> np.ndarray:
    osc = np.cos(j * t)
    g = np.exp(-((sbar * t) ** 2) / 2.0)
    return np.column_stack((np.ones_like(t), osc, (1.0 + osc) * g))


def fit_rabi(trace: Trace, j_guess: float | None = None) -> FitResult:
    """Fit c0 + c1 cos(Jt) + c2 (1 + cos(Jt)) e^{-(sbar t)^2/2}.

    This is the large-exchange oscillation shape with its three
    amplitudes left free (ideal values 3/8, 1/8, 1/4); J and the
    cross-pair width sbar are the physical outputs -- sbar is the
    (2,3) cross width for the standard preparation and the (1,2) one
    for the swapped experiment, whichever generated the data.

    The frequency is located by a residual scan over a J grid before
    local refinement, so a wrong j_guess cannot alias the fit into a
    harmonic silently; a second, well-separated landscape minimum
    within 5% of the best residual is flagged.
    """
    t, v = trace.times, trace.values
    rw = trace.root_weights()
    span = max(trace.span, 1e-12)
    dt_med = float(np.median(np.diff(t)))

    j0 = float(j_guess) if j_guess is not None else estimate_j(trace)
    flags: list[str] = []
    if j0 > 0.0 and 2.0 * math.pi / (j0 * dt_med) < MIN_POINTS_PER_PERIOD:
        flags.append("oscillation-undersampled")

    # --- landscape scan: linear subproblem in the amplitudes at each (J, sbar)
    j_nyquist = math.pi / dt_med
    j_grid = np.linspace(math.pi / span, j_nyquist, 121)
    if j0 > 0.0:
        j_grid = np.union1d(j_grid, j0 * np.linspace(0.5, 1.5, 21))
    sbar_grid = np.array([0.5, 1.0, 2.0, 4.0, 8.0]) / span

    best = None
    scan_cost = np.full(j_grid.size, np.inf)
    for idx, jc in enumerate(j_grid):
        for sc in sbar_grid:
            design = rw[:, None] * _rabi_design(t, jc, sc)
            coef, *_ = np.linalg.lstsq(design, rw * v, rcond=None)
            cost = float(np.sum((design @ coef - rw * v) ** 2))
            if cost < scan_cost[idx]:
                scan_cost[idx] = cost
            if best is None or cost < best[0]:
                best = (cost, jc, sc, coef)
    assert best is not None
    _, jb, sb, cb = best

    min_idx = int(np.argmin(scan_cost))
    separation = max(0.5 * 2.0 * math.pi / span, 0.05 * j_grid[min_idx])
    rivals = (scan_cost <= 1.05 * scan_cost[min_idx] + 1e-30) & (
        np.abs(j_grid - j_grid[min_idx]) > separation
    )
    if np.any(rivals):
        flags.append("j-aliasing-suspected")

    def model(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        j, sbar, c0, c1, c2 = theta
        osc = np.cos(j * t)
        sin = np.sin(j * t)
        g = np.exp(-((sbar * t) ** 2) / 2.0)
        f = c0 + c1 * osc + c2 * (1.0 + osc) * g
        jac = np.column_stack(
            (
                -t * sin * (c1 + c2 * g),
                -c2 * (1.0 + osc) * g * sbar * t**2,
                np.ones_like(t),
                osc,
                (1.0 + osc) * g,
            )
        )
        return f, jac

    def resid(theta: np.ndarray) -> np.ndarray:
        return rw * (model(theta)[0] - v)

    def jac(theta: np.ndarray) -> np.ndarray:
        return rw[:, None] * model(theta)[1]

    x0 = np.array([jb, sb, cb[0], cb[1], cb[2]])
    lower = [0.0, 0.0, -np.inf, -np.inf, -np.inf]
    res = least_squares(resid, x0, jac=jac, bounds=(lower, np.inf), method="trf")
    names = ("j", "sigma_bar", "offset", "cos_amp", "env_amp")
    params = dict(zip(names, (float(x) for x in res.x)))
    converged = bool(res.success)

    if params["j"] * span < math.pi:
        # less than half an oscillation period in the window
        flags.append("oscillation-unresolvable")

    stderr = _stderr_from_jacobian(res.jac, res.fun, names) if converged else {}
    rms = float(np.sqrt(np.mean((model(res.x)[0] - v) ** 2)))
    return FitResult(params, rms, stderr, converged, int(res.nfev), tuple(flags))


def _normalize_measurements(
    measurements: Mapping[str, float] | Iterable[Any],
) -> list[tuple[str, float, float | None]]:
    items: list[tuple[str, float, float | None]] = []
    if isinstance(measurements, Mapping):
        entries: Iterable[Any] = measurements.items()
    else:
        entries = measurements
    for entry in entries:
        kind, value, *rest = entry
        stderr = rest[0] if rest else None
        if kind not in MEASUREMENT_FORMS:
            raise ValueError(
                f"unknown measurement kind {kind!r}; expected one of "
                f"{sorted(MEASUREMENT_FORMS)}"
            )
        value = float(value)
        if not math.isfinite(value) or value < 0.0:
            raise ValueError(f"{kind} must be a finite width >= 0, got {value}")
        if stderr is not None:
            stderr = float(stderr)
            if not math.isfinite(stderr) or stderr < 0.0:
                raise ValueError(f"{kind} stderr must be finite and >= 0")
        items.append((kind, value, stderr))
    return items


def solve_sigmas(
    measurements: Mapping[str, float] | Iterable[Any],
) -> SigmaSolution:
    """Solve the per-dot variances from measured pair widths.

    measurements is a mapping kind -> width or an iterable of
    (kind, width[, stderr]) with kinds from MEASUREMENT_FORMS; widths
    are the linear sigmas the fits produce and are squared internally,
    as are their stderrs (linear error propagation).  At least three
    independent forms are required; repeated or redundant kinds give a
    weighted least-squares solution with a reported residual.

    Raises UnderdeterminedError naming the measurement kinds that
    would complete the system when the forms span less than rank 3.
    """
    items = _normalize_measurements(measurements)
    present = {kind for kind, _, _ in items}
    rows = np.array([MEASUREMENT_FORMS[k] for k, _, _ in items], dtype=float)
    rank = np.linalg.matrix_rank(rows) if items else 0
    if rank < 3:
        missing = tuple(
            kind
            for kind, form in MEASUREMENT_FORMS.items()
            if kind not in present
            and np.linalg.matrix_rank(np.vstack([rows, form]) if items else [form])
            > rank
        )
        raise UnderdeterminedError(
            f"measurements {sorted(present)} span rank {rank} < 3; "
            f"adding any of {list(missing)} would complete the system",
            missing,
        )

    values_sq = np.array([value**2 for _, value, _ in items])
    # var(sigma^2) = (2 sigma stderr)^2; unit weights where no stderr given
    errs_sq = np.array(
        [
            2.0 * value * stderr if stderr is not None else 0.0
            for _, value, stderr in items
        ]
    )
    if np.any(errs_sq > 0.0):
        floor = max(errs_sq[errs_sq > 0.0].min() * 1e-6, 1e-300)
        rw = 1.0 / np.maximum(errs_sq, floor)
    else:
        rw = np.ones(len(items))

    design = rows * rw[:, None]
    rhs = values_sq * rw
    solution, *_ = np.linalg.lstsq(design, rhs, rcond=None)
    residuals = rows @ solution - values_sq
    rms = float(np.sqrt(np.mean(residuals**2)))

    cov = np.linalg.inv(design.T @ design)
    if not np.any(errs_sq > 0.0) and len(items) > 3:
        cov = cov * float(rhs @ rhs - rhs @ design @ solution) / (len(items) - 3)
    elif not np.any(errs_sq > 0.0):
        cov = cov * 0.0
    stderr_sq = tuple(float(math.sqrt(max(v, 0.0))) for v in np.diag(cov))

    slack = tuple(3.0 * s + 1e-12 * max(1.0, float(np.max(values_sq))) for s in stderr_sq)
    feasible = all(x >= -eps for x, eps in zip(solution, slack))
    return SigmaSolution(
        sigma_sq=tuple(float(x) for x in solution),
        feasible=bool(feasible),
        stderr_sq=stderr_sq,
        residual_rms=rms,
    )


def sigma3_sq_shortcut(sigma12: float, sigma_bar12: float) -> float:
    """Outside-dot variance from the swapped-pair constants alone.

    sigma3^2 = sigma_bar12^2 - sigma12^2 / 4 exactly, since the (1,2)
    cross width carries sigma3^2 plus a quarter of the (1,2) pair sum.
    This two-measurement shortcut exists only for this pairing; other
    pairs need a rank-3 measurement set (see solve_sigmas).
    """
    if sigma12 < 0.0 or sigma_bar12 < 0.0:
        raise ValueError("widths must be >= 0")
    return float(sigma_bar12**2 - sigma12**2 / 4.0)
