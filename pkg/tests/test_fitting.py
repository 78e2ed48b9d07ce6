"""Decay-constant fits and the variance solver."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tridot.analytic import p0_exact
from tridot.dynamics import ExperimentSpec
from tridot.fitting import (
    MEASUREMENT_FORMS,
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
from tridot.hyperfine import DotPair, DotSigmas, effective_pair_stats, pair_stats

FIG_SIGMAS = DotSigmas(0.5, 1.0, 1.5)


def _dephasing_values(t, sigma, amp=0.5, off=0.5):
    return off + amp * np.exp(-((sigma * t) ** 2) / 2.0)


def _rabi_values(t, j, sbar):
    osc = np.cos(j * t)
    return 3.0 / 8.0 + osc / 8.0 + (1.0 + osc) / 4.0 * np.exp(-((sbar * t) ** 2) / 2.0)


# ---------------------------------------------------------------- containers


def test_trace_validation():
    t = np.linspace(0.0, 1.0, 10)
    with pytest.raises(ValueError):
        Trace(t[:5], np.zeros(5))  # too short
    with pytest.raises(ValueError):
        Trace(t, np.zeros(9))
    with pytest.raises(ValueError):
        Trace(np.concatenate(([0.5], t[1:])), np.zeros(10))  # not increasing
    with pytest.raises(ValueError):
        Trace(t, np.full(10, np.nan))
    with pytest.raises(ValueError):
        Trace(t, np.zeros(10), weights=np.zeros(10))
    with pytest.raises(ValueError):
        Trace(t, np.zeros(10), weights=np.ones(9))
    tr = Trace(t, np.zeros(10), weights=4.0 * np.ones(10))
    assert tr.span == pytest.approx(1.0)
    assert np.allclose(tr.root_weights(), 2.0)
    assert np.allclose(Trace(t, np.zeros(10)).root_weights(), 1.0)


def test_trace_is_frozen():
    tr = Trace(np.linspace(0.0, 1.0, 10), np.zeros(10))
    with pytest.raises(ValueError):
        tr.values[0] = 1.0


def test_fit_result_invariants():
    with pytest.raises(ValueError):
        FitResult({}, -0.1, {}, True, 3)
    with pytest.raises(ValueError):
        FitResult({}, 0.0, {"a": 1.0}, False, 3)


def test_sigma_solution_sigmas_property():
    sol = SigmaSolution((0.25, -0.5, 4.0), False, (0.0, 0.0, 0.0), 0.0)
    s1, s2, s3 = sol.sigmas
    assert s1 == pytest.approx(0.5)
    assert math.isnan(s2)
    assert s3 == pytest.approx(2.0)


# ------------------------------------------------------------ dephasing fits


def test_fit_dephasing_noiseless_is_exact():
    t = np.linspace(0.0, 6.0, 200)
    sigma = pair_stats(FIG_SIGMAS, DotPair.P12).sigma_pair
    res = fit_dephasing(Trace(t, _dephasing_values(t, sigma)))
    assert res.converged
    assert res.params["sigma_pair"] == pytest.approx(sigma, rel=1e-6)
    assert res.params["amplitude"] == pytest.approx(0.5, abs=1e-8)
    assert res.params["offset"] == pytest.approx(0.5, abs=1e-8)
    assert res.flags == ()
    assert set(res.param_stderr) == {"sigma_pair", "amplitude", "offset"}


def test_fit_dephasing_with_noise():
    t = np.linspace(0.0, 6.0, 200)
    rng = np.random.default_rng(7)
    values = _dephasing_values(t, 1.118) + rng.normal(0.0, 0.005, t.size)
    res = fit_dephasing(Trace(t, values))
    assert res.converged
    assert res.params["sigma_pair"] == pytest.approx(1.118, rel=0.03)
    assert res.param_stderr["sigma_pair"] > 0.0


def test_fit_dephasing_flags_constant_trace():
    t = np.linspace(0.0, 6.0, 100)
    res = fit_dephasing(Trace(t, np.full(t.size, 0.62)))
    assert "amplitude-near-zero" in res.flags


def test_fit_dephasing_flags_short_trace():
    t = np.linspace(0.0, 0.5, 40)
    res = fit_dephasing(Trace(t, _dephasing_values(t, 1.0)))
    assert "short-trace" in res.flags
    # the fit itself is still fine on clean data
    assert res.params["sigma_pair"] == pytest.approx(1.0, rel=1e-6)


# ----------------------------------------------------------------- rabi fits


def test_fit_rabi_noiseless_is_exact():
    t = np.linspace(0.0, 8.0, 300)
    res = fit_rabi(Trace(t, _rabi_values(t, 4.0, 0.9)))
    assert res.converged
    assert res.params["j"] == pytest.approx(4.0, rel=1e-6)
    assert res.params["sigma_bar"] == pytest.approx(0.9, rel=1e-6)
    assert res.params["offset"] == pytest.approx(3.0 / 8.0, abs=1e-8)
    assert res.params["cos_amp"] == pytest.approx(1.0 / 8.0, abs=1e-8)
    assert res.params["env_amp"] == pytest.approx(1.0 / 4.0, abs=1e-8)
    assert res.flags == ()


def test_fit_rabi_on_quadrature_curve():
    """The oscillation shape extracts (jn, sbar) from the exact average."""
    s23 = pair_stats(FIG_SIGMAS, DotPair.P23).sigma_pair
    sbar = effective_pair_stats(FIG_SIGMAS, DotPair.P12, DotPair.P23).sigma_bar
    j = 10.0 * s23
    grid = np.linspace(0.0, 5.0 / sbar, 400)
    spec = ExperimentSpec(DotPair.P12, DotPair.P23, j, grid)
    res = fit_rabi(Trace(grid, p0_exact(FIG_SIGMAS, spec, grid)))
    assert res.converged
    assert res.params["j"] == pytest.approx(j, rel=0.01)
    assert res.params["sigma_bar"] == pytest.approx(sbar, rel=0.05)
    assert res.params["offset"] == pytest.approx(3.0 / 8.0, abs=0.01)
    assert res.params["cos_amp"] == pytest.approx(1.0 / 8.0, abs=0.01)


def test_estimate_j_finds_the_oscillation():
    t = np.linspace(0.0, 20.0, 400)
    guess = estimate_j(Trace(t, _rabi_values(t, 3.0, 0.5)))
    assert guess == pytest.approx(3.0, rel=0.1)


def test_fit_rabi_flags_undersampling():
    t = np.linspace(0.0, 10.0, 101)
    res = fit_rabi(Trace(t, 0.5 + 0.25 * np.cos(0.8 * t)), j_guess=40.0)
    assert "oscillation-undersampled" in res.flags


def test_fit_rabi_flags_unresolvable_window():
    t = np.linspace(0.0, 10.0, 64)
    res = fit_rabi(Trace(t, 0.5 + 0.2 * np.cos(0.25 * t)))
    assert "oscillation-unresolvable" in res.flags
    # half a period is still enough to read the frequency off clean data
    assert res.params["j"] == pytest.approx(0.25, rel=1e-3)


def test_fit_rabi_flags_degenerate_landscape():
    t = np.linspace(0.0, 10.0, 101)
    res = fit_rabi(Trace(t, np.full(t.size, 0.5)))
    assert "j-aliasing-suspected" in res.flags


# ------------------------------------------------------------- round tripping


def test_fit_round_trips_with_noise():
    """1%-noise synthetics across seeds land inside the stated bands."""
    t = np.linspace(0.0, 6.0, 300)
    rng_master = np.random.default_rng(2025)
    sigma_true, j_true, sbar_true = 1.25, 5.0, 0.8
    for seed in rng_master.integers(0, 2**31, size=10):
        rng = np.random.default_rng(seed)
        deph = _dephasing_values(t, sigma_true) + rng.normal(0.0, 0.01, t.size)
        res_d = fit_dephasing(Trace(t, deph))
        assert res_d.converged
        assert abs(res_d.params["sigma_pair"] - sigma_true) / sigma_true < 0.03

        rabi = _rabi_values(t, j_true, sbar_true) + rng.normal(0.0, 0.01, t.size)
        res_r = fit_rabi(Trace(t, rabi))
        assert res_r.converged
        assert abs(res_r.params["j"] - j_true) / j_true < 1e-3
        assert abs(res_r.params["sigma_bar"] - sbar_true) / sbar_true < 0.05


# -------------------------------------------------------------- sigma solver


def _widths(sigmas: DotSigmas) -> dict[str, float]:
    out = {}
    for kind, (a, b, c) in MEASUREMENT_FORMS.items():
        sq = a * sigmas.sigma1**2 + b * sigmas.sigma2**2 + c * sigmas.sigma3**2
        out[kind] = math.sqrt(sq)
    return out


def test_solve_sigmas_exact_from_consistent_widths():
    widths = _widths(FIG_SIGMAS)
    sol = solve_sigmas(
        {k: widths[k] for k in ("sigma12", "sigma23", "sigma_bar12")}
    )
    assert sol.feasible
    assert np.allclose(sol.sigma_sq, (0.25, 1.0, 2.25), atol=1e-12)
    assert np.allclose(sol.sigmas, (0.5, 1.0, 1.5), atol=1e-12)
    assert sol.residual_rms < 1e-12


def test_solve_sigmas_overdetermined_consistent():
    sol = solve_sigmas(_widths(FIG_SIGMAS))
    assert sol.feasible
    assert np.allclose(sol.sigma_sq, (0.25, 1.0, 2.25), atol=1e-10)
    assert sol.residual_rms < 1e-10


def test_solve_sigmas_accepts_tuples_with_stderr():
    widths = _widths(FIG_SIGMAS)
    sol = solve_sigmas(
        [
            ("sigma12", widths["sigma12"], 0.01),
            ("sigma23", widths["sigma23"], 0.02),
            ("sigma_bar23", widths["sigma_bar23"], 0.01),
        ]
    )
    assert sol.feasible
    assert np.allclose(sol.sigma_sq, (0.25, 1.0, 2.25), atol=1e-9)
    assert all(s > 0.0 for s in sol.stderr_sq)


def test_solve_sigmas_underdetermined_names_completions():
    widths = _widths(FIG_SIGMAS)
    with pytest.raises(UnderdeterminedError) as err:
        solve_sigmas({k: widths[k] for k in ("sigma12", "sigma_bar12")})
    assert set(err.value.missing) == {"sigma23", "sigma_bar23"}


def test_solve_sigmas_flags_infeasible():
    # widths that force sigma1^2 < 0
    sol = solve_sigmas(
        {
            "sigma12": math.sqrt(0.1),
            "sigma23": 2.0,
            "sigma_bar23": 0.1,
        }
    )
    assert not sol.feasible
    assert sol.sigma_sq[0] < 0.0
    assert math.isnan(sol.sigmas[0])


def test_solve_sigmas_rejects_bad_input():
    with pytest.raises(ValueError):
        solve_sigmas({"sigma14": 1.0})
    with pytest.raises(ValueError):
        solve_sigmas({"sigma12": -1.0})
    with pytest.raises(UnderdeterminedError):
        solve_sigmas({})


@given(st.floats(0.1, 10.0))
def test_solve_sigmas_scales_quadratically(scale):
    widths = {k: scale * v for k, v in _widths(FIG_SIGMAS).items()}
    sol = solve_sigmas(widths)
    expected = scale**2 * np.array([0.25, 1.0, 2.25])
    assert np.allclose(sol.sigma_sq, expected, rtol=1e-9)


def test_sigma3_shortcut():
    widths = _widths(FIG_SIGMAS)
    got = sigma3_sq_shortcut(widths["sigma12"], widths["sigma_bar12"])
    assert got == pytest.approx(2.25, abs=1e-12)
    with pytest.raises(ValueError):
        sigma3_sq_shortcut(-1.0, 1.0)
