"""End-to-end checks of the command-line verbs via main(argv)."""

import json
import math

import numpy as np
import pytest

from tridot.cli import main
from tridot.fitting import MEASUREMENT_FORMS

SIGMA12 = math.sqrt(1.25)
SIGMA23 = math.sqrt(3.25)
SIGMA_BAR12 = math.sqrt(2.5625)
SIGMA_BAR23 = math.sqrt(1.0625)


def _write_config(tmp_path, name="config.json", **overrides):
    path = tmp_path / name
    path.write_text(json.dumps(overrides))
    return str(path)


def _read_csv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(c) for c in line.split(",")] for line in lines[1:]])
    return header, data


def _stderr_json(capsys):
    err = capsys.readouterr().err
    return json.loads(err)


# ------------------------------------------------------------------- curve


def test_curve_csv_shape_and_values(tmp_path):
    config = _write_config(
        tmp_path,
        experiment={"j": 0.0, "time": {"start": 0.0, "stop": 4.0, "count": 9}},
        methods=["exact", "zero_j"],
    )
    out = tmp_path / "curves.csv"
    assert main(["curve", "--config", config, "--out", str(out)]) == 0
    header, data = _read_csv(out)
    assert header == ["t", "p0_exact", "p0_zero_j"]
    assert data.shape == (9, 3)
    assert data[0, 1] == pytest.approx(1.0, abs=1e-9)
    # at jn = 0 the two methods coincide
    assert np.max(np.abs(data[:, 1] - data[:, 2])) < 1e-6
    # unix newlines regardless of platform
    assert b"\r" not in out.read_bytes()


def test_curve_roundtrips_full_precision(tmp_path, capsys):
    config = _write_config(
        tmp_path,
        experiment={"j": 1.3, "grid": [0.0, 0.7, 1.9]},
        methods=["exact"],
    )
    assert main(["curve", "--config", config]) == 0
    lines = capsys.readouterr().out.splitlines()
    from tridot.analytic import p0_exact
    from tridot.dynamics import ExperimentSpec
    from tridot.hyperfine import DotPair, DotSigmas

    spec = ExperimentSpec(DotPair.P12, DotPair.P23, 1.3, np.array([0.0, 0.7, 1.9]))
    expected = p0_exact(DotSigmas(0.5, 1.0, 1.5), spec, spec.time_grid)
    for line, want in zip(lines[1:], expected):
        assert float(line.split(",")[1]) == want  # %.17g is lossless


def test_curve_single_point_grid(tmp_path, capsys):
    config = _write_config(
        tmp_path, experiment={"j": 2.0, "grid": [0.0]}, methods=["exact"]
    )
    assert main(["curve", "--config", config]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2
    assert float(lines[1].split(",")[1]) == pytest.approx(1.0, abs=1e-9)


def test_curve_mc_appends_stderr_column(tmp_path):
    config = _write_config(
        tmp_path,
        experiment={"j": 1.0, "time": {"start": 0.0, "stop": 5.0, "count": 20}},
        methods=["mc", "exact"],
        mc={"n_samples": 2000, "seed": 4, "workers": 1},
    )
    out = tmp_path / "mc.csv"
    assert main(["curve", "--config", config, "--out", str(out)]) == 0
    header, data = _read_csv(out)
    assert header == ["t", "p0_mc", "p0_exact", "mc_stderr"]
    assert data[0, 3] == 0.0
    assert np.all(data[1:, 3] > 0.0)


def test_curve_byte_identical_across_worker_counts(tmp_path):
    config = _write_config(
        tmp_path,
        experiment={"j": 1.0, "time": {"start": 0.0, "stop": 8.0, "count": 50}},
        methods=["mc"],
        mc={"n_samples": 10000, "seed": 5, "workers": 1},
    )
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["curve", "--config", config, "--out", str(a)]) == 0
    assert main(["curve", "--config", config, "--out", str(b), "--workers", "8"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_curve_seed_override_changes_values(tmp_path):
    config = _write_config(
        tmp_path,
        experiment={"j": 1.0, "time": {"start": 0.0, "stop": 5.0, "count": 20}},
        methods=["mc"],
        mc={"n_samples": 2000, "seed": 4, "workers": 1},
    )
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["curve", "--config", config, "--out", str(a), "--seed", "4"]) == 0
    assert main(["curve", "--config", config, "--out", str(b), "--seed", "400"]) == 0
    assert a.read_bytes() != b.read_bytes()


def test_curve_units_scale_time_column_only(tmp_path):
    config = _write_config(
        tmp_path, experiment={"j": 1.0, "grid": [0.0, 1.0, 2.0]}, methods=["exact"]
    )
    plain, gaas, custom = (tmp_path / n for n in ("p.csv", "g.csv", "c.csv"))
    assert main(["curve", "--config", config, "--out", str(plain)]) == 0
    assert main(["curve", "--config", config, "--out", str(gaas), "--units", "gaas"]) == 0
    assert (
        main(["curve", "--config", config, "--out", str(custom), "--units", "custom:25"])
        == 0
    )
    _, p = _read_csv(plain)
    _, g = _read_csv(gaas)
    _, c = _read_csv(custom)
    assert np.allclose(g[:, 0], 10.0 * p[:, 0])
    assert np.allclose(c[:, 0], 25.0 * p[:, 0])
    assert np.array_equal(g[:, 1], p[:, 1])


def test_curve_rejects_bad_units(tmp_path, capsys):
    config = _write_config(tmp_path, methods=["exact"])
    assert main(["curve", "--config", config, "--units", "fortnights"]) == 2
    assert _stderr_json(capsys)["code"] == "invalid-config"


# ------------------------------------------------------------------ compare


def test_compare_mc_against_exact_passes(tmp_path, capsys):
    config = _write_config(
        tmp_path,
        experiment={"j": 1.0, "time": {"start": 0.0, "stop": 8.0, "count": 60}},
        methods=["mc", "exact"],
        mc={"n_samples": 4000, "seed": 99, "workers": 2},
    )
    assert main(["compare", "--config", config]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["pass"] is True
    (pair,) = report["pairs"]
    assert {pair["a"], pair["b"]} == {"mc", "exact"}
    assert pair["max_z"] <= 3.0
    assert report["n_points"] == 60


def test_compare_off_domain_low_j_fails_with_note(tmp_path, capsys):
    """A low-exchange curve pushed far out of its domain misses the
    tolerance, and the report says why."""
    s23 = math.sqrt(3.25)
    config = _write_config(
        tmp_path,
        experiment={"j": 5.0 * s23, "time": {"start": 0.0, "stop": 6.0, "count": 120}},
        methods=["exact", "low_j"],
    )
    assert main(["compare", "--config", config]) == 0  # report emitted fine
    report = json.loads(capsys.readouterr().out)
    assert report["pass"] is False
    (pair,) = report["pairs"]
    assert pair["pass"] is False
    assert "jn-above-low-j-domain" in pair["notes"]


def test_compare_needs_two_methods(tmp_path, capsys):
    config = _write_config(tmp_path, methods=["exact"])
    assert main(["compare", "--config", config]) == 2
    assert _stderr_json(capsys)["code"] == "invalid-config"


# ---------------------------------------------------------------------- fit


def test_fit_dephasing_from_generated_curve(tmp_path, capsys):
    """curve -> fit round trip through the CSV boundary."""
    config = _write_config(
        tmp_path,
        experiment={"j": 0.0, "time": {"start": 0.0, "stop": 6.0, "count": 200}},
        methods=["exact"],
    )
    trace = tmp_path / "trace.csv"
    assert main(["curve", "--config", config, "--out", str(trace)]) == 0
    assert main(["fit", str(trace), "--model", "dephasing"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["converged"] is True
    assert result["params"]["sigma_pair"] == pytest.approx(SIGMA12, rel=0.01)
    assert result["model"] == "dephasing"
    assert result["units"] == "dimensionless"


def test_fit_rabi_with_guess(tmp_path, capsys):
    t = np.linspace(0.0, 8.0, 300)
    osc = np.cos(4.0 * t)
    vals = 3 / 8 + osc / 8 + (1 + osc) / 4 * np.exp(-((0.9 * t) ** 2) / 2)
    trace = tmp_path / "rabi.csv"
    trace.write_text(
        "t,p0\n" + "\n".join(f"{a},{b}" for a, b in zip(t, vals)) + "\n"
    )
    assert main(["fit", str(trace), "--model", "rabi", "--j-guess", "4.0"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["params"]["j"] == pytest.approx(4.0, rel=1e-4)
    assert result["params"]["sigma_bar"] == pytest.approx(0.9, rel=1e-3)


def test_fit_units_rescale_trace_times(tmp_path, capsys):
    """A trace recorded in ns fits to the same dimensionless width."""
    t = np.linspace(0.0, 6.0, 120)
    vals = 0.5 + 0.5 * np.exp(-((SIGMA12 * t) ** 2) / 2)
    trace = tmp_path / "ns.csv"
    trace.write_text(
        "t,p0\n" + "\n".join(f"{10.0 * a},{b}" for a, b in zip(t, vals)) + "\n"
    )
    assert main(["fit", str(trace), "--model", "dephasing", "--units", "gaas"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["params"]["sigma_pair"] == pytest.approx(SIGMA12, rel=1e-6)


def test_fit_rejects_short_trace(tmp_path, capsys):
    trace = tmp_path / "short.csv"
    trace.write_text("t,p0\n0,1\n1,0.9\n2,0.8\n")
    assert main(["fit", str(trace), "--model", "dephasing"]) == 2
    err = _stderr_json(capsys)
    assert err["code"] == "invalid-trace"
    assert ">= 8 points" in err["message"]


def test_fit_names_the_bad_cell(tmp_path, capsys):
    trace = tmp_path / "bad.csv"
    trace.write_text("t,p0\n0,1\n0.5,oops\n1,0.9\n")
    assert main(["fit", str(trace), "--model", "dephasing"]) == 2
    err = _stderr_json(capsys)
    assert err["code"] == "trace-parse"
    assert "row 3, column 2" in err["message"]


def test_fit_missing_file(tmp_path, capsys):
    assert main(["fit", str(tmp_path / "nope.csv"), "--model", "dephasing"]) == 2
    assert _stderr_json(capsys)["code"] == "trace-io"


# ------------------------------------------------------------- solve-sigmas


def test_solve_sigmas_full_system(tmp_path, capsys):
    config = _write_config(
        tmp_path,
        measurements=[
            {"kind": "sigma12", "value": SIGMA12},
            {"kind": "sigma23", "value": SIGMA23},
            {"kind": "sigma_bar12", "value": SIGMA_BAR12},
        ],
    )
    assert main(["solve-sigmas", "--config", config]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["feasible"] is True
    assert np.allclose(result["sigma_sq"], [0.25, 1.0, 2.25], atol=1e-12)
    assert np.allclose(result["sigmas"], [0.5, 1.0, 1.5], atol=1e-12)


def test_solve_sigmas_partial_shortcut(tmp_path, capsys):
    config = _write_config(
        tmp_path,
        measurements=[
            {"kind": "sigma12", "value": SIGMA12, "stderr": 0.01},
            {"kind": "sigma_bar12", "value": SIGMA_BAR12, "stderr": 0.02},
        ],
    )
    assert main(["solve-sigmas", "--config", config, "--partial", "sigma3"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["partial"]["sigma3_sq"] == pytest.approx(2.25, abs=1e-12)
    expected_err = math.hypot(2 * SIGMA_BAR12 * 0.02, 0.5 * SIGMA12 * 0.01)
    assert result["partial"]["stderr_sq"] == pytest.approx(expected_err)


def test_solve_sigmas_underdetermined_exit_code(tmp_path, capsys):
    config = _write_config(
        tmp_path,
        measurements=[
            {"kind": "sigma12", "value": SIGMA12},
            {"kind": "sigma_bar12", "value": SIGMA_BAR12},
        ],
    )
    assert main(["solve-sigmas", "--config", config]) == 5
    err = _stderr_json(capsys)
    assert err["code"] == "underdetermined"
    assert set(err["context"]["missing"]) == {"sigma23", "sigma_bar23"}


def test_solve_sigmas_rejects_unknown_kind(tmp_path, capsys):
    config = _write_config(
        tmp_path, measurements=[{"kind": "sigma13", "value": 1.0}] * 3
    )
    assert main(["solve-sigmas", "--config", config]) == 2
    assert sorted(MEASUREMENT_FORMS) == sorted(
        ["sigma12", "sigma23", "sigma_bar12", "sigma_bar23"]
    )


# ----------------------------------------------------------- config errors


def test_unknown_config_key_rejected(tmp_path, capsys):
    config = _write_config(tmp_path, experiments={"j": 1.0})
    assert main(["curve", "--config", config]) == 2
    err = _stderr_json(capsys)
    assert err["code"] == "invalid-config"
    assert "experiments" in err["message"]


def test_unknown_nested_key_rejected(tmp_path, capsys):
    config = _write_config(tmp_path, mc={"n_samples": 100, "sede": 1})
    assert main(["curve", "--config", config]) == 2
    assert "sede" in _stderr_json(capsys)["message"]


def test_grid_and_time_are_mutually_exclusive(tmp_path, capsys):
    config = _write_config(
        tmp_path,
        experiment={
            "j": 0.0,
            "grid": [0.0, 1.0],
            "time": {"start": 0.0, "stop": 2.0, "count": 5},
        },
    )
    assert main(["curve", "--config", config]) == 2
    assert "mutually exclusive" in _stderr_json(capsys)["message"]


def test_bad_method_rejected(tmp_path, capsys):
    config = _write_config(tmp_path, methods=["exact"])
    assert main(["curve", "--config", config, "--method", "exact,magic"]) == 2
    assert "magic" in _stderr_json(capsys)["message"]


def test_bad_quadrature_settings_rejected(tmp_path, capsys):
    config = _write_config(tmp_path, quadrature={"node_count": 16})
    assert main(["curve", "--config", config]) == 2
    assert _stderr_json(capsys)["code"] == "invalid-config"


def test_malformed_json_config(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["curve", "--config", str(path)]) == 2
    assert _stderr_json(capsys)["code"] == "config-parse"


def test_usage_errors_are_json(capsys):
    assert main(["curve", "--frobnicate"]) == 2
    assert _stderr_json(capsys)["code"] == "usage"
    assert main([]) == 2
    assert _stderr_json(capsys)["code"] == "usage"
