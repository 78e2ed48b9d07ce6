"""Command-line front end.

Verbs: curve (CSV of return-probability curves), compare (JSON report
of pairwise method deviations), fit (JSON fit result from a trace
CSV), solve-sigmas (JSON per-dot variances from measured widths).
All configuration is a single JSON document; command-line flags
override the corresponding config fields.  Internal computation is
always dimensionless (energies per sigma_hf, times times sigma_hf);
the units option only rescales the time column at the I/O boundary.

Errors are machine-readable JSON objects {code, message, context} on
stderr with a nonzero exit code: 2 for usage/config problems, 3 for a
fit that did not converge, 4 for numeric failures, 5 for an
underdetermined sigma solve.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Any, Sequence

import numpy as np

from . import analytic
from .analytic import DEFAULT_QUADRATURE, QuadratureError, QuadratureSpec
from .dynamics import ExperimentSpec, p0_mc
from .fitting import (
    Trace,
    UnderdeterminedError,
    fit_dephasing,
    fit_rabi,
    sigma3_sq_shortcut,
    solve_sigmas,
)
from .hyperfine import DotPair, DotSigmas

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3
EXIT_NUMERIC = 4
EXIT_UNDERDETERMINED = 5

#: nanoseconds per dimensionless time unit (1/sigma_hf) for the presets
UNIT_PRESETS = {"gaas": 10.0, "si": 300.0}

METHOD_CHOICES = ("mc", "exact", "zero_j", "inf_j", "high_j", "low_j")
_ANALYTIC_METHOD = {
    "exact": "quadrature",
    "zero_j": "zero_j",
    "inf_j": "inf_j",
    "high_j": "high_j",
    "low_j": "low_j",
}

_PAIRS = {"12": DotPair.P12, "23": DotPair.P23}


class CliError(Exception):
    """An error destined for the JSON stderr channel."""

    def __init__(
        self, code: str, message: str, exit_code: int = EXIT_CONFIG, **context: Any
    ) -> None:
        super().__init__(message)
        self.code = code
        self.exit_code = exit_code
        self.context = context

    def to_json(self) -> dict[str, Any]:
        return {"code": self.code, "message": str(self), "context": self.context}


# --------------------------------------------------------------------------
# config handling

DEFAULT_CONFIG: dict[str, Any] = {
    "experiment": {
        "prepared_pair": "12",
        "pulsed_pair": "23",
        "j": 0.0,
        "gauge": "average",
        "time": {"start": 0.0, "stop": 10.0, "count": 400},
    },
    "sigmas": [0.5, 1.0, 1.5],
    "methods": ["exact"],
    "mc": {"n_samples": 20000, "seed": 12345, "workers": 1},
    "quadrature": {
        "node_count": DEFAULT_QUADRATURE.node_count,
        "truncation": DEFAULT_QUADRATURE.truncation,
        "target_abs_tol": DEFAULT_QUADRATURE.target_abs_tol,
    },
    "units": "dimensionless",
    "out": None,
    "compare": {"tolerance": 0.02, "mc_sigma": 3.0},
}

_SCHEMA: dict[str, Any] = {
    "experiment": {"prepared_pair", "pulsed_pair", "j", "gauge", "time", "grid"},
    "experiment.time": {"start", "stop", "count"},
    "mc": {"n_samples", "seed", "workers"},
    "quadrature": {"node_count", "truncation", "target_abs_tol"},
    "compare": {"tolerance", "mc_sigma"},
}


def _check_keys(section: dict[str, Any], allowed: set[str], where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise CliError(
            "invalid-config",
            f"unknown key(s) {unknown} in {where}; allowed: {sorted(allowed)}",
            where=where,
            unknown=unknown,
        )


def _merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: str | None, root_keys: set[str]) -> dict[str, Any]:
    """Read and validate a JSON config, filling defaults."""
    user: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                user = json.load(fh)
        except OSError as exc:
            raise CliError("config-io", f"cannot read config: {exc}", path=path)
        except json.JSONDecodeError as exc:
            raise CliError(
                "config-parse", f"config is not valid JSON: {exc}", path=path
            )
        if not isinstance(user, dict):
            raise CliError("invalid-config", "config root must be a JSON object")
    _check_keys(user, root_keys, "config root")
    config = _merge({k: v for k, v in DEFAULT_CONFIG.items() if k in root_keys}, user)
    for section, allowed in _SCHEMA.items():
        head, _, tail = section.partition(".")
        node = config.get(head)
        if tail and isinstance(node, dict):
            node = node.get(tail)
        if isinstance(node, dict):
            _check_keys(node, allowed, section)
    return config


def _require(condition: bool, message: str, **context: Any) -> None:
    if not condition:
        raise CliError("invalid-config", message, **context)


def parse_units(units: str) -> float | None:
    """ns per dimensionless time unit, or None for dimensionless output."""
    if units == "dimensionless":
        return None
    if units in UNIT_PRESETS:
        return UNIT_PRESETS[units]
    if units.startswith("custom:"):
        try:
            scale = float(units.partition(":")[2])
        except ValueError:
            scale = math.nan
        _require(
            math.isfinite(scale) and scale > 0.0,
            f"custom units need a positive ns scale, got {units!r}",
            units=units,
        )
        return scale
    raise CliError(
        "invalid-config",
        f"units must be dimensionless, gaas, si, or custom:<ns>, got {units!r}",
        units=units,
    )


def _build_sigmas(config: dict[str, Any]) -> DotSigmas:
    raw = config["sigmas"]
    _require(
        isinstance(raw, (list, tuple)) and len(raw) == 3,
        f"sigmas must be a list of 3 numbers, got {raw!r}",
    )
    try:
        return DotSigmas(*(float(v) for v in raw))
    except (TypeError, ValueError) as exc:
        raise CliError("invalid-config", f"bad sigmas: {exc}", sigmas=raw)


def _build_experiment(config: dict[str, Any]) -> ExperimentSpec:
    exp = config["experiment"]
    _require(isinstance(exp, dict), "experiment must be an object")
    for key in ("prepared_pair", "pulsed_pair"):
        _require(
            exp.get(key) in _PAIRS,
            f"experiment.{key} must be one of {sorted(_PAIRS)}, got {exp.get(key)!r}",
        )
    if "grid" in exp and "time" in exp and exp["time"] is not None:
        # an explicit grid replaces the default start/stop/count block
        default_time = DEFAULT_CONFIG["experiment"]["time"]
        _require(
            exp["time"] == default_time,
            "experiment.time and experiment.grid are mutually exclusive",
        )
    if "grid" in exp:
        grid = np.asarray(exp["grid"], dtype=float)
    else:
        time = exp["time"]
        _require(isinstance(time, dict), "experiment.time must be an object")
        count = time["count"]
        _require(
            isinstance(count, int) and count >= 1,
            f"experiment.time.count must be a positive integer, got {count!r}",
        )
        grid = np.linspace(float(time["start"]), float(time["stop"]), count)
    try:
        return ExperimentSpec(
            prepared_pair=_PAIRS[exp["prepared_pair"]],
            pulsed_pair=_PAIRS[exp["pulsed_pair"]],
            j=float(exp["j"]),
            time_grid=grid,
            gauge=exp.get("gauge", "average"),
        )
    except (TypeError, ValueError) as exc:
        raise CliError("invalid-config", f"bad experiment: {exc}")


def _build_quadrature(config: dict[str, Any]) -> QuadratureSpec:
    quad = config["quadrature"]
    try:
        return QuadratureSpec(
            node_count=int(quad["node_count"]),
            truncation=float(quad["truncation"]),
            target_abs_tol=float(quad["target_abs_tol"]),
        )
    except (TypeError, ValueError, KeyError) as exc:
        raise CliError("invalid-config", f"bad quadrature settings: {exc}")


def _parse_methods(config: dict[str, Any]) -> list[str]:
    methods = config["methods"]
    _require(
        isinstance(methods, list) and methods,
        f"methods must be a non-empty list, got {methods!r}",
    )
    seen: list[str] = []
    for name in methods:
        _require(
            name in METHOD_CHOICES,
            f"unknown method {name!r}; choices: {list(METHOD_CHOICES)}",
        )
        if name not in seen:
            seen.append(name)
    return seen


# --------------------------------------------------------------------------
# curve evaluation shared by curve/compare


def _evaluate(config: dict[str, Any]) -> dict[str, Any]:
    sigmas = _build_sigmas(config)
    spec = _build_experiment(config)
    quad = _build_quadrature(config)
    methods = _parse_methods(config)

    mc_cfg = config["mc"]
    curves = {}
    for name in methods:
        if name == "mc":
            n_samples = int(mc_cfg["n_samples"])
            workers = int(mc_cfg["workers"])
            _require(workers >= 1, f"mc.workers must be >= 1, got {workers}")
            curves[name] = p0_mc(
                spec, sigmas, n_samples, int(mc_cfg["seed"]), workers=workers
            )
        else:
            curves[name] = analytic.curve(_ANALYTIC_METHOD[name], sigmas, spec, quad)
    return {
        "sigmas": sigmas,
        "spec": spec,
        "methods": methods,
        "curves": curves,
    }


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _emit_json(path: str | None, payload: dict[str, Any]) -> None:
    _write_text(path, json.dumps(payload, indent=2) + "\n")


# --------------------------------------------------------------------------
# commands


def cmd_curve(config: dict[str, Any]) -> int:
    """Write the requested curves as CSV: t, one column per method."""
    ev = _evaluate(config)
    spec, methods, curves = ev["spec"], ev["methods"], ev["curves"]
    scale = parse_units(config["units"])
    times = spec.time_grid if scale is None else spec.time_grid * scale

    header = ["t"] + [f"p0_{name}" for name in methods]
    columns = [times] + [np.asarray(curves[name].values) for name in methods]
    if "mc" in methods:
        header.append("mc_stderr")
        columns.append(np.asarray(curves["mc"].stderr))

    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(_fmt(v) for v in row))
    _write_text(config["out"], "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_compare(config: dict[str, Any]) -> int:
    """Write a JSON report of pairwise deviations between methods.

    Monte Carlo pairs pass when every point sits within mc_sigma
    standard errors; analytic pairs pass when the max deviation stays
    under the configured tolerance.  Validity flags of the curves are
    attached as notes, so an out-of-domain approximation failing its
    tolerance is self-explaining.
    """
    ev = _evaluate(config)
    methods, curves = ev["methods"], ev["curves"]
    _require(len(methods) >= 2, "compare needs at least 2 methods")
    tol = float(config["compare"]["tolerance"])
    mc_sigma = float(config["compare"]["mc_sigma"])

    pairs = []
    all_pass = True
    for i, a in enumerate(methods):
        for b in methods[i + 1 :]:
            va = np.asarray(curves[a].values)
            vb = np.asarray(curves[b].values)
            diff = np.abs(va - vb)
            entry: dict[str, Any] = {
                "a": a,
                "b": b,
                "max_dev": float(diff.max()),
                "mean_dev": float(diff.mean()),
            }
            if "mc" in (a, b):
                stderr = np.asarray(curves["mc"].stderr)
                # points with zero stderr (e.g. t=0 is exactly 1 for
                # every sample) are held to a tiny absolute tolerance
                z = np.where(
                    stderr > 0.0,
                    diff / np.where(stderr > 0.0, stderr, 1.0),
                    np.where(diff <= 1e-9, 0.0, np.inf),
                )
                entry["max_z"] = float(np.max(z))
                entry["pass"] = bool(entry["max_z"] <= mc_sigma)
                entry["criterion"] = f"max_z <= {mc_sigma}"
            else:
                entry["pass"] = bool(entry["max_dev"] <= tol)
                entry["criterion"] = f"max_dev <= {tol}"
            notes = sorted(set(curves[a].flags) | set(curves[b].flags))
            if notes:
                entry["notes"] = notes
            all_pass = all_pass and entry["pass"]
            pairs.append(entry)

    report = {
        "methods": methods,
        "n_points": int(ev["spec"].time_grid.size),
        "pairs": pairs,
        "pass": all_pass,
    }
    _emit_json(config["out"], report)
    return EXIT_OK


def read_trace_csv(path: str, scale: float | None) -> Trace:
    """Parse a (t, p0[, weight]) CSV; errors name the offending cell."""
    rows: list[list[float]] = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw_lines = fh.read().splitlines()
    except OSError as exc:
        raise CliError("trace-io", f"cannot read trace: {exc}", path=path)

    for lineno, line in enumerate(raw_lines, start=1):
        if not line.strip():
            continue
        cells = [c.strip() for c in line.split(",")]
        values = []
        for colno, cell in enumerate(cells, start=1):
            try:
                values.append(float(cell))
            except ValueError:
                if lineno == 1:
                    values = []  # header row
                    break
                raise CliError(
                    "trace-parse",
                    f"row {lineno}, column {colno}: cannot parse {cell!r} as a number",
                    path=path,
                    row=lineno,
                    column=colno,
                )
        if not values:
            continue
        if len(values) not in (2, 3):
            raise CliError(
                "trace-parse",
                f"row {lineno}: expected 2 or 3 columns, got {len(values)}",
                path=path,
                row=lineno,
            )
        rows.append(values)

    if not rows:
        raise CliError("trace-parse", "trace file holds no data rows", path=path)
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise CliError("trace-parse", "rows have inconsistent column counts", path=path)
    data = np.asarray(rows, dtype=float)
    times = data[:, 0] if scale is None else data[:, 0] / scale
    weights = data[:, 2] if width == 3 else None
    try:
        return Trace(times, data[:, 1], weights)
    except ValueError as exc:
        raise CliError("invalid-trace", str(exc), path=path)


def cmd_fit(config: dict[str, Any], trace_path: str, model: str) -> int:
    """Fit one trace and emit the result as JSON."""
    _require(model in ("dephasing", "rabi"), f"model must be dephasing or rabi, got {model!r}")
    scale = parse_units(config["units"])
    trace = read_trace_csv(trace_path, scale)
    if model == "dephasing":
        result = fit_dephasing(trace)
    else:
        guess = config.get("j_guess")
        result = fit_rabi(trace, None if guess is None else float(guess))
    payload = {
        "model": model,
        "params": result.params,
        "param_stderr": result.param_stderr,
        "residual_rms": result.residual_rms,
        "converged": result.converged,
        "n_iter": result.n_iter,
        "flags": list(result.flags),
        "units": "dimensionless",
    }
    _emit_json(config["out"], payload)
    return EXIT_OK if result.converged else EXIT_NO_CONVERGENCE


def cmd_solve_sigmas(config: dict[str, Any]) -> int:
    """Solve per-dot variances from a JSON measurement list."""
    raw = config.get("measurements")
    _require(
        isinstance(raw, list) and raw,
        "solve-sigmas needs a non-empty measurements list in the config",
    )
    items = []
    for idx, entry in enumerate(raw):
        _require(
            isinstance(entry, dict) and "kind" in entry and "value" in entry,
            f"measurements[{idx}] must be an object with kind and value",
        )
        _check_keys(entry, {"kind", "value", "stderr"}, f"measurements[{idx}]")
        items.append((entry["kind"], entry["value"], entry.get("stderr")))

    partial = config.get("partial")
    if partial is not None:
        _require(partial == "sigma3", f"only partial=sigma3 is supported, got {partial!r}")
        kinds = {k: (v, s) for k, v, s in items}
        _require(
            set(kinds) == {"sigma12", "sigma_bar12"},
            "partial sigma3 needs exactly the sigma12 and sigma_bar12 measurements",
            kinds=sorted(kinds),
        )
        s12, e12 = kinds["sigma12"]
        sb12, eb12 = kinds["sigma_bar12"]
        try:
            value = sigma3_sq_shortcut(float(s12), float(sb12))
        except ValueError as exc:
            raise CliError("invalid-config", str(exc))
        payload: dict[str, Any] = {"partial": {"sigma3_sq": value}}
        if e12 is not None and eb12 is not None:
            stderr = math.hypot(
                2.0 * float(sb12) * float(eb12), 0.5 * float(s12) * float(e12)
            )
            payload["partial"]["stderr_sq"] = stderr
        _emit_json(config["out"], payload)
        return EXIT_OK

    try:
        solution = solve_sigmas(items)
    except UnderdeterminedError as exc:
        raise CliError(
            "underdetermined",
            str(exc),
            exit_code=EXIT_UNDERDETERMINED,
            missing=list(exc.missing),
        )
    except ValueError as exc:
        raise CliError("invalid-config", str(exc))
    payload = {
        "sigma_sq": list(solution.sigma_sq),
        "sigmas": [None if math.isnan(s) else s for s in solution.sigmas],
        "feasible": solution.feasible,
        "stderr_sq": list(solution.stderr_sq),
        "residual_rms": solution.residual_rms,
    }
    _emit_json(config["out"], payload)
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise CliError("usage", message)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", help="output path (default: stdout)")
    parser.add_argument("--units", help="dimensionless | gaas | si | custom:<ns>")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tridot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    curve = sub.add_parser("curve", help="evaluate curves to CSV")
    _add_common(curve)
    curve.add_argument("--method", help="comma-separated methods, e.g. exact,mc")
    curve.add_argument("--seed", type=int, help="Monte Carlo seed override")
    curve.add_argument("--workers", type=int, help="Monte Carlo worker count")

    compare = sub.add_parser("compare", help="pairwise method comparison to JSON")
    _add_common(compare)
    compare.add_argument("--method", help="comma-separated methods (>= 2)")
    compare.add_argument("--seed", type=int, help="Monte Carlo seed override")
    compare.add_argument("--workers", type=int, help="Monte Carlo worker count")

    fit = sub.add_parser("fit", help="fit a trace CSV")
    _add_common(fit)
    fit.add_argument("trace", help="CSV with columns t, p0[, weight]")
    fit.add_argument("--model", required=True, choices=("dephasing", "rabi"))
    fit.add_argument("--j-guess", type=float, dest="j_guess", help="rabi frequency guess")

    solve = sub.add_parser("solve-sigmas", help="per-dot variances from widths")
    _add_common(solve)
    solve.add_argument(
        "--partial",
        choices=("sigma3",),
        help="report only sigma3^2 from (sigma12, sigma_bar12)",
    )
    return parser


_ROOT_KEYS_CURVE = {"experiment", "sigmas", "methods", "mc", "quadrature", "units", "out", "compare"}
_ROOT_KEYS_FIT = {"units", "out", "j_guess"}
_ROOT_KEYS_SOLVE = {"units", "out", "measurements", "partial"}


def _apply_overrides(config: dict[str, Any], args: argparse.Namespace) -> None:
    if getattr(args, "out", None) is not None:
        config["out"] = args.out
    if getattr(args, "units", None) is not None:
        config["units"] = args.units
    if getattr(args, "method", None) is not None:
        config["methods"] = [m.strip() for m in args.method.split(",") if m.strip()]
    if getattr(args, "seed", None) is not None:
        config["mc"]["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        config["mc"]["workers"] = args.workers
    if getattr(args, "j_guess", None) is not None:
        config["j_guess"] = args.j_guess
    if getattr(args, "partial", None) is not None:
        config["partial"] = args.partial


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command in ("curve", "compare"):
            config = load_config(args.config, _ROOT_KEYS_CURVE)
            _apply_overrides(config, args)
            if args.command == "curve":
                return cmd_curve(config)
            return cmd_compare(config)
        if args.command == "fit":
            config = load_config(args.config, _ROOT_KEYS_FIT)
            _apply_overrides(config, args)
            return cmd_fit(config, args.trace, args.model)
        config = load_config(args.config, _ROOT_KEYS_SOLVE)
        _apply_overrides(config, args)
        return cmd_solve_sigmas(config)
    except CliError as exc:
        json.dump(exc.to_json(), sys.stderr)
        sys.stderr.write("\n")
        return exc.exit_code
    except QuadratureError as exc:
        err = CliError("quadrature", str(exc), exit_code=EXIT_NUMERIC, **exc.context)
        json.dump(err.to_json(), sys.stderr)
        sys.stderr.write("\n")
        return EXIT_NUMERIC
    except (ValueError, ArithmeticError) as exc:
        err = CliError("numeric", str(exc), exit_code=EXIT_NUMERIC)
        json.dump(err.to_json(), sys.stderr)
        sys.stderr.write("\n")
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
