"""Experiment configuration files.

TOML documents with five tables, all optional for builtin problems:

    [problem]      name = "example1", or an inline definition (see below)
    [schedule]     kind = harmonic | polynomial | table
    [stabilizer]   M, N, margin, samples
    [run]          mode, x0, horizon, seed, seeds, radius
    [diagnostics]  T, m, delta, epsilon
    [output]       trace, summary

Inline problems replace `name` with expressions:

    [problem]
    h = "-x * exp(abs(x))"        # drift; list of strings when d > 1
    W = "x^2"                     # Lyapunov function
    grad_W = "2*x"                # its gradient, one expression per coordinate
    hessian_bound = 2.0
    M = 1                         # level below which no control is attempted
    dimension = 1                 # optional, default 1
    box = [[-10.0, 10.0]]         # optional sampling region, [lo, hi] per axis
    [problem.noise]
    kind = "multiplicative-gaussian"   # scale = expressions, f = variance bound
                                       # "additive-uniform": low, high
                                       # "additive-gaussian": mean, std

Validation failures raise ConfigError naming the offending key path. Inline
Lyapunov gradients are checked against central differences at load time, so
no run can start with an inconsistent pair; the descent condition is
checked by the run commands themselves.

Builtin problems take their defaults (x0, thresholds, margin, diagnostics
level) from the registry preset; explicit keys override. Inline problems
default N to M+1, which errs toward scaling early.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised only on 3.10
    import tomli as tomllib

import numpy as np

from . import registry
from .analysis import DiagnosticsConfig
from .core import (
    DriftField,
    LyapunovSpec,
    NoiseModel,
    SAProblem,
    StepSchedule,
    gradient_check,
)
from .engine import MODES
from .errors import ConfigError, ExpressionError
from .expr import compile_scalar, compile_vector, parse_expression
from .regions import Box

GRAD_CHECK_POINTS = 32


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully resolved experiment: problem plus every run parameter."""

    problem: SAProblem
    inline: bool
    mode: str
    x0: tuple[float, ...]
    horizon: int
    seed: int
    seeds: tuple[int, ...]
    radius: float | None
    threshold_M: int
    threshold_N: float
    margin: float
    stabilizer_samples: int
    diagnostics: DiagnosticsConfig
    trace_path: str | None
    summary_path: str | None


# ---------------------------------------------------------------------------
# low-level readers


def _table(doc: dict, key: str) -> dict:
    v = doc.get(key, {})
    if not isinstance(v, dict):
        raise ConfigError(f"{key} must be a table")
    return v


def _reject_unknown(tab: dict, path: str, allowed: set[str]) -> None:
    for k in tab:
        if k not in allowed:
            raise ConfigError(f"unknown key {path}.{k}")


def _get_number(tab: dict, key: str, path: str, default=None) -> float | None:
    if key not in tab:
        return default
    v = tab[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key} must be a number")
    return float(v)


def _get_int(tab: dict, key: str, path: str, default=None) -> int | None:
    if key not in tab:
        return default
    v = tab[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}.{key} must be an integer")
    return v


def _get_str(tab: dict, key: str, path: str, default=None) -> str | None:
    if key not in tab:
        return default
    v = tab[key]
    if not isinstance(v, str):
        raise ConfigError(f"{path}.{key} must be a string")
    return v


def _parse(text: str, path: str):
    try:
        return parse_expression(text)
    except ExpressionError as ex:
        raise ConfigError(f"{path}: {ex}") from None


def _expr_list(tab: dict, key: str, path: str, dimension: int) -> list:
    """Read one expression or a list of `dimension` expressions."""
    if key not in tab:
        raise ConfigError(f"{path}.{key} is required for inline problems")
    v = tab[key]
    if isinstance(v, str):
        v = [v]
    if not isinstance(v, list) or not all(isinstance(s, str) for s in v):
        raise ConfigError(f"{path}.{key} must be a string or list of strings")
    if len(v) != dimension:
        raise ConfigError(
            f"{path}.{key} needs {dimension} expression(s), got {len(v)}"
        )
    return [_parse(s, f"{path}.{key}") for s in v]


def _compile_vec(asts: list, dimension: int, path: str):
    try:
        return compile_vector(asts, dimension)
    except ExpressionError as ex:
        raise ConfigError(f"{path}: {ex}") from None


def _compile_sca(ast, dimension: int, path: str):
    try:
        return compile_scalar(ast, dimension)
    except ExpressionError as ex:
        raise ConfigError(f"{path}: {ex}") from None


# ---------------------------------------------------------------------------
# section builders


def _build_schedule(doc: dict, default: StepSchedule) -> StepSchedule:
    tab = _table(doc, "schedule")
    if not tab:
        return default
    _reject_unknown(tab, "schedule", {"kind", "a0", "b", "gamma", "values"})
    kind = _get_str(tab, "kind", "schedule")
    if kind is None:
        raise ConfigError("schedule.kind is required when [schedule] is present")
    try:
        if kind == "harmonic":
            return StepSchedule.harmonic()
        if kind == "polynomial":
            return StepSchedule.polynomial(
                _get_number(tab, "a0", "schedule", 1.0),
                _get_number(tab, "b", "schedule", 1.0),
                _get_number(tab, "gamma", "schedule", 1.0),
            )
        if kind == "table":
            values = tab.get("values")
            if not isinstance(values, list) or not values:
                raise ConfigError("schedule.values must be a nonempty list")
            return StepSchedule.from_table([float(v) for v in values])
    except ValueError as ex:
        raise ConfigError(f"schedule: {ex}") from None
    raise ConfigError(
        f"schedule.kind must be harmonic, polynomial, or table, got {kind!r}"
    )


def _build_noise(tab: dict, dimension: int) -> NoiseModel:
    path = "problem.noise"
    _reject_unknown(
        tab, path, {"kind", "scale", "f", "low", "high", "mean", "std"}
    )
    kind = _get_str(tab, "kind", path)
    if kind is None:
        raise ConfigError(f"{path}.kind is required")
    if kind == "multiplicative-gaussian":
        scale_asts = _expr_list(tab, "scale", path, dimension)
        f_text = _get_str(tab, "f", path)
        if f_text is None:
            raise ConfigError(
                f"{path}.f (variance bound) is required for multiplicative noise"
            )
        f_ast = _parse(f_text, f"{path}.f")
        return NoiseModel.multiplicative(
            _compile_vec(scale_asts, dimension, f"{path}.scale"),
            _compile_sca(f_ast, dimension, f"{path}.f"),
            dimension,
        )
    if "f" in tab:
        raise ConfigError(
            f"{path}.f is only accepted for multiplicative-gaussian noise; "
            "additive kinds carry their exact second moment"
        )
    try:
        if kind == "additive-uniform":
            lo = _get_number(tab, "low", path)
            hi = _get_number(tab, "high", path)
            if lo is None or hi is None:
                raise ConfigError(f"{path} needs low and high for uniform noise")
            return NoiseModel.additive_uniform(lo, hi, dimension)
        if kind == "additive-gaussian":
            mu = _get_number(tab, "mean", path, 0.0)
            sigma = _get_number(tab, "std", path, 1.0)
            return NoiseModel.additive_gaussian(mu, sigma, dimension)
    except ValueError as ex:
        raise ConfigError(f"{path}: {ex}") from None
    raise ConfigError(
        f"{path}.kind must be multiplicative-gaussian, additive-uniform, "
        f"or additive-gaussian, got {kind!r}"
    )


def _build_box(tab: dict, dimension: int) -> Box | None:
    if "box" not in tab:
        return None
    v = tab["box"]
    if (
        isinstance(v, list)
        and len(v) == 2
        and all(isinstance(e, (int, float)) and not isinstance(e, bool) for e in v)
    ):
        v = [v]  # a bare [lo, hi] in dimension 1
    if not isinstance(v, list) or len(v) != dimension:
        raise ConfigError(
            f"problem.box must list [lo, hi] for each of {dimension} axis(es)"
        )
    bounds = []
    for i, pair in enumerate(v):
        if (
            not isinstance(pair, list)
            or len(pair) != 2
            or any(isinstance(e, bool) or not isinstance(e, (int, float)) for e in pair)
        ):
            raise ConfigError(f"problem.box[{i}] must be a [lo, hi] pair")
        lo, hi = float(pair[0]), float(pair[1])
        if not lo < hi:
            raise ConfigError(f"problem.box[{i}] needs lo < hi")
        bounds.append((lo, hi))
    return Box.from_bounds(bounds)


def _build_inline_problem(tab: dict, schedule: StepSchedule) -> tuple[SAProblem, int]:
    """Returns the problem and its Lyapunov floor M."""
    path = "problem"
    _reject_unknown(
        tab,
        path,
        {"h", "W", "grad_W", "hessian_bound", "M", "dimension", "box", "noise"},
    )
    dimension = _get_int(tab, "dimension", path, 1)
    if dimension < 1:
        raise ConfigError("problem.dimension must be a positive integer")

    h_asts = _expr_list(tab, "h", path, dimension)
    w_text = _get_str(tab, "W", path)
    if w_text is None:
        raise ConfigError("problem.W is required for inline problems")
    w_ast = _parse(w_text, "problem.W")
    gw_asts = _expr_list(tab, "grad_W", path, dimension)
    hessian_bound = _get_number(tab, "hessian_bound", path)
    if hessian_bound is None:
        raise ConfigError("problem.hessian_bound is required for inline problems")
    floor_m = _get_int(tab, "M", path, 1)

    noise_tab = tab.get("noise")
    if not isinstance(noise_tab, dict):
        raise ConfigError("problem.noise table is required for inline problems")
    noise = _build_noise(noise_tab, dimension)

    drift = DriftField(dimension, _compile_vec(h_asts, dimension, "problem.h"))
    w_fn = _compile_sca(w_ast, dimension, "problem.W")
    gw_fn = _compile_vec(gw_asts, dimension, "problem.grad_W")
    try:
        lyap = LyapunovSpec(
            value=lambda x: float(w_fn(x)),
            gradient=gw_fn,
            hessian_bound=hessian_bound,
            threshold_M=floor_m,
        )
    except ValueError as ex:
        raise ConfigError(f"problem: {ex}") from None

    box = _build_box(tab, dimension)
    problem = SAProblem(
        name="inline",
        drift=drift,
        noise=noise,
        lyapunov=lyap,
        schedule=schedule,
        kernel=None,
        box=box,
    )
    _check_inline_gradient(problem)
    return problem, floor_m


def _check_inline_gradient(problem: SAProblem) -> None:
    box = problem.box if problem.box is not None else Box.cube(-5.0, 5.0, problem.dimension)
    pts = box.sample(np.random.default_rng(0), GRAD_CHECK_POINTS)
    try:
        report = gradient_check(problem.lyapunov, pts)
    except Exception as ex:
        raise ConfigError(f"problem.W could not be evaluated on its box: {ex}") from None
    if not report.passed:
        raise ConfigError(
            "problem.grad_W disagrees with central differences of problem.W "
            f"(worst relative discrepancy {report.worst:.3g}); "
            "fix the gradient before running"
        )


def _parse_seeds(v, path: str) -> tuple[int, ...]:
    if isinstance(v, int) and not isinstance(v, bool):
        return (v,)
    if isinstance(v, str):
        parts = v.split(":")
        if len(parts) != 2:
            raise ConfigError(f"{path} ranges are written 'lo:hi' (hi exclusive)")
        try:
            lo, hi = int(parts[0]), int(parts[1])
        except ValueError:
            raise ConfigError(f"{path} range bounds must be integers") from None
        if hi <= lo:
            raise ConfigError(f"{path} range is empty")
        return tuple(range(lo, hi))
    if isinstance(v, list):
        if not v:
            raise ConfigError(f"{path} must not be empty")
        out = []
        for e in v:
            if isinstance(e, bool) or not isinstance(e, int):
                raise ConfigError(f"{path} entries must be integers")
            out.append(e)
        return tuple(out)
    raise ConfigError(f"{path} must be an integer, a list, or a 'lo:hi' range")


# ---------------------------------------------------------------------------
# entry point


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and fully validate a TOML experiment file."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as ex:
        raise ConfigError(f"{p}: invalid TOML: {ex}") from None
    return build_config(doc)


def build_config(doc: dict) -> ExperimentConfig:
    """Validate an already-parsed document (the testable core of load_config)."""
    for key in doc:
        if key not in {"problem", "schedule", "stabilizer", "run", "diagnostics", "output"}:
            raise ConfigError(f"unknown table [{key}]")

    prob_tab = _table(doc, "problem")
    name = _get_str(prob_tab, "name", "problem")

    preset = None
    if name is not None:
        extra = set(prob_tab) - {"name"}
        if extra:
            raise ConfigError(
                f"problem.name selects a builtin; inline keys "
                f"{sorted(extra)} are not allowed alongside it"
            )
        preset = registry.get(name)
        schedule = _build_schedule(doc, preset.problem.schedule)
        problem = preset.problem
        if schedule is not problem.schedule:
            problem = dataclasses.replace(problem, schedule=schedule)
        floor_m = preset.threshold_M
        inline = False
    else:
        schedule = _build_schedule(doc, StepSchedule.harmonic())
        problem, floor_m = _build_inline_problem(prob_tab, schedule)
        inline = True

    # stabilizer thresholds
    stab_tab = _table(doc, "stabilizer")
    _reject_unknown(stab_tab, "stabilizer", {"M", "N", "margin", "samples"})
    threshold_M = _get_int(stab_tab, "M", "stabilizer", floor_m)
    if threshold_M < 1:
        raise ConfigError("stabilizer.M must be a positive integer")
    default_N = float(preset.threshold_N) if preset is not None else float(threshold_M + 1)
    threshold_N = _get_number(stab_tab, "N", "stabilizer", default_N)
    if not threshold_N > threshold_M:
        raise ConfigError("stabilizer.N must exceed stabilizer.M")
    margin = _get_number(
        stab_tab, "margin", "stabilizer", preset.margin if preset else 1.05
    )
    if not margin > 1.0:
        raise ConfigError("stabilizer.margin must exceed 1")
    samples = _get_int(stab_tab, "samples", "stabilizer", 2048)
    if samples < 1:
        raise ConfigError("stabilizer.samples must be positive")

    if threshold_M != floor_m:
        # the Lyapunov floor and the scaler threshold are the same object
        lyap = dataclasses.replace(problem.lyapunov, threshold_M=threshold_M)
        problem = dataclasses.replace(problem, lyapunov=lyap)

    # run parameters
    run_tab = _table(doc, "run")
    _reject_unknown(
        run_tab, "run", {"mode", "x0", "horizon", "seed", "seeds", "radius"}
    )
    mode = _get_str(run_tab, "mode", "run", "adaptive")
    if mode not in MODES:
        raise ConfigError(
            f"run.mode must be one of {', '.join(sorted(MODES))}, got {mode!r}"
        )
    if "x0" in run_tab:
        v = run_tab["x0"]
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            x0 = (float(v),)
        elif isinstance(v, list) and v and all(
            isinstance(e, (int, float)) and not isinstance(e, bool) for e in v
        ):
            x0 = tuple(float(e) for e in v)
        else:
            raise ConfigError("run.x0 must be a number or a list of numbers")
    elif preset is not None:
        x0 = preset.x0
    else:
        x0 = (0.0,) * problem.dimension
    if len(x0) != problem.dimension:
        raise ConfigError(
            f"run.x0 has {len(x0)} coordinate(s); the problem has "
            f"dimension {problem.dimension}"
        )
    horizon = _get_int(run_tab, "horizon", "run", 10_000)
    if horizon < 1:
        raise ConfigError("run.horizon must be a positive integer")
    seed = _get_int(run_tab, "seed", "run", 0)
    if seed < 0:
        raise ConfigError("run.seed must be nonnegative")
    seeds = (
        _parse_seeds(run_tab["seeds"], "run.seeds") if "seeds" in run_tab else (seed,)
    )
    if any(s < 0 for s in seeds):
        raise ConfigError("run.seeds must be nonnegative")
    radius = _get_number(run_tab, "radius", "run")
    if mode == "projection":
        if radius is None or not radius > 0:
            raise ConfigError("run.radius must be positive in projection mode")
    elif radius is not None:
        raise ConfigError("run.radius only applies to projection mode")

    # diagnostics
    diag_tab = _table(doc, "diagnostics")
    _reject_unknown(diag_tab, "diagnostics", {"T", "m", "delta", "epsilon", "K"})
    default_m = preset.diag_m if preset is not None else threshold_M + 1
    try:
        diagnostics = DiagnosticsConfig(
            T=_get_number(diag_tab, "T", "diagnostics", 1.0),
            m=_get_int(diag_tab, "m", "diagnostics", max(default_m, threshold_M + 1)),
            delta=_get_number(diag_tab, "delta", "diagnostics", 0.05),
            epsilon=_get_number(diag_tab, "epsilon", "diagnostics", 0.05),
            K=_get_number(diag_tab, "K", "diagnostics"),
        ).validated_for(problem)
    except ValueError as ex:
        raise ConfigError(f"diagnostics: {ex}") from None

    out_tab = _table(doc, "output")
    _reject_unknown(out_tab, "output", {"trace", "summary"})

    return ExperimentConfig(
        problem=problem,
        inline=inline,
        mode=mode,
        x0=x0,
        horizon=horizon,
        seed=seed,
        seeds=seeds,
        radius=radius,
        threshold_M=threshold_M,
        threshold_N=threshold_N,
        margin=margin,
        stabilizer_samples=samples,
        diagnostics=diagnostics,
        trace_path=_get_str(out_tab, "trace", "output"),
        summary_path=_get_str(out_tab, "summary", "output"),
    )
