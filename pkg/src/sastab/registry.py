"""Builtin problems.

Three scalar problems exercise the three regimes the package cares about:

  example1        h(x) = -x e^|x|, multiplicative noise of the same size.
                  Superlinear drift and noise: plain iteration blows up from
                  moderate starts, the scaled iteration does not.
  example2        h(x) = -tanh(x), bounded drift, uniform additive noise.
                  Already stable; the scaler should never engage.
  shifted-linear  h(x) = 5 - x, equilibrium away from the origin, unit
                  gaussian noise. Exercises off-center Lyapunov functions
                  and the projection mode.

All builtin callables evaluate through scalar math.* calls so their results
are bitwise identical to the compiled kernel's libm calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _codes
from ._codes import KernelSpec
from .core import (
    DriftField,
    LyapunovSpec,
    NoiseModel,
    SAProblem,
    StepSchedule,
    safe_exp,
)
from .errors import ConfigError
from .regions import Box

Array = np.ndarray


def _example1_drift(x: Array) -> Array:
    v = x[0]
    s = v * safe_exp(abs(v))
    return np.array([-s])


def _example1_scale(x: Array) -> Array:
    v = x[0]
    s = v * safe_exp(abs(v))
    return np.array([-s])


def _example1_fvar(x: Array) -> float:
    v = x[0]
    s = -(v * safe_exp(abs(v)))
    return s * s


def _example2_drift(x: Array) -> Array:
    return np.array([-math.tanh(x[0])])


def _shifted_drift(x: Array) -> Array:
    return np.array([5.0 - x[0]])


def _quad_value(center: float):
    def value(x: Array) -> float:
        t = x[0] - center
        return t * t

    return value


def _quad_gradient(center: float):
    def gradient(x: Array) -> Array:
        return np.array([2.0 * (x[0] - center)])

    return gradient


@dataclass(frozen=True)
class ProblemPreset:
    """A builtin problem plus the defaults experiments start from."""

    problem: SAProblem
    x0: tuple[float, ...]
    threshold_M: int
    threshold_N: int
    margin: float
    diag_m: int  # default diagnostics level, > threshold_M


def _build_example1() -> ProblemPreset:
    drift = DriftField(1, _example1_drift)
    noise = NoiseModel.multiplicative(_example1_scale, _example1_fvar, 1)
    lyap = LyapunovSpec(
        value=_quad_value(0.0),
        gradient=_quad_gradient(0.0),
        hessian_bound=2.0,
        threshold_M=1,
    )
    kernel = KernelSpec(
        drift_code=_codes.DRIFT_EXP_PULL,
        w_center=0.0,
        noise_kind=_codes.NOISE_MULTIPLICATIVE,
        scale_code=_codes.DRIFT_EXP_PULL,
        fvar_kind=_codes.FVAR_SCALE_SQUARED,
    )
    problem = SAProblem(
        name="example1",
        drift=drift,
        noise=noise,
        lyapunov=lyap,
        schedule=StepSchedule.harmonic(),
        kernel=kernel,
        box=Box.cube(-10.0, 10.0, 1),
    )
    return ProblemPreset(
        problem, x0=(3.0,), threshold_M=1, threshold_N=4, margin=1.05, diag_m=4
    )


def _build_example2() -> ProblemPreset:
    drift = DriftField(1, _example2_drift)
    noise = NoiseModel.additive_uniform(-1.0, 1.0, 1)
    lyap = LyapunovSpec(
        value=_quad_value(0.0),
        gradient=_quad_gradient(0.0),
        hessian_bound=2.0,
        threshold_M=1,
    )
    kernel = KernelSpec(
        drift_code=_codes.DRIFT_NEG_TANH,
        w_center=0.0,
        noise_kind=_codes.NOISE_ADD_UNIFORM,
        noise_p0=-1.0,
        noise_p1=1.0,
        fvar_kind=_codes.FVAR_CONST,
        fvar_p=noise.var_bound(np.zeros(1)),
    )
    problem = SAProblem(
        name="example2",
        drift=drift,
        noise=noise,
        lyapunov=lyap,
        schedule=StepSchedule.harmonic(),
        kernel=kernel,
        box=Box.cube(-10.0, 10.0, 1),
    )
    return ProblemPreset(
        problem, x0=(2.0,), threshold_M=1, threshold_N=2, margin=1.05, diag_m=2
    )


def _build_shifted_linear() -> ProblemPreset:
    drift = DriftField(1, _shifted_drift)
    noise = NoiseModel.additive_gaussian(0.0, 1.0, 1)
    lyap = LyapunovSpec(
        value=_quad_value(5.0),
        gradient=_quad_gradient(5.0),
        hessian_bound=2.0,
        threshold_M=1,
    )
    kernel = KernelSpec(
        drift_code=_codes.DRIFT_AFFINE,
        drift_p=5.0,
        w_center=5.0,
        noise_kind=_codes.NOISE_ADD_GAUSSIAN,
        noise_p0=0.0,
        noise_p1=1.0,
        fvar_kind=_codes.FVAR_CONST,
        fvar_p=1.0,
    )
    problem = SAProblem(
        name="shifted-linear",
        drift=drift,
        noise=noise,
        lyapunov=lyap,
        schedule=StepSchedule.harmonic(),
        kernel=kernel,
        box=Box.cube(-10.0, 10.0, 1),
    )
    return ProblemPreset(
        problem, x0=(0.0,), threshold_M=1, threshold_N=4, margin=1.05, diag_m=4
    )


_PRESETS = {
    "example1": _build_example1(),
    "example2": _build_example2(),
    "shifted-linear": _build_shifted_linear(),
}


def names() -> list[str]:
    return sorted(_PRESETS)


def get(name: str) -> ProblemPreset:
    try:
        return _PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown problem {name!r}; builtins are {', '.join(names())}"
        ) from None


def get_problem(name: str) -> SAProblem:
    return get(name).problem
