"""Problem model for stochastic approximation runs.

A problem bundles the four ingredients of the recursion
x_{n+1} = x_n + a(n) [h(x_n) + M_{n+1}]:

* a drift field h (the mean dynamics),
* a noise model generating the martingale differences M_{n+1}, together
  with an explicit conditional-variance bound f with E[|M|^2 | x] <= f(x),
* a Lyapunov function W with its gradient, a bound on its second
  derivatives, and the level M below which no control is attempted,
* a step-size schedule a(n).

Everything downstream (the step-size scaler, the engine, the diagnostics)
consumes problems only through the small evaluator contracts defined here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._codes import KernelSpec
from .errors import NumericOverflowError, ScheduleExhaustedError
from .regions import Box

Array = np.ndarray


def safe_exp(v: float) -> float:
    """exp with C-library overflow semantics: huge arguments give inf.

    math.exp raises OverflowError around 709.8 where C's exp returns
    HUGE_VAL; divergence is something the engine observes and reports, so
    it must surface as inf, not as an exception. Keeps the pure path
    bit-identical to the compiled one.
    """
    try:
        return math.exp(v)
    except OverflowError:
        return math.inf


def as_state(x) -> Array:
    """Coerce a scalar or sequence to a float state vector."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"state must be a vector, got shape {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# step-size schedules


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes a(n), n >= 0.

    Families:
      harmonic          a(n) = 1/(n+1)
      polynomial        a(n) = a0 / (n+b)^gamma, gamma in (1/2, 1]
      table             explicit positive values, exhausted past the end

    The builtin families satisfy sum a = inf, sum a^2 < inf.
    """

    family: str
    a0: float = 1.0
    b: float = 1.0
    gamma: float = 1.0
    table: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.family == "harmonic":
            return
        if self.family == "polynomial":
            if self.a0 <= 0 or self.b <= 0:
                raise ValueError("polynomial schedule needs a0 > 0 and b > 0")
            if not (0.5 < self.gamma <= 1.0):
                raise ValueError("polynomial exponent must lie in (1/2, 1]")
            return
        if self.family == "table":
            if not self.table:
                raise ValueError("table schedule needs at least one value")
            if any(v <= 0 for v in self.table):
                raise ValueError("table schedule values must be positive")
            return
        raise ValueError(f"unknown schedule family {self.family!r}")

    @classmethod
    def harmonic(cls) -> "StepSchedule":
        return cls("harmonic")

    @classmethod
    def polynomial(cls, a0: float, b: float, gamma: float) -> "StepSchedule":
        return cls("polynomial", a0=float(a0), b=float(b), gamma=float(gamma))

    @classmethod
    def from_table(cls, values: Sequence[float]) -> "StepSchedule":
        return cls("table", table=tuple(float(v) for v in values))


def schedule_value(schedule: StepSchedule, n: int) -> float:
    """a(n) for integer n >= 0."""
    if n < 0:
        raise ValueError("schedule index must be nonnegative")
    if schedule.family == "harmonic":
        return 1.0 / (n + 1)
    if schedule.family == "polynomial":
        return schedule.a0 / (n + schedule.b) ** schedule.gamma
    if n >= len(schedule.table):
        raise ScheduleExhaustedError(
            f"table schedule has {len(schedule.table)} entries, index {n} requested"
        )
    return schedule.table[n]


def schedule_array(schedule: StepSchedule, horizon: int) -> Array:
    """a(0..horizon-1) as a contiguous array (shared by both engine paths)."""
    return np.array([schedule_value(schedule, n) for n in range(horizon)])


# ---------------------------------------------------------------------------
# drift fields


@dataclass(frozen=True)
class DriftField:
    """The mean field h: R^d -> R^d."""

    dimension: int
    eval: Callable[[Array], Array]

    def __call__(self, x: Array) -> Array:
        return self.eval(x)


# ---------------------------------------------------------------------------
# noise models

KIND_MULTIPLICATIVE = "multiplicative-gaussian"
KIND_ADD_UNIFORM = "additive-uniform"
KIND_ADD_GAUSSIAN = "additive-gaussian"


@dataclass(frozen=True)
class NoiseModel:
    """Sampler for the martingale differences plus its variance bound f.

    f must dominate the conditional second moment: E[|M|^2 | x] <= f(x).
    The additive constructors fill f in with the exact second moment;
    multiplicative noise must declare it.
    """

    kind: str
    dimension: int
    var_bound: Callable[[Array], float]
    scale: Callable[[Array], Array] | None = None
    lo: float = 0.0
    hi: float = 0.0
    mu: float = 0.0
    sigma: float = 1.0

    @classmethod
    def multiplicative(cls, scale, var_bound, dimension: int) -> "NoiseModel":
        """M = scale(x) * xi with xi standard normal per coordinate."""
        return cls(KIND_MULTIPLICATIVE, dimension, var_bound, scale=scale)

    @classmethod
    def additive_uniform(cls, lo: float, hi: float, dimension: int) -> "NoiseModel":
        """M_i ~ uniform(lo, hi) iid; f = d (hi-lo)^2/12 + d mean^2 (exact)."""
        if hi <= lo:
            raise ValueError("uniform noise needs lo < hi")
        mean = 0.5 * (lo + hi)
        second = (hi - lo) ** 2 / 12.0 + mean * mean
        f = dimension * second
        return cls(
            KIND_ADD_UNIFORM, dimension, lambda x: f, lo=float(lo), hi=float(hi)
        )

    @classmethod
    def additive_gaussian(cls, mu: float, sigma: float, dimension: int) -> "NoiseModel":
        """M_i = mu + sigma xi iid; f = d (sigma^2 + mu^2) (exact)."""
        if sigma <= 0:
            raise ValueError("gaussian noise needs sigma > 0")
        f = dimension * (sigma * sigma + mu * mu)
        return cls(
            KIND_ADD_GAUSSIAN, dimension, lambda x: f, mu=float(mu), sigma=float(sigma)
        )


def sample_noise(model: NoiseModel, x: Array, rng: np.random.Generator) -> Array:
    """One disturbance draw at state x.

    Scalar draws per coordinate, in coordinate order, so the stream agrees
    bit for bit with the compiled loop's per-step draws.
    """
    d = model.dimension
    out = np.empty(d)
    if model.kind == KIND_MULTIPLICATIVE:
        s = model.scale(x)
        for i in range(d):
            out[i] = s[i] * rng.standard_normal()
    elif model.kind == KIND_ADD_UNIFORM:
        lo, hi = model.lo, model.hi
        for i in range(d):
            out[i] = lo + (hi - lo) * rng.random()
    elif model.kind == KIND_ADD_GAUSSIAN:
        mu, sigma = model.mu, model.sigma
        for i in range(d):
            out[i] = mu + sigma * rng.standard_normal()
    else:
        raise ValueError(f"unknown noise kind {model.kind!r}")
    return out


def sample_noise_batch(
    model: NoiseModel, x: Array, rng: np.random.Generator, count: int
) -> Array:
    """`count` draws at a fixed state, shape (count, d).

    Vectorized but stream-compatible with repeated sample_noise calls:
    numpy fills arrays through the same scalar generators.
    """
    d = model.dimension
    if model.kind == KIND_MULTIPLICATIVE:
        s = np.asarray(model.scale(x), dtype=float)
        return s[None, :] * rng.standard_normal((count, d))
    if model.kind == KIND_ADD_UNIFORM:
        return model.lo + (model.hi - model.lo) * rng.random((count, d))
    if model.kind == KIND_ADD_GAUSSIAN:
        return model.mu + model.sigma * rng.standard_normal((count, d))
    raise ValueError(f"unknown noise kind {model.kind!r}")


# ---------------------------------------------------------------------------
# Lyapunov data


@dataclass(frozen=True)
class LyapunovSpec:
    """W >= 0 with gradient, a second-derivative bound, and the floor level.

    threshold_M is the level below which the dynamics are left alone; all
    stability statements are about driving W below it.
    """

    value: Callable[[Array], float]
    gradient: Callable[[Array], Array]
    hessian_bound: float
    threshold_M: int

    def __post_init__(self):
        if self.hessian_bound <= 0:
            raise ValueError("hessian_bound must be positive")
        if self.threshold_M < 1:
            raise ValueError("threshold_M must be a positive integer")


# ---------------------------------------------------------------------------
# the bundle


@dataclass(frozen=True)
class SAProblem:
    """A complete stochastic approximation problem."""

    name: str
    drift: DriftField
    noise: NoiseModel
    lyapunov: LyapunovSpec
    schedule: StepSchedule
    kernel: KernelSpec | None = field(default=None, repr=False)
    box: Box | None = None  # sampling region hint for verification routines

    def __post_init__(self):
        if self.drift.dimension != self.noise.dimension:
            raise ValueError(
                f"drift dimension {self.drift.dimension} != "
                f"noise dimension {self.noise.dimension}"
            )
        if self.box is not None and self.box.dimension != self.drift.dimension:
            raise ValueError("box dimension does not match the problem")

    @property
    def dimension(self) -> int:
        return self.drift.dimension


def drift_dot_grad(problem: SAProblem, x: Array) -> float:
    """The Lyapunov derivative along the drift, <h(x), grad W(x)>.

    Negative on {W >= threshold_M} is the descent condition everything
    rests on.
    """
    x = as_state(x)
    hv = np.asarray(problem.drift.eval(x), dtype=float)
    gv = np.asarray(problem.lyapunov.gradient(x), dtype=float)
    val = float(np.dot(hv, gv))
    if not math.isfinite(val):
        raise NumericOverflowError(
            f"drift_dot_grad is not finite at x={x.tolist()}"
        )
    return val


def lipschitz_estimate(
    field: DriftField,
    box: Box,
    pairs: int = 4096,
    rng: np.random.Generator | None = None,
) -> float:
    """Empirical Lipschitz constant of the field over a box.

    Max of |h(u)-h(v)| / |u-v| over random pairs. A lower bound on the true
    constant; used to size the martingale fluctuation threshold, where an
    estimate is all the theory needs at desk scale.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if pairs < 1:
        raise ValueError("pairs must be positive")
    us = box.sample(rng, pairs)
    vs = box.sample(rng, pairs)
    best = 0.0
    for u, v in zip(us, vs):
        dx = float(np.linalg.norm(u - v))
        if dx == 0.0:
            continue
        df = float(np.linalg.norm(
            np.asarray(field.eval(u), dtype=float)
            - np.asarray(field.eval(v), dtype=float)
        ))
        r = df / dx
        if r > best:
            best = r
    return best


# ---------------------------------------------------------------------------
# numeric verification of the standing assumptions

GRAD_REL_TOL = 1e-6
GRAD_ABS_TOL = 1e-9


@dataclass(frozen=True)
class GradientCheckResult:
    point: tuple[float, ...]
    discrepancy: float  # |fd - grad| relative to |grad| (absolute near zero)
    ok: bool


@dataclass(frozen=True)
class GradientCheckReport:
    results: tuple[GradientCheckResult, ...]
    passed: bool

    @property
    def worst(self) -> float:
        return max((r.discrepancy for r in self.results), default=0.0)


def gradient_check(
    spec: LyapunovSpec,
    points: Array,
    step: float = 1e-5,
) -> GradientCheckReport:
    """Central-difference check of the declared gradient.

    A point passes when |fd - grad| <= max(rel_tol |grad|, abs_tol) with
    rel_tol = 1e-6 and abs_tol = 1e-9.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    results = []
    for p in pts:
        d = p.shape[0]
        fd = np.empty(d)
        for i in range(d):
            e = np.zeros(d)
            e[i] = step
            fd[i] = (spec.value(p + e) - spec.value(p - e)) / (2.0 * step)
        gv = np.asarray(spec.gradient(p), dtype=float)
        err = float(np.linalg.norm(fd - gv))
        gn = float(np.linalg.norm(gv))
        tol = max(GRAD_REL_TOL * gn, GRAD_ABS_TOL)
        results.append(
            GradientCheckResult(tuple(p.tolist()), err / max(gn, GRAD_ABS_TOL), err <= tol)
        )
    results = tuple(results)
    return GradientCheckReport(results, all(r.ok for r in results))


@dataclass(frozen=True)
class NoiseAuditReport:
    draws: int
    mean: tuple[float, ...]
    mean_tolerance: tuple[float, ...]  # 4 sigma / sqrt(n) per coordinate
    second_moment: float
    var_bound: float
    mean_ok: bool
    bound_ok: bool

    @property
    def passed(self) -> bool:
        return self.mean_ok and self.bound_ok


def noise_moment_audit(
    model: NoiseModel,
    x: Array,
    rng: np.random.Generator,
    draws: int = 10**6,
) -> NoiseAuditReport:
    """Check mean-zero and the variance bound empirically at one state.

    Mean test: each coordinate within 4 standard errors of zero.
    Bound test: empirical E|M|^2 at most f(x) plus 4 standard errors.
    """
    x = as_state(x)
    sample = sample_noise_batch(model, x, rng, draws)
    mean = sample.mean(axis=0)
    sd = sample.std(axis=0, ddof=1)
    mean_tol = 4.0 * sd / math.sqrt(draws)
    sq = np.einsum("ij,ij->i", sample, sample)
    m2 = float(sq.mean())
    m2_se = float(sq.std(ddof=1)) / math.sqrt(draws)
    f = float(model.var_bound(x))
    mean_ok = bool(np.all(np.abs(mean) <= np.maximum(mean_tol, 1e-12)))
    bound_ok = m2 <= f + 4.0 * m2_se + 1e-12
    return NoiseAuditReport(
        draws=draws,
        mean=tuple(mean.tolist()),
        mean_tolerance=tuple(mean_tol.tolist()),
        second_moment=m2,
        var_bound=f,
        mean_ok=mean_ok,
        bound_ok=bound_ok,
    )
