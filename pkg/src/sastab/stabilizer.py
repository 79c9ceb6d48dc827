"""Adaptive step-size scaling.

The stabilizer divides the step size by

    g(y) = max(1, margin * 1{W(y) > N} * sqrt((|h(y)|^2 + f(y)) / W(y)))

so that inside {W <= N} the iteration is untouched (g = 1) while outside,
one scaled step moves the iterate by at most O(sqrt(W)), which is what the
growth condition

    c_N * W(y) > (|h(y)|^2 + f(y)) / g(y)^2      whenever W(y) >= M    (*)

needs to hold with a finite constant c_N. On a compact annulus
{M <= W <= N} such a constant always exists; this module estimates it by
sampling and verifies (*) on random points, and separately probes whether
the unscaled iteration already admits a global constant (in which case no
scaling is necessary for stability).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SAProblem, as_state, schedule_value
from .errors import ConfigError, EmptyRegionError
from .regions import Box, annulus_sample, enclosing_box, region_sample

Array = np.ndarray


@dataclass(frozen=True)
class StabilizerConfig:
    """Thresholds and the certified growth constant for one problem.

    threshold_N may be math.inf, the explicit "never scale" sentinel; the
    scaler then reduces to the identity.
    """

    threshold_M: int
    threshold_N: float
    margin: float
    c_N: float
    annulus_samples: int
    sample_box: Box

    def __post_init__(self):
        if self.threshold_M < 1:
            raise ConfigError("threshold_M must be a positive integer")
        if not self.threshold_N > self.threshold_M:
            raise ConfigError("threshold_N must exceed threshold_M")
        if not self.margin > 1.0:
            raise ConfigError("margin must be strictly greater than 1")
        if not self.c_N > 1.0:
            raise ConfigError("c_N must be strictly greater than 1")
        if self.annulus_samples < 1:
            raise ConfigError("annulus_samples must be positive")

    @classmethod
    def inactive(cls, threshold_M: int, sample_box: Box) -> "StabilizerConfig":
        """The N = inf sentinel config: g identically 1."""
        return cls(
            threshold_M=threshold_M,
            threshold_N=math.inf,
            margin=1.05,
            c_N=1.05,
            annulus_samples=1,
            sample_box=sample_box,
        )


def _growth_ratio(problem: SAProblem, y: Array) -> float:
    """(|h(y)|^2 + f(y)) / W(y); the quantity c_N must dominate."""
    hv = np.asarray(problem.drift.eval(y), dtype=float)
    hh = float(np.dot(hv, hv))
    fv = float(problem.noise.var_bound(y))
    w = float(problem.lyapunov.value(y))
    return (hh + fv) / w


def _g_from(w: float, hh: float, fv: float, margin: float) -> float:
    # shared formula; the compiled kernel mirrors this operation order
    v = margin * math.sqrt((hh + fv) / w)
    return v if v > 1.0 else 1.0


def scaling_factor(config: StabilizerConfig, problem: SAProblem, y: Array) -> float:
    """g(y) >= 1; exactly 1 on {W <= N}."""
    y = as_state(y)
    w = float(problem.lyapunov.value(y))
    if not w > config.threshold_N:
        return 1.0
    hv = np.asarray(problem.drift.eval(y), dtype=float)
    hh = float(np.dot(hv, hv))
    fv = float(problem.noise.var_bound(y))
    return _g_from(w, hh, fv, config.margin)


def adaptive_step(
    config: StabilizerConfig, problem: SAProblem, n: int, y: Array
) -> float:
    """The effective step a(n) / g(y)."""
    return schedule_value(problem.schedule, n) / scaling_factor(config, problem, y)


def _annulus_sup(
    problem: SAProblem,
    M: float,
    N: float,
    samples: int,
    rng: np.random.Generator,
    box: Box,
) -> tuple[float, Array | None]:
    pts = annulus_sample(
        problem.lyapunov.value, float(M), float(N), box, rng, samples
    )
    best, arg = -math.inf, None
    for p in pts:
        r = _growth_ratio(problem, p)
        if r > best:
            best, arg = r, p
    return best, arg


def estimate_cN(
    problem: SAProblem,
    M: int,
    N: float,
    samples: int,
    margin: float,
    rng: np.random.Generator,
    box: Box | None = None,
) -> float:
    """Sampled estimate of the growth constant on the annulus {M <= W <= N}.

    Returns margin * max(1, sup of (|h|^2+f)/W over the samples); the floor
    keeps the constant strictly above 1 even when the annulus ratio is
    small, and the margin absorbs the gap between a sampled and a true sup.
    """
    if not (N > M):
        raise ConfigError("threshold_N must exceed threshold_M")
    if not math.isfinite(N):
        raise ConfigError("estimate_cN needs a finite threshold_N")
    if box is None:
        box = problem.box or enclosing_box(
            problem.lyapunov.value,
            float(N),
            problem.dimension,
            gradient=problem.lyapunov.gradient,
        )
    sup, _ = _annulus_sup(problem, M, N, samples, rng, box)
    return margin * max(1.0, sup)


def configure(
    problem: SAProblem,
    M: int,
    N: float,
    margin: float,
    samples: int,
    rng: np.random.Generator,
    box: Box | None = None,
) -> StabilizerConfig:
    """Build a StabilizerConfig with c_N estimated from the annulus."""
    if not math.isfinite(N):
        if box is None:
            box = problem.box or Box.cube(-16.0, 16.0, problem.dimension)
        return StabilizerConfig(
            threshold_M=M,
            threshold_N=math.inf,
            margin=margin,
            c_N=max(margin, 1.05),
            annulus_samples=samples,
            sample_box=box,
        )
    if box is None:
        box = problem.box or enclosing_box(
            problem.lyapunov.value,
            float(N),
            problem.dimension,
            gradient=problem.lyapunov.gradient,
        )
    c = estimate_cN(problem, M, N, samples, margin, rng, box=box)
    return StabilizerConfig(
        threshold_M=M,
        threshold_N=float(N),
        margin=margin,
        c_N=c,
        annulus_samples=samples,
        sample_box=box,
    )


def choose_threshold_N(
    problem: SAProblem,
    M: int,
    margin: float,
    samples: int,
    rng: np.random.Generator,
    box: Box | None = None,
    max_candidates: int = 16,
    rel_tol: float = 0.01,
) -> int:
    """Smallest integer N > M whose annulus sup estimate looks converged.

    "Converged" means doubling the sample count moves the estimated sup by
    less than rel_tol relative. A sizing aid, not a certificate.
    """
    if box is None:
        box = problem.box or Box.cube(-16.0, 16.0, problem.dimension)
    for N in range(M + 1, M + 1 + max_candidates):
        try:
            s1, _ = _annulus_sup(problem, M, N, samples, rng, box)
            s2, _ = _annulus_sup(problem, M, N, 2 * samples, rng, box)
        except EmptyRegionError:
            continue
        denom = max(abs(s2), 1.0)
        if abs(s2 - s1) / denom < rel_tol:
            return N
    raise ConfigError(
        f"no threshold_N in ({M}, {M + max_candidates}] gave a stable "
        "annulus estimate; pass one explicitly"
    )


@dataclass(frozen=True)
class WgcReport:
    """Outcome of sampling the growth condition (*) over {W >= M}."""

    samples: int
    violations: int
    worst_ratio: float  # max of rhs / lhs; < 1 everywhere iff no violation
    worst_point: tuple[float, ...]

    @property
    def ok(self) -> bool:
        return self.violations == 0


def verify_wgc(
    config: StabilizerConfig,
    problem: SAProblem,
    samples: int,
    rng: np.random.Generator,
) -> WgcReport:
    """Sample {W >= M} inside the config's box and test (*) pointwise.

    A point violates when c_N W(y) <= (|h(y)|^2 + f(y)) / g(y)^2. With g
    from this module the scaled ratio is capped near 1/margin^2 outside
    {W <= N}, so violations indicate a c_N estimated from too few samples
    or an annulus sup that random sampling missed.
    """
    M = float(config.threshold_M)
    W = problem.lyapunov.value
    pts = region_sample(
        lambda p: float(W(p)) >= M, config.sample_box, rng, samples
    )
    violations = 0
    worst, worst_pt = -math.inf, pts[0]
    for p in pts:
        w = float(W(p))
        hv = np.asarray(problem.drift.eval(p), dtype=float)
        hh = float(np.dot(hv, hv))
        fv = float(problem.noise.var_bound(p))
        if w > config.threshold_N:
            g = _g_from(w, hh, fv, config.margin)
        else:
            g = 1.0
        ratio = (hh + fv) / (g * g * config.c_N * w)
        if ratio >= 1.0:
            violations += 1
        if ratio > worst:
            worst, worst_pt = ratio, p
    return WgcReport(
        samples=len(pts),
        violations=violations,
        worst_ratio=worst,
        worst_point=tuple(np.asarray(worst_pt).tolist()),
    )


@dataclass(frozen=True)
class CInfinityReport:
    """Sampled sup of (|h|^2 + f) / (1 wedge W) over a box.

    When this sup is finite globally, the unscaled iteration already
    satisfies the growth condition with a global constant and no scaling is
    needed for stability. verdict "pass" means the sampled sup looks finite
    and interior; "inconclusive" means it sat on the sampling boundary or
    hit the W = 0 sentinel, so nothing global can be concluded.
    """

    estimate: float
    verdict: str  # "pass" | "inconclusive"
    argmax: tuple[float, ...]
    boundary_dominated: bool
    sentinel_hit: bool

    @property
    def ok(self) -> bool:
        return self.verdict == "pass"


def check_c_infinity(
    problem: SAProblem,
    samples: int,
    box: Box,
    rng: np.random.Generator,
) -> CInfinityReport:
    """Estimate sup over the box of (|h(y)|^2 + f(y)) / (1 wedge W(y)).

    When this sup is finite globally the unscaled iteration already
    satisfies the growth condition with some c and scaling is optional;
    a sampled sup can only ever certify the box, so any boundary-dominated
    max yields "inconclusive". Points with W = 0 and a positive numerator
    make the ratio infinite, reported via the sentinel.

    The point set is a deterministic lattice (odd per-axis count, so the
    center of a symmetric box is probed exactly) plus uniform draws.
    """
    d = problem.dimension
    per_axis = max(3, int(round(max(samples // 2, 9) ** (1.0 / d))))
    if per_axis % 2 == 0:
        per_axis += 1
    lattice = box.lattice(per_axis)
    randoms = box.sample(rng, max(samples - len(lattice), 16))
    pts = np.vstack([lattice, randoms])

    best, arg = -math.inf, pts[0]
    sentinel = False
    for p in pts:
        hv = np.asarray(problem.drift.eval(p), dtype=float)
        num = float(np.dot(hv, hv)) + float(problem.noise.var_bound(p))
        w = float(problem.lyapunov.value(p))
        if num == 0.0:
            ratio = 0.0
        elif w == 0.0:
            ratio = math.inf
            sentinel = True
        else:
            ratio = num / w if w < 1.0 else num  # num / (1 wedge W)
        if ratio > best:
            best, arg = ratio, p

    # boundary domination: argmax within the outer 10% shell of the box
    rel = (np.asarray(arg) - box.lo) / box.widths
    edge = float(np.min(np.minimum(rel, 1.0 - rel)))
    boundary = edge <= 0.05 and best > 0.0
    verdict = "pass" if (math.isfinite(best) and not boundary) else "inconclusive"
    return CInfinityReport(
        estimate=best,
        verdict=verdict,
        argmax=tuple(np.asarray(arg).tolist()),
        boundary_dominated=boundary,
        sentinel_hit=sentinel,
    )
