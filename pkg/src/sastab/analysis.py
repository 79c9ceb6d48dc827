"""Stability diagnostics on recorded trajectories.

Turns the objects of the stability argument into computable quantities:
level-set hitting times, algorithmic-time windows whose effective steps sum
to T, per-window Lyapunov descent verdicts, the weighted-noise partial sums
whose convergence drives the whole argument, and ensemble averages of the
stopped Lyapunov value.

Membership in a delta-neighbourhood of a sublevel set {W < level} is
decided by the surrogate W < level + epsilon/2 throughout (the geometric
neighbourhood is contained in that slightly larger sublevel set; distance
to a sublevel set is expensive to compute and never needed exactly).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import SAProblem, lipschitz_estimate
from .engine import EngineState, RunSummary, Trajectory
from .errors import IncompleteTraceError
from .regions import enclosing_box

Array = np.ndarray


@dataclass(frozen=True)
class DiagnosticsConfig:
    """Parameters of the windowed descent analysis.

    T is the algorithmic window length; m the level whose sublevel set the
    iterates should descend into; delta/epsilon the neighbourhood and
    descent slacks; K an optional Lipschitz estimate for the drift (filled
    in from lipschitz_estimate when absent).
    """

    T: float = 1.0
    m: int = 2
    delta: float = 0.05
    epsilon: float = 0.05
    K: float | None = None

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("window length T must be positive")
        if self.delta <= 0 or self.epsilon <= 0:
            raise ValueError("delta and epsilon must be positive")

    def validated_for(self, problem: SAProblem) -> "DiagnosticsConfig":
        if self.m <= problem.lyapunov.threshold_M:
            raise ValueError(
                f"diagnostics level m={self.m} must exceed the problem's "
                f"threshold M={problem.lyapunov.threshold_M}"
            )
        return self


def sup_norm(traj: Trajectory) -> float:
    """Max |y_n| over the run; the infinity sentinel when overflowed."""
    if traj.steps == 0:
        raise ValueError("empty trajectory")
    if traj.overflowed:
        return math.inf
    best = float(np.max(np.linalg.norm(traj.y, axis=1)))
    if traj.terminal is not None:
        best = max(best, float(np.linalg.norm(traj.terminal.y)))
    return best


def hitting_time(traj: Trajectory, k: int, m: float) -> float:
    """First index n >= k with W_n < m; math.inf when never."""
    if not (0 <= k < traj.steps):
        raise ValueError(f"start index {k} outside [0, {traj.steps})")
    hits = np.nonzero(traj.W[k:] < m)[0]
    return float(k + hits[0]) if len(hits) else math.inf


def last_scaled_index(traj: Trajectory) -> int | None:
    """Largest n with g_n > 1; None when the scaler never engaged."""
    scaled = np.nonzero(traj.g > 1.0)[0]
    return int(scaled[-1]) if len(scaled) else None


def window_indices(traj: Trajectory, n0: int, T: float) -> list[int]:
    """Indices n0 < n1 < ... with sum of a_eff over [n_i, n_{i+1}] >= T.

    Each next index is the first n > n_i at which the inclusive sum from
    n_i reaches T. The sequence stops when the remaining tail cannot reach
    T (that unfinished window is dropped).
    """
    if not (0 <= n0 < traj.steps):
        raise ValueError(f"start index {n0} outside [0, {traj.steps})")
    if T <= 0:
        raise ValueError("T must be positive")
    idx = [n0]
    acc = float(traj.a_eff[n0])
    for n in range(n0 + 1, traj.steps):
        acc += float(traj.a_eff[n])
        if acc >= T:
            idx.append(n)
            acc = float(traj.a_eff[n])
    return idx


@dataclass(frozen=True)
class WindowVerdict:
    """Judgement of one [start, end] window starting inside {W < m}."""

    start: int
    end: int
    w_start: float
    w_end: float
    verdict: str  # "descended" | "trapped" | "violated"


def window_descent_report(
    traj: Trajectory,
    problem: SAProblem,
    diag: DiagnosticsConfig,
    n0: int = 0,
) -> list[WindowVerdict]:
    """Per-window Lyapunov verdicts for windows starting inside {W < m}.

    A window descends when W drops by at least epsilon/2 across it; it is
    trapped when its endpoint already sits (in the W-surrogate sense)
    inside the neighbourhood of the floor set {W < M}; anything else is a
    violation of the windowed descent dichotomy.
    """
    diag.validated_for(problem)
    M = problem.lyapunov.threshold_M
    idx = window_indices(traj, n0, diag.T)
    verdicts: list[WindowVerdict] = []
    for i, j in zip(idx[:-1], idx[1:]):
        ws, we = float(traj.W[i]), float(traj.W[j])
        if ws >= diag.m:
            continue
        if we < ws - diag.epsilon / 2.0:
            v = "descended"
        elif we < M + diag.epsilon / 2.0:
            v = "trapped"
        else:
            v = "violated"
        verdicts.append(WindowVerdict(i, j, ws, we, v))
    return verdicts


def diagnostics_start(
    traj: Trajectory, problem: SAProblem, diag: DiagnosticsConfig, n0: int = 0
) -> int | None:
    """First window start whose state lies inside {W < m}; None if never."""
    idx = window_indices(traj, n0, diag.T)
    for i in idx[:-1]:
        if float(traj.W[i]) < diag.m:
            return i
    return None


@dataclass(frozen=True)
class MartingaleDiagnostics:
    """Weighted-noise partial sums and their anchored tail sups.

    partials[q] = sum over n <= q of 1{W_n < m + eps/2} a_eff(n) M_{n+1}.
    sup_tail[k] = sup over q >= k of |partials[q] - partials[-1]|,
    nonincreasing in k by construction; its decay toward 0 is the finite-
    horizon face of the a.s. convergence of the weighted sum.
    """

    partials: Array  # (steps, d)
    sup_tail: Array  # (steps,)


def martingale_partial_sums(
    traj: Trajectory, problem: SAProblem, diag: DiagnosticsConfig
) -> MartingaleDiagnostics:
    if traj.noise is None:
        raise IncompleteTraceError(
            "trajectory carries no noise record; partial sums need the draws "
            "(traces loaded from CSV can be completed via reconstruct_noise)"
        )
    diag.validated_for(problem)
    ind = (traj.W < diag.m + diag.epsilon / 2.0).astype(float)
    weighted = (ind * traj.a_eff)[:, None] * traj.noise
    partials = np.cumsum(weighted, axis=0)
    devs = np.linalg.norm(partials - partials[-1], axis=1)
    sup_tail = np.maximum.accumulate(devs[::-1])[::-1]
    return MartingaleDiagnostics(partials=partials, sup_tail=sup_tail)


def reconstruct_noise(traj: Trajectory, problem: SAProblem) -> Trajectory:
    """Recover noise draws from consecutive iterates of a loaded trace.

    M_{n+1} = (y_{n+1} - y_n)/a_eff(n) - h(y_n) is exact in real
    arithmetic; in floats it reproduces the draws to rounding error. The
    last recorded row becomes the terminal state (its own successor is not
    in the trace), so the result has one row fewer.
    """
    if traj.steps < 2:
        raise IncompleteTraceError("need at least 2 rows to reconstruct noise")
    R = traj.steps - 1
    noise = np.empty((R, traj.dimension))
    for n in range(R):
        hv = np.asarray(problem.drift.eval(traj.y[n]), dtype=float)
        noise[n] = (traj.y[n + 1] - traj.y[n]) / traj.a_eff[n] - hv
    return Trajectory(
        problem=traj.problem,
        mode=traj.mode,
        seed=traj.seed,
        a=traj.a[:R],
        g=traj.g[:R],
        a_eff=traj.a_eff[:R],
        W=traj.W[:R],
        y=traj.y[:R],
        noise=noise,
        terminal=EngineState(n=R, y=traj.y[R].copy(), rng=None, overflowed=False),
    )


def ensemble_lyapunov_moment(
    ensemble: Sequence[Trajectory] | Sequence[RunSummary],
    problem: SAProblem,
    k: int,
    M: float,
) -> Array:
    """Ensemble average of W(y_{n and tau}), tau the first entry below M.

    For each trajectory the Lyapunov value is frozen at the first index
    >= k where W < M; stabilization predicts the returned sequence
    (indexed n = k .. L-1, L the shortest trajectory) stays bounded
    uniformly in the start index k.
    """
    trajs: list[Trajectory] = []
    for item in ensemble:
        t = item.trajectory if isinstance(item, RunSummary) else item
        if t is None:
            raise IncompleteTraceError(
                "ensemble summaries lack trajectories; rerun with keep_trajectories"
            )
        trajs.append(t)
    if not trajs:
        raise ValueError("empty ensemble")
    L = min(t.steps for t in trajs)
    if k < 0 or k >= L:
        raise ValueError(f"start index {k} outside [0, {L})")
    acc = np.zeros(L - k)
    for t in trajs:
        W = t.W[:L]
        hits = np.nonzero(W[k:] < M)[0]
        stopped = W[k:].copy()
        if len(hits):
            tau = int(hits[0])
            stopped[tau:] = stopped[tau]
        acc += stopped
    return acc / len(trajs)


@dataclass
class StabilityReport:
    """Digest of one trajectory's stability diagnostics."""

    sup_norm: float
    hit_times: dict[float, float]  # level -> first index (inf sentinel)
    last_scaled: int | None
    windows: list[tuple[int, int]]
    window_verdicts: list[WindowVerdict]
    diagnostics_start: int | None
    martingale_sup_tail: Array | None
    fluctuation_threshold: float | None  # delta / (2 e^{KT})
    overflow: bool

    @property
    def violated_count(self) -> int:
        return sum(1 for v in self.window_verdicts if v.verdict == "violated")

    def to_dict(self) -> dict:
        tail = self.martingale_sup_tail
        checkpoints = None
        if tail is not None and len(tail):
            picks = sorted({0, len(tail) // 4, len(tail) // 2, 3 * len(tail) // 4, len(tail) - 1})
            checkpoints = {str(i): float(tail[i]) for i in picks}
        return {
            "sup_norm": None if math.isinf(self.sup_norm) else self.sup_norm,
            "hit_times": {
                str(level): (None if math.isinf(t) else t)
                for level, t in self.hit_times.items()
            },
            "last_scaled": self.last_scaled,
            "window_count": len(self.windows),
            "verdicts": {
                "descended": sum(1 for v in self.window_verdicts if v.verdict == "descended"),
                "trapped": sum(1 for v in self.window_verdicts if v.verdict == "trapped"),
                "violated": self.violated_count,
            },
            "diagnostics_start": self.diagnostics_start,
            "sup_tail_checkpoints": checkpoints,
            "fluctuation_threshold": self.fluctuation_threshold,
            "overflow": self.overflow,
        }


def build_report(
    traj: Trajectory,
    problem: SAProblem,
    diag: DiagnosticsConfig,
) -> StabilityReport:
    """Run the full diagnostic battery on one trajectory."""
    diag.validated_for(problem)
    M = problem.lyapunov.threshold_M
    idx = window_indices(traj, 0, diag.T)
    verdicts = window_descent_report(traj, problem, diag)
    if traj.noise is not None:
        tail = martingale_partial_sums(traj, problem, diag).sup_tail
    else:
        tail = None
    K = diag.K
    if K is None:
        box = problem.box or enclosing_box(
            problem.lyapunov.value,
            float(diag.m),
            problem.dimension,
            gradient=problem.lyapunov.gradient,
        )
        K = lipschitz_estimate(problem.drift, box)
    threshold = diag.delta * math.exp(-K * diag.T) / 2.0
    return StabilityReport(
        sup_norm=sup_norm(traj),
        hit_times={
            float(M): hitting_time(traj, 0, float(M)),
            float(diag.m): hitting_time(traj, 0, float(diag.m)),
        },
        last_scaled=last_scaled_index(traj),
        windows=list(zip(idx[:-1], idx[1:])),
        window_verdicts=verdicts,
        diagnostics_start=diagnostics_start(traj, problem, diag),
        martingale_sup_tail=tail,
        fluctuation_threshold=threshold,
        overflow=traj.overflowed,
    )
