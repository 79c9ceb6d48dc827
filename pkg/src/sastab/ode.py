"""Limiting o.d.e. tools: integration, descent audit, equilibria, flow deviation.

The iteration's mean dynamics is the flow of dx/dt = h(x). This module
integrates that flow with an embedded Runge-Kutta pair, audits the descent
assumption (h . grad W < 0 above the Lyapunov floor), locates scalar
equilibria, and measures how far a recorded trajectory drifts from the flow
over an algorithmic-time window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DriftField, SAProblem, as_state, drift_dot_grad
from .errors import IntegrationError
from .regions import Box, annulus_sample, enclosing_box

Array = np.ndarray

# Dormand-Prince 5(4) tableau. The first propagated solution is 5th order
# (FSAL: its last stage is the next step's first).
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
# error estimate coefficients: b5 - b4
_E = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
# PI controller exponents (error this step, error previous step)
_ALPHA = 0.7 / 5.0
_BETA = 0.4 / 5.0


@dataclass(frozen=True)
class FlowResult:
    """One integrated flow segment."""

    endpoint: tuple[float, ...]
    times: Array
    states: Array
    accepted_steps: int
    rejected_steps: int


def _error_norm(err: Array, y_old: Array, y_new: Array, rel_tol, abs_tol) -> float:
    scale = abs_tol + rel_tol * np.maximum(np.abs(y_old), np.abs(y_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(f, t0, y0, f0, T, rel_tol, abs_tol) -> float:
    # Hairer-Norsett-Wanner starting step selection, simplified
    scale = abs_tol + rel_tol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * f0
    f1 = f(y1)
    d2 = float(np.sqrt(np.mean(((f1 - f0) / scale) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, T)


def integrate(
    field: DriftField,
    u,
    T: float,
    rel_tol: float = 1e-8,
    abs_tol: float = 1e-10,
    max_steps: int = 10**6,
) -> FlowResult:
    """Solve dx/dt = h(x), x(0) = u, on [0, T].

    Embedded Dormand-Prince 5(4) pair with PI step-size control; local
    error per step held within abs_tol + rel_tol * |x|. Records every
    accepted step. Raises IntegrationError (with the prefix integrated so
    far attached as .partial) on step-size underflow, the numeric signature
    of finite-time blow-up or stiffness beyond this integrator.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if rel_tol <= 0 or abs_tol <= 0:
        raise ValueError("tolerances must be positive")
    y = as_state(u).copy()
    f = lambda z: np.asarray(field.eval(z), dtype=float)

    t = 0.0
    times = [0.0]
    states = [y.copy()]
    k = [np.zeros_like(y) for _ in range(7)]
    k[0] = f(y)
    h = _initial_step(f, t, y, k[0], T, rel_tol, abs_tol)
    accepted = rejected = 0
    prev_err = -1.0  # no PI history yet
    hmin = 1e-14 * max(1.0, T)

    while t < T:
        if accepted + rejected >= max_steps:
            raise IntegrationError(
                f"exceeded {max_steps} steps at t={t}",
                partial=_result(times, states, accepted, rejected),
            )
        h = min(h, T - t)
        if h < hmin:
            raise IntegrationError(
                f"step size underflow at t={t} (h={h:.3e})",
                partial=_result(times, states, accepted, rejected),
            )
        for i in range(1, 7):
            yi = y.copy()
            for j, a in enumerate(_A[i]):
                if a != 0.0:
                    yi += (h * a) * k[j]
            k[i] = f(yi)
        y_new = y.copy()
        for j, b in enumerate(_B5):
            if b != 0.0:
                y_new += (h * b) * k[j]
        err_vec = np.zeros_like(y)
        for j, e in enumerate(_E):
            if e != 0.0:
                err_vec += (h * e) * k[j]
        if not np.all(np.isfinite(y_new)):
            raise IntegrationError(
                f"solution became non-finite at t={t}",
                partial=_result(times, states, accepted, rejected),
            )
        err = _error_norm(err_vec, y, y_new, rel_tol, abs_tol)

        if err <= 1.0:
            t += h
            y = y_new
            k[0] = k[6]  # FSAL
            times.append(t)
            states.append(y.copy())
            accepted += 1
            if err == 0.0:
                factor = _MAX_FACTOR
            elif prev_err > 0.0:
                factor = _SAFETY * err ** (-_ALPHA) * prev_err**_BETA
            else:
                factor = _SAFETY * err ** (-0.2)
            h *= min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
            prev_err = max(err, 1e-10)
        else:
            rejected += 1
            h *= max(_MIN_FACTOR, _SAFETY * err ** (-0.2))
    return _result(times, states, accepted, rejected)


def _result(times, states, accepted, rejected) -> FlowResult:
    st = np.array(states)
    return FlowResult(
        endpoint=tuple(st[-1].tolist()),
        times=np.array(times),
        states=st,
        accepted_steps=accepted,
        rejected_steps=rejected,
    )


@dataclass(frozen=True)
class DescentReport:
    """Sampled sup of the Lyapunov derivative on {M <= W <= m}."""

    sup_wdot: float
    argmax: tuple[float, ...]
    samples: int
    verdict: str  # "pass" | "fail"

    @property
    def ok(self) -> bool:
        return self.verdict == "pass"


def check_descent(
    problem: SAProblem,
    M: int,
    m: float,
    samples: int,
    rng: np.random.Generator,
    box: Box | None = None,
) -> DescentReport:
    """Audit h . grad W < 0 on the annulus {M <= W <= m}.

    The sampled sup is a lower bound on the true sup; a pass is evidence,
    a fail (sup >= 0) is a genuine counterexample to descent.
    """
    if not m > M:
        raise ValueError("level m must exceed threshold M")
    if box is None:
        box = problem.box or enclosing_box(
            problem.lyapunov.value,
            float(m),
            problem.dimension,
            gradient=problem.lyapunov.gradient,
        )
    pts = annulus_sample(
        problem.lyapunov.value, float(M), float(m), box, rng, samples
    )
    best, arg = -math.inf, pts[0]
    for p in pts:
        v = drift_dot_grad(problem, p)
        if v > best:
            best, arg = v, p
    return DescentReport(
        sup_wdot=best,
        argmax=tuple(np.asarray(arg).tolist()),
        samples=len(pts),
        verdict="pass" if best < 0.0 else "fail",
    )


def equilibria_1d(
    field: DriftField,
    interval: tuple[float, float],
    grid: int,
    tol: float = 1e-10,
) -> list[float]:
    """Zeros of a scalar field located by sign-change bisection.

    Grid zeros are taken as-is; each sign change is bisected until the
    bracket is narrower than tol. Roots the grid cannot see (even-order
    touches, sub-grid wiggles) are missed by construction.
    """
    if field.dimension != 1:
        raise ValueError("equilibria_1d needs a one-dimensional field")
    if grid < 2:
        raise ValueError("grid must have at least 2 points")
    lo, hi = float(interval[0]), float(interval[1])
    if hi <= lo:
        raise ValueError("interval must satisfy lo < hi")
    xs = np.linspace(lo, hi, grid)
    fs = np.array([float(field.eval(np.array([x]))[0]) for x in xs])
    roots: list[float] = []
    for i in range(grid):
        if fs[i] == 0.0:
            roots.append(float(xs[i]))
    for i in range(grid - 1):
        if fs[i] * fs[i + 1] < 0.0:
            a, b = float(xs[i]), float(xs[i + 1])
            fa = fs[i]
            while b - a > tol:
                c = 0.5 * (a + b)
                fc = float(field.eval(np.array([c]))[0])
                if fc == 0.0:
                    a = b = c
                    break
                if fa * fc < 0.0:
                    b = c
                else:
                    a, fa = c, fc
            roots.append(0.5 * (a + b))
    roots.sort()
    deduped: list[float] = []
    for r in roots:
        if not deduped or abs(r - deduped[-1]) > 1e-9:
            deduped.append(r)
    return deduped


@dataclass(frozen=True)
class FlowDeviation:
    """Max distance between recorded iterates and the flow over a window."""

    max_deviation: float
    at_index: int


def flow_compare(
    trajectory,
    problem: SAProblem,
    window: tuple[int, int],
    rel_tol: float = 1e-8,
) -> FlowDeviation:
    """Compare iterates y_j against the flow started at y_{n_i}.

    For each j in (n_i, n_j], the flow is advanced by the recorded
    effective step a_eff(j-1), i.e. evaluated at elapsed algorithmic time
    sum of a_eff over [n_i, j), and compared with y_j. The window may
    include the terminal state (index == number of recorded rows).
    """
    i, j = int(window[0]), int(window[1])
    if not (0 <= i <= j <= trajectory.steps):
        raise ValueError(
            f"window {window} out of range for a trajectory of {trajectory.steps} rows"
        )
    if i == j:
        return FlowDeviation(0.0, i)
    abs_tol = min(1e-10, rel_tol)
    z = trajectory.state(i).copy()
    best, arg = 0.0, i
    for n in range(i, j):
        dt = float(trajectory.a_eff[n])
        z = np.asarray(
            integrate(problem.drift, z, dt, rel_tol=rel_tol, abs_tol=abs_tol).endpoint
        )
        dev = float(np.linalg.norm(trajectory.state(n + 1) - z))
        if dev > best:
            best, arg = dev, n + 1
    return FlowDeviation(best, arg)
