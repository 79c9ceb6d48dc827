"""Iteration engine: vanilla, adaptive, and projected runs.

One step of the recursion is

    y' = y + (a(n)/g) [h(y) + M_{n+1}]

with g = 1 (vanilla, projection) or the stabilizer's scaling factor
evaluated at y (adaptive). Projection mode then maps y' radially onto the
ball of the configured radius. The noise draw happens before g is
computed; g depends only on y, so the order is irrelevant probabilistically
but is fixed here for stream reproducibility.

Overflow policy: after each step the candidate state is checked; a
non-finite coordinate or non-finite W(y') freezes the run with the
overflowed flag set and the offending state as terminal. Divergence is an
observable, not an exception.

Determinism: each trajectory owns a counter-based Philox stream seeded
from its own seed. Runs are bit-identical across processes, thread counts,
and the compiled/pure engine paths (the compiled kernel calls the same
generator through numpy's C API and the same libm).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

from . import _codes, registry
from .core import SAProblem, as_state, sample_noise, schedule_array, schedule_value
from .errors import ConfigError, IncompleteTraceError
from .stabilizer import StabilizerConfig, _g_from

Array = np.ndarray

MODES = ("vanilla", "adaptive", "projection")

if os.environ.get("SASTAB_NO_KERNEL") == "1":
    _kernel = None
else:
    try:
        from . import _kernel
    except ImportError:
        _kernel = None

KERNEL_AVAILABLE = _kernel is not None


def make_rng(seed: int) -> np.random.Generator:
    """The per-trajectory stream: Philox keyed by the seed alone."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


@dataclass
class EngineState:
    """Mutable cursor of one run; rng is the filtration surrogate."""

    n: int
    y: Array
    rng: np.random.Generator | None
    overflowed: bool = False


@dataclass(frozen=True)
class RunConfig:
    """Everything one seeded run needs.

    problem may be a registry name or an SAProblem instance. stabilizer is
    required in adaptive mode; radius in projection mode.
    """

    problem: str | SAProblem
    mode: str
    x0: tuple[float, ...]
    horizon: int
    seed: int
    stabilizer: StabilizerConfig | None = None
    radius: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if self.mode == "adaptive" and self.stabilizer is None:
            raise ConfigError("adaptive mode needs a stabilizer config")
        if self.mode == "projection":
            if self.radius is None or not self.radius > 0:
                raise ConfigError("projection mode needs a positive radius")


@dataclass
class Trajectory:
    """Full per-step record of one run.

    Row n holds the pre-step state: (n, a(n), g(y_n), a_eff(n), W(y_n),
    y_n) plus the noise draw M_{n+1} consumed leaving that row. terminal
    is the state after the last recorded step (the first non-finite state
    when overflowed).
    """

    problem: str
    mode: str
    seed: int
    a: Array
    g: Array
    a_eff: Array
    W: Array
    y: Array  # (steps, d)
    noise: Array | None  # (steps, d); None for traces loaded without draws
    terminal: EngineState | None  # None for traces loaded from file

    @property
    def steps(self) -> int:
        return len(self.a)

    @property
    def dimension(self) -> int:
        return self.y.shape[1]

    @property
    def overflowed(self) -> bool:
        return self.terminal.overflowed if self.terminal is not None else False

    def state(self, n: int) -> Array:
        """y_n for n in [0, steps]; index steps is the terminal state."""
        if n == self.steps:
            if self.terminal is None:
                raise IncompleteTraceError(
                    "trajectory has no terminal state record"
                )
            return self.terminal.y
        return self.y[n]

    def rows(self) -> Iterator[tuple[int, float, float, float, float, Array]]:
        for n in range(self.steps):
            yield (
                n,
                float(self.a[n]),
                float(self.g[n]),
                float(self.a_eff[n]),
                float(self.W[n]),
                self.y[n],
            )


@dataclass
class RunSummary:
    """Per-seed digest of a run (ensemble output unit)."""

    seed: int
    steps: int
    overflowed: bool
    sup_norm: float
    last_scaled: int | None
    terminal_y: tuple[float, ...]
    terminal_W: float
    error: str | None = None
    descent_violations: int | None = None
    trajectory: Trajectory | None = field(default=None, repr=False)


def _resolve(problem: str | SAProblem) -> SAProblem:
    if isinstance(problem, SAProblem):
        return problem
    return registry.get(problem).problem


def step(
    state: EngineState,
    problem: SAProblem,
    mode: str,
    stabilizer: StabilizerConfig | None = None,
    radius: float | None = None,
    noise: Array | None = None,
) -> EngineState:
    """Advance one step, returning the successor state.

    Mirrors the run loop exactly (the trace self-consistency test replays
    recorded noise through here). An explicit noise vector bypasses the
    rng draw; otherwise the state's rng advances.
    """
    if state.overflowed:
        raise ValueError("state is frozen after overflow")
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    if mode == "adaptive" and stabilizer is None:
        raise ConfigError("adaptive mode needs a stabilizer config")
    if mode == "projection" and (radius is None or not radius > 0):
        raise ConfigError("projection mode needs a positive radius")
    y = state.y
    W = problem.lyapunov.value
    w = float(W(y))
    hv = np.asarray(problem.drift.eval(y), dtype=float)
    if noise is None:
        m = sample_noise(problem.noise, y, state.rng)
    else:
        m = np.asarray(noise, dtype=float)
    if mode == "adaptive" and w > stabilizer.threshold_N:
        hh = float(np.dot(hv, hv))
        fv = float(problem.noise.var_bound(y))
        g = _g_from(w, hh, fv, stabilizer.margin)
    else:
        g = 1.0
    a_n = schedule_value(problem.schedule, state.n)
    a_eff = a_n / g
    y_next = y + a_eff * (hv + m)
    if mode == "projection":
        nrm = float(np.sqrt(np.dot(y_next, y_next)))
        if nrm > radius:
            y_next = (y_next / nrm) * radius
    w_next = float(W(y_next))
    bad = (not np.all(np.isfinite(y_next))) or (not math.isfinite(w_next))
    return EngineState(
        n=state.n + 1, y=y_next, rng=state.rng, overflowed=bool(bad)
    )


def _run_python(
    problem: SAProblem,
    mode: str,
    x0: Array,
    a: Array,
    rng: np.random.Generator,
    stabilizer: StabilizerConfig | None,
    radius: float | None,
    out_g: Array,
    out_aeff: Array,
    out_w: Array,
    out_y: Array,
    out_noise: Array,
) -> tuple[int, bool, Array]:
    horizon = len(a)
    W = problem.lyapunov.value
    drift = problem.drift.eval
    fvar = problem.noise.var_bound
    adaptive = mode == "adaptive"
    project = mode == "projection"
    N = stabilizer.threshold_N if adaptive else math.inf
    margin = stabilizer.margin if adaptive else 1.0

    y = x0.copy()
    w = float(W(y))
    for n in range(horizon):
        hv = np.asarray(drift(y), dtype=float)
        m = sample_noise(problem.noise, y, rng)
        if adaptive and w > N:
            hh = float(np.dot(hv, hv))
            fv = float(fvar(y))
            g = _g_from(w, hh, fv, margin)
        else:
            g = 1.0
        a_eff = a[n] / g
        y_next = y + a_eff * (hv + m)
        if project:
            nrm = float(np.sqrt(np.dot(y_next, y_next)))
            if nrm > radius:
                y_next = (y_next / nrm) * radius
        out_g[n] = g
        out_aeff[n] = a_eff
        out_w[n] = w
        out_y[n] = y
        out_noise[n] = m
        w_next = float(W(y_next))
        if (not np.all(np.isfinite(y_next))) or (not math.isfinite(w_next)):
            return n + 1, True, y_next
        y = y_next
        w = w_next
    return horizon, False, y


def _kernel_eligible(problem: SAProblem, mode: str) -> bool:
    return (
        _kernel is not None
        and problem.kernel is not None
        and problem.dimension == 1
    )


def _run_kernel(
    problem: SAProblem,
    mode: str,
    x0: Array,
    a: Array,
    bit_generator,
    stabilizer: StabilizerConfig | None,
    radius: float | None,
    out_g: Array,
    out_aeff: Array,
    out_w: Array,
    out_y: Array,
    out_noise: Array,
) -> tuple[int, bool, Array]:
    ks = problem.kernel
    mode_code = {
        "vanilla": _codes.MODE_VANILLA,
        "adaptive": _codes.MODE_ADAPTIVE,
        "projection": _codes.MODE_PROJECTION,
    }[mode]
    N = stabilizer.threshold_N if mode == "adaptive" else math.inf
    margin = stabilizer.margin if mode == "adaptive" else 1.0
    steps, overflowed, terminal = _kernel.run_scalar(
        float(x0[0]),
        len(a),
        a,
        ks.drift_code,
        ks.drift_p,
        ks.w_center,
        ks.noise_kind,
        ks.scale_code,
        ks.scale_p,
        ks.noise_p0,
        ks.noise_p1,
        ks.fvar_kind,
        ks.fvar_p,
        mode_code,
        float(N),
        float(margin),
        float(radius if radius is not None else 0.0),
        bit_generator,
        out_g,
        out_aeff,
        out_w,
        out_y[:, 0],
        out_noise[:, 0],
    )
    return steps, bool(overflowed), np.array([terminal])


def run(config: RunConfig, backend: str = "auto") -> Trajectory:
    """One seeded run to the horizon or the first overflow.

    backend selects the engine path: "auto" prefers the compiled kernel
    when the problem has a descriptor for it, "python" forces the pure
    loop, "kernel" demands the compiled one (raises if unavailable). Both
    paths produce bit-identical trajectories.
    """
    problem = _resolve(config.problem)
    x0 = as_state(config.x0)
    if x0.shape[0] != problem.dimension:
        raise ConfigError(
            f"x0 has dimension {x0.shape[0]}, problem needs {problem.dimension}"
        )
    if backend not in ("auto", "python", "kernel"):
        raise ConfigError(f"unknown backend {backend!r}")
    horizon = config.horizon
    a = schedule_array(problem.schedule, horizon)
    d = problem.dimension
    out_g = np.empty(horizon)
    out_aeff = np.empty(horizon)
    out_w = np.empty(horizon)
    out_y = np.empty((horizon, d))
    out_noise = np.empty((horizon, d))

    rng = make_rng(config.seed)
    use_kernel = _kernel_eligible(problem, config.mode) and backend != "python"
    if backend == "kernel" and not use_kernel:
        raise ConfigError(
            "kernel backend requested but unavailable "
            "(no compiled module or no kernel descriptor for this problem)"
        )
    if use_kernel:
        steps, overflowed, terminal = _run_kernel(
            problem,
            config.mode,
            x0,
            a,
            rng.bit_generator,
            config.stabilizer,
            config.radius,
            out_g,
            out_aeff,
            out_w,
            out_y,
            out_noise,
        )
    else:
        steps, overflowed, terminal = _run_python(
            problem,
            config.mode,
            x0,
            a,
            rng,
            config.stabilizer,
            config.radius,
            out_g,
            out_aeff,
            out_w,
            out_y,
            out_noise,
        )
    return Trajectory(
        problem=problem.name,
        mode=config.mode,
        seed=config.seed,
        a=a[:steps],
        g=out_g[:steps],
        a_eff=out_aeff[:steps],
        W=out_w[:steps],
        y=out_y[:steps],
        noise=out_noise[:steps],
        terminal=EngineState(
            n=steps, y=terminal, rng=rng, overflowed=overflowed
        ),
    )


def summarize_run(traj: Trajectory, problem: SAProblem) -> RunSummary:
    """Digest one trajectory (the ensemble's per-seed record)."""
    if traj.overflowed:
        sup = math.inf
    else:
        sup = float(np.max(np.linalg.norm(traj.y, axis=1)))
        sup = max(sup, float(np.linalg.norm(traj.terminal.y)))
    scaled = np.nonzero(traj.g > 1.0)[0]
    last_scaled = int(scaled[-1]) if len(scaled) else None
    tw = float(problem.lyapunov.value(traj.terminal.y))
    return RunSummary(
        seed=traj.seed,
        steps=traj.steps,
        overflowed=traj.overflowed,
        sup_norm=sup,
        last_scaled=last_scaled,
        terminal_y=tuple(np.asarray(traj.terminal.y).tolist()),
        terminal_W=tw,
    )


def run_ensemble(
    config: RunConfig,
    seeds: Sequence[int],
    workers: int = 1,
    keep_trajectories: bool = False,
    backend: str = "auto",
) -> list[RunSummary]:
    """One run per seed; summaries in seed order regardless of scheduling.

    Per-seed failures are recorded on the summary (error field), not
    raised, so one bad seed cannot sink an ensemble. The compiled kernel
    releases the GIL, so threads give real parallelism on the hot loop.
    """
    if not seeds:
        raise ConfigError("seeds must be nonempty")
    problem = _resolve(config.problem)

    def one(seed: int) -> RunSummary:
        try:
            traj = run(replace(config, seed=int(seed)), backend=backend)
            s = summarize_run(traj, problem)
            if keep_trajectories:
                s.trajectory = traj
            return s
        except Exception as exc:  # recorded, not raised
            return RunSummary(
                seed=int(seed),
                steps=0,
                overflowed=False,
                sup_norm=math.nan,
                last_scaled=None,
                terminal_y=(),
                terminal_W=math.nan,
                error=f"{type(exc).__name__}: {exc}",
            )

    if workers <= 1:
        return [one(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, seeds))
