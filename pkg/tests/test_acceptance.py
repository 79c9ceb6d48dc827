"""Acceptance gate: the empirical claims the package is built to certify.

Each test prints one pass/fail line. Thresholds were validated against
oracle ensembles before being pinned here; every Monte Carlo bound has
wide headroom at these seeds.
"""

import math
import time

import numpy as np
import pytest

from sastab import (
    DiagnosticsConfig,
    DriftField,
    RunConfig,
    SAProblem,
    check_descent,
    equilibria_1d,
    gradient_check,
    integrate,
    martingale_partial_sums,
    run,
    run_ensemble,
    verify_wgc,
    window_descent_report,
)


def _line(num, label, ok):
    print(f"criterion {num:2d} ({label}): {'PASS' if ok else 'FAIL'}")
    assert ok, f"criterion {num} ({label}) failed"


def test_criterion_01_stabilized_runs_stay_bounded(example1, stab1):
    t0 = time.perf_counter()
    cfg = RunConfig(
        problem="example1", mode="adaptive", x0=example1.x0, horizon=10_000, seed=0,
        stabilizer=stab1,
    )
    summaries = run_ensemble(cfg, range(100), keep_trajectories=True)
    elapsed = time.perf_counter() - t0
    overflows = sum(1 for s in summaries if s.overflowed)
    tail_max = max(
        float(np.abs(s.trajectory.y[-1000:]).max()) for s in summaries
    )
    ok = overflows == 0 and tail_max <= 1.2 and elapsed < 30.0
    _line(1, "stabilized ensemble bounded", ok)


def test_criterion_02_unstabilized_scheme_blows_up(example1):
    cfg = RunConfig(
        problem="example1", mode="vanilla", x0=example1.x0, horizon=50, seed=0
    )
    summaries = run_ensemble(cfg, range(100))
    overflows = sum(1 for s in summaries if s.overflowed)
    _line(2, "raw scheme overflows", overflows >= 95)


def test_criterion_03_scaling_switches_off_eventually(adaptive_ensemble1):
    finite = sum(
        1 for s in adaptive_ensemble1
        if s.last_scaled is not None and math.isfinite(s.last_scaled)
    )
    early = sum(
        1 for s in adaptive_ensemble1
        if s.last_scaled is not None and s.last_scaled <= 1000
    )
    _line(3, "finitely many scaled steps", finite == 100 and early >= 95)


def test_criterion_04_tame_problem_recovers_raw_scheme(example2, stab2):
    base = dict(problem="example2", x0=example2.x0, horizon=1000)
    ok = True
    for seed in range(10):
        tv = run(RunConfig(mode="vanilla", seed=seed, **base))
        ta = run(RunConfig(mode="adaptive", seed=seed, stabilizer=stab2, **base))
        ok = ok and np.array_equal(tv.y, ta.y) and bool(np.all(ta.g == 1.0))
    _line(4, "inactive scaler recovers raw scheme", ok)


def test_criterion_05_iterates_settle_at_the_equilibrium(adaptive_ensemble1, example1):
    close = sum(
        1 for s in adaptive_ensemble1
        if np.linalg.norm(s.terminal_y) < 0.2
    )
    roots = equilibria_1d(example1.problem.drift, (-10.0, 10.0), grid=2001)
    ok = close >= 90 and len(roots) == 1 and abs(roots[0]) < 1e-9
    _line(5, "convergence to the drift equilibrium", ok)


def test_criterion_06_growth_condition_sampled_clean(example1, example2, stab1, stab2):
    r1 = verify_wgc(stab1, example1.problem, 10_000, np.random.default_rng(0))
    r2 = verify_wgc(stab2, example2.problem, 10_000, np.random.default_rng(0))
    _line(6, "growth condition holds", r1.violations == 0 and r2.violations == 0)


def test_criterion_07_descent_audits(example1, example2, shifted):
    ok = True
    for preset, m in ((example1, 4.0), (example2, 2.0), (shifted, 4.0)):
        rep = check_descent(
            preset.problem, M=preset.threshold_M, m=m, samples=4000,
            rng=np.random.default_rng(0),
        )
        ok = ok and rep.verdict == "pass"
    r1 = check_descent(example1.problem, M=1, m=4.0, samples=4000, rng=np.random.default_rng(0))
    ok = ok and abs(r1.sup_wdot - (-2.0 * math.e)) <= 0.05 * 2.0 * math.e
    flipped = SAProblem(
        name="flipped",
        drift=DriftField(1, lambda x: x * np.exp(np.abs(x))),
        noise=example1.problem.noise,
        lyapunov=example1.problem.lyapunov,
        schedule=example1.problem.schedule,
        box=example1.problem.box,
    )
    bad = check_descent(flipped, M=1, m=4.0, samples=4000, rng=np.random.default_rng(0))
    ok = ok and bad.verdict == "fail" and bad.sup_wdot > 0.0
    _line(7, "descent holds, flipped drift caught", ok)


def test_criterion_08_windowed_descent_dichotomy(adaptive_ensemble1, example1):
    diag = DiagnosticsConfig(T=1.0, m=4, delta=0.05, epsilon=0.05, K=1.0)
    judged = 0
    violated = 0
    for s in adaptive_ensemble1:
        verdicts = window_descent_report(s.trajectory, example1.problem, diag)
        judged += len(verdicts)
        violated += sum(1 for v in verdicts if v.verdict == "violated")
    _line(8, "no violated descent windows", judged > 0 and violated == 0)


def test_criterion_09_martingale_tail_decay(adaptive_ensemble1, example1):
    diag = DiagnosticsConfig(T=1.0, m=4, delta=0.05, epsilon=0.05, K=1.0)
    decayed = 0
    monotone = True
    for s in adaptive_ensemble1:
        tail = martingale_partial_sums(s.trajectory, example1.problem, diag).sup_tail
        monotone = monotone and bool(np.all(np.diff(tail) <= 1e-15))
        if tail[5000] < tail[0]:
            decayed += 1
    _line(9, "martingale tail sups decay", monotone and decayed >= 95)


def test_criterion_10_projection_creates_spurious_rest_point(
    projection_ensemble_shifted, adaptive_ensemble_shifted
):
    boundary = sum(
        1 for s in projection_ensemble_shifted
        if abs(np.linalg.norm(s.terminal_y) - 3.0) < 0.05
    )
    true_eq = sum(
        1 for s in adaptive_ensemble_shifted
        if abs(s.terminal_y[0] - 5.0) < 0.2
    )
    _line(10, "projection pins the boundary, scaling reaches 5", boundary >= 95 and true_eq >= 90)


def test_criterion_11_numerics_certification(example1, example2, shifted, stab1):
    field = DriftField(1, lambda x: -x)
    lin = integrate(field, [1.0], T=1.0)
    ok = abs(lin.endpoint[0] - math.exp(-1.0)) <= 1e-6 * math.exp(-1.0)

    rot = DriftField(2, lambda x: np.array([-x[1], x[0]]))
    end = np.asarray(integrate(rot, [1.0, 0.0], T=2.0 * math.pi).endpoint)
    ok = ok and abs(float(np.linalg.norm(end)) - 1.0) <= 1e-6

    rng = np.random.default_rng(0)
    for preset in (example1, example2, shifted):
        pts = preset.problem.box.sample(rng, 100)
        ok = ok and gradient_check(preset.problem.lyapunov, pts).passed

    cfg = RunConfig(
        problem="example1", mode="adaptive", x0=example1.x0, horizon=1000, seed=0,
        stabilizer=stab1,
    )
    serial = run_ensemble(cfg, range(20), workers=1)
    threaded = run_ensemble(cfg, range(20), workers=8)
    ok = ok and all(
        a.sup_norm == b.sup_norm and a.terminal_y == b.terminal_y
        for a, b in zip(serial, threaded)
    )
    _line(11, "integrator, gradients, determinism", ok)
