"""Trajectory statistics, window verdicts, and martingale diagnostics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sastab import (
    DiagnosticsConfig,
    Trajectory,
    build_report,
    ensemble_lyapunov_moment,
    hitting_time,
    last_scaled_index,
    martingale_partial_sums,
    reconstruct_noise,
    sup_norm,
    window_descent_report,
    window_indices,
)
from sastab.engine import EngineState, make_rng
from sastab.errors import IncompleteTraceError


def synthetic(W, a_eff=None, g=None, noise=None, y=None, terminal_y=None):
    """A hand-built trajectory; only the supplied channels matter."""
    steps = len(W)
    W = np.asarray(W, dtype=float)
    a_eff = np.ones(steps) if a_eff is None else np.asarray(a_eff, dtype=float)
    g = np.ones(steps) if g is None else np.asarray(g, dtype=float)
    if y is None:
        y = np.sqrt(W)[:, None]
    else:
        y = np.asarray(y, dtype=float).reshape(steps, -1)
    if noise is not None:
        noise = np.asarray(noise, dtype=float).reshape(steps, -1)
    terminal = None
    if terminal_y is not None:
        terminal = EngineState(
            n=steps, y=np.atleast_1d(np.asarray(terminal_y, dtype=float)), rng=None
        )
    return Trajectory(
        problem="synthetic",
        mode="vanilla",
        seed=0,
        a=a_eff.copy(),
        g=g,
        a_eff=a_eff,
        W=W,
        y=y,
        noise=noise,
        terminal=terminal,
    )


# ---------------------------------------------------------------------------
# scalar statistics


def test_sup_norm_includes_terminal():
    t = synthetic([1.0, 9.0, 4.0], y=[[1.0], [-3.0], [2.0]], terminal_y=[0.5])
    assert sup_norm(t) == 3.0
    t2 = synthetic([1.0, 1.0], y=[[1.0], [1.0]], terminal_y=[-7.0])
    assert sup_norm(t2) == 7.0


def test_sup_norm_of_reference_run(adaptive_ensemble1):
    t = adaptive_ensemble1[42].trajectory
    assert sup_norm(t) == pytest.approx(3.210918887399014, rel=1e-12)


def test_hitting_time_basic():
    t = synthetic([5.0, 3.0, 0.5, 0.2])
    assert hitting_time(t, 0, 1.0) == 2.0
    assert hitting_time(t, 3, 1.0) == 3.0
    assert hitting_time(t, 0, 0.1) == math.inf
    with pytest.raises(ValueError):
        hitting_time(t, 4, 1.0)


def test_hitting_time_is_a_true_first_entry(adaptive_ensemble1):
    for s in adaptive_ensemble1[:20]:
        t = s.trajectory
        tau = hitting_time(t, 0, 1.0)
        assert math.isfinite(tau)
        n = int(tau)
        assert t.W[n] < 1.0
        assert np.all(t.W[:n] >= 1.0)


def test_hitting_time_monotone_in_level():
    t = synthetic([5.0, 3.0, 0.5, 0.2])
    assert hitting_time(t, 0, 4.0) <= hitting_time(t, 0, 1.0) <= hitting_time(t, 0, 0.3)


def test_last_scaled_index_cases():
    assert last_scaled_index(synthetic([1, 1, 1], g=[1.0, 2.0, 1.0])) == 1
    assert last_scaled_index(synthetic([1, 1], g=[1.0, 1.0])) is None
    assert last_scaled_index(synthetic([1, 1, 1], g=[3.0, 1.0, 2.0])) == 2


# ---------------------------------------------------------------------------
# windows


def test_uniform_steps_make_consecutive_windows():
    t = synthetic(np.zeros(6), a_eff=[0.5] * 6)
    assert window_indices(t, 0, 1.0) == [0, 1, 2, 3, 4, 5]


def test_harmonic_first_window_closes_at_one():
    a = np.array([1.0 / (n + 1) for n in range(10)])
    t = synthetic(np.zeros(10), a_eff=a)
    idx = window_indices(t, 0, 1.0)
    assert idx[0] == 0
    assert idx[1] == 1  # inclusive sum 1 + 1/2 already clears T = 1
    assert idx[2] == 3  # then 1/2 + 1/3 + 1/4


def test_unfinished_tail_window_dropped():
    t = synthetic(np.zeros(4), a_eff=[0.5] * 4)
    assert window_indices(t, 0, 10.0) == [0]


def test_window_bounds_are_tight():
    rng = make_rng(0)
    a = rng.random(400) * 0.3 + 1e-3
    t = synthetic(np.zeros(400), a_eff=a)
    T = 1.0
    idx = window_indices(t, 0, T)
    for i, j in zip(idx[:-1], idx[1:]):
        assert math.fsum(float(v) for v in a[i : j + 1]) >= T
        # dropping the closing index must fall short, except when the
        # opening step alone clears T and j = i + 1 is forced
        partial = math.fsum(float(v) for v in a[i:j])
        assert partial < T or (j == i + 1 and a[i] >= T)


@given(n0=st.integers(min_value=0, max_value=398), T=st.floats(min_value=0.05, max_value=5.0))
@settings(max_examples=30, deadline=None)
def test_window_indices_strictly_increase(n0, T):
    rng = make_rng(1)
    a = rng.random(400) * 0.2 + 1e-4
    t = synthetic(np.zeros(400), a_eff=a)
    idx = window_indices(t, n0, T)
    assert idx[0] == n0
    assert all(b > a_ for a_, b in zip(idx[:-1], idx[1:]))


def test_window_parameter_validation():
    t = synthetic(np.zeros(4))
    with pytest.raises(ValueError):
        window_indices(t, 4, 1.0)
    with pytest.raises(ValueError):
        window_indices(t, 0, 0.0)


# ---------------------------------------------------------------------------
# window verdicts


def _diag(**kw):
    base = dict(T=1.0, m=2, delta=0.05, epsilon=0.05, K=1.0)
    base.update(kw)
    return DiagnosticsConfig(**base)


def test_steady_drop_reads_descended(example2):
    t = synthetic([1.9, 1.6, 1.3, 1.0, 0.7])
    verdicts = window_descent_report(t, example2.problem, _diag())
    assert len(verdicts) == 4
    assert all(v.verdict == "descended" for v in verdicts)


def test_floor_neighbourhood_reads_trapped(example2):
    t = synthetic([1.01, 1.01, 1.01])
    verdicts = window_descent_report(t, example2.problem, _diag())
    assert all(v.verdict == "trapped" for v in verdicts)


def test_stalled_window_reads_violated(example2):
    t = synthetic([1.5, 1.5])
    [v] = window_descent_report(t, example2.problem, _diag())
    assert v.verdict == "violated"
    assert v.start == 0 and v.end == 1


def test_windows_starting_above_level_are_skipped(example2):
    t = synthetic([5.0, 1.5])
    assert window_descent_report(t, example2.problem, _diag()) == []


def test_diagnostics_level_must_exceed_floor(example2):
    t = synthetic([1.0, 1.0])
    with pytest.raises(ValueError):
        window_descent_report(t, example2.problem, _diag(m=1))


def test_reference_runs_never_violate(adaptive_ensemble1, example1):
    diag = DiagnosticsConfig(T=1.0, m=4, delta=0.05, epsilon=0.05, K=1.0)
    for s in adaptive_ensemble1[:10]:
        verdicts = window_descent_report(s.trajectory, example1.problem, diag)
        assert verdicts, "runs should produce judged windows"
        assert all(v.verdict in ("descended", "trapped") for v in verdicts)


# ---------------------------------------------------------------------------
# martingale partial sums


def test_alternating_noise_partial_sums(example2):
    t = synthetic(
        np.zeros(4), noise=[[1.0], [-1.0], [1.0], [-1.0]]
    )
    diag = _diag()
    md = martingale_partial_sums(t, example2.problem, diag)
    assert np.array_equal(md.partials[:, 0], [1.0, 0.0, 1.0, 0.0])
    assert md.sup_tail[0] == 1.0
    assert md.sup_tail[-1] == 0.0


def test_zero_noise_gives_zero_sums(example2):
    t = synthetic(np.zeros(5), noise=np.zeros((5, 1)))
    md = martingale_partial_sums(t, example2.problem, _diag())
    assert np.all(md.partials == 0.0)
    assert np.all(md.sup_tail == 0.0)


def test_indicator_gates_out_high_states(example2):
    t = synthetic([100.0, 0.0], noise=[[5.0], [0.0]])
    md = martingale_partial_sums(t, example2.problem, _diag())
    assert np.all(md.partials == 0.0)


def test_sup_tail_nonincreasing_on_reference_run(adaptive_ensemble1, example1):
    t = adaptive_ensemble1[0].trajectory
    diag = DiagnosticsConfig(T=1.0, m=4, delta=0.05, epsilon=0.05, K=1.0)
    md = martingale_partial_sums(t, example1.problem, diag)
    assert np.all(np.diff(md.sup_tail) <= 1e-15)
    assert md.sup_tail[-1] == 0.0


def test_partial_sums_need_noise(example2):
    t = synthetic(np.zeros(3))
    with pytest.raises(IncompleteTraceError):
        martingale_partial_sums(t, example2.problem, _diag())


# ---------------------------------------------------------------------------
# noise reconstruction


def test_reconstruction_recovers_draws(adaptive_ensemble1, example1):
    src = adaptive_ensemble1[1].trajectory
    stripped = Trajectory(
        problem=src.problem,
        mode=src.mode,
        seed=src.seed,
        a=src.a.copy(),
        g=src.g.copy(),
        a_eff=src.a_eff.copy(),
        W=src.W.copy(),
        y=src.y.copy(),
        noise=None,
        terminal=None,
    )
    rec = reconstruct_noise(stripped, example1.problem)
    assert rec.steps == src.steps - 1
    assert rec.terminal is not None
    assert np.array_equal(rec.terminal.y, src.y[-1])
    assert np.allclose(rec.noise, src.noise[: src.steps - 1], rtol=1e-6, atol=1e-9)


# ---------------------------------------------------------------------------
# stopped Lyapunov moments


def test_moment_of_constant_ensemble(example2):
    trajs = [synthetic([3.0, 3.0, 3.0]) for _ in range(2)]
    seq = ensemble_lyapunov_moment(trajs, example2.problem, k=0, M=1.0)
    assert np.array_equal(seq, [3.0, 3.0, 3.0])


def test_moment_freezes_at_first_entry(example2):
    t = synthetic([5.0, 2.0, 0.5, 4.0])
    seq = ensemble_lyapunov_moment([t], example2.problem, k=0, M=1.0)
    assert np.array_equal(seq, [5.0, 2.0, 0.5, 0.5])


def test_moment_validation(example2, adaptive_ensemble1):
    with pytest.raises(ValueError):
        ensemble_lyapunov_moment([], example2.problem, k=0, M=1.0)
    t = synthetic([1.0, 1.0])
    with pytest.raises(ValueError):
        ensemble_lyapunov_moment([t], example2.problem, k=2, M=1.0)


def test_moment_bounded_on_reference_ensemble(adaptive_ensemble1, example1):
    seq = ensemble_lyapunov_moment(adaptive_ensemble1, example1.problem, k=0, M=1.0)
    # every run starts at W = 9; the noisy first steps overshoot a little
    # and the peak lands there, never in the tail
    assert seq[0] == 9.0
    assert float(seq.max()) == pytest.approx(9.931101562085464, rel=1e-12)
    assert float(seq.max()) <= 1.1 * float(seq[:100].max())
    late = ensemble_lyapunov_moment(adaptive_ensemble1, example1.problem, k=100, M=1.0)
    assert float(late.max()) == pytest.approx(0.005398429494748136, rel=1e-12)


# ---------------------------------------------------------------------------
# the assembled report


def test_report_on_reference_run(adaptive_ensemble1, example1):
    t = adaptive_ensemble1[0].trajectory
    diag = DiagnosticsConfig(T=1.0, m=4, delta=0.05, epsilon=0.05, K=1.0)
    report = build_report(t, example1.problem, diag)
    assert not report.overflow
    assert report.violated_count == 0
    assert report.sup_norm == sup_norm(t)
    assert report.last_scaled == last_scaled_index(t)
    assert report.windows
    assert report.diagnostics_start is not None
    assert float(t.W[report.diagnostics_start]) < 4.0
    assert report.fluctuation_threshold == pytest.approx(
        0.05 * math.exp(-1.0) / 2.0, rel=1e-12
    )
    d = report.to_dict()
    assert d["verdicts"]["violated"] == 0
    assert d["sup_tail_checkpoints"] is not None
    assert set(d) == {
        "sup_norm",
        "hit_times",
        "last_scaled",
        "window_count",
        "verdicts",
        "diagnostics_start",
        "sup_tail_checkpoints",
        "fluctuation_threshold",
        "overflow",
    }
