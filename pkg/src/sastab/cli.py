"""Command-line interface.

Commands:

    run       one seeded trajectory, optional CSV trace
    ensemble  one run per seed, JSON summary
    verify    numeric checks: gradient, descent, growth constant, global bound
    ode       integrate the mean flow from a point
    analyze   recompute stability diagnostics from a stored trace

Exit codes: 0 success; 1 verification failure (descent or growth condition
violated); 2 configuration or input error; 3 every requested seed
overflowed.

`--config` takes a TOML path or the name of a shipped preset (example1,
example2, shifted-linear). Command-line flags override the file's [run]
values.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import registry
from .analysis import build_report, reconstruct_noise, window_descent_report
from .config import ExperimentConfig, load_config
from .core import gradient_check
from .engine import MODES, RunConfig, run, run_ensemble
from .errors import ConfigError, IncompleteTraceError, IntegrationError, SastabError
from .ode import check_descent, equilibria_1d, integrate
from .regions import Box
from .stabilizer import check_c_infinity, configure, verify_wgc
from .traceio import read_trace, summarize, summary_document, write_trace

EXIT_OK = 0
EXIT_VERIFICATION = 1
EXIT_CONFIG = 2
EXIT_ALL_OVERFLOWED = 3


def _resolve_config_path(value: str) -> Path:
    p = Path(value)
    if p.exists():
        return p
    if value in registry.names():
        preset = resources.files("sastab") / "presets" / f"{value}.toml"
        with resources.as_file(preset) as path:
            if path.exists():
                return Path(path)
    raise ConfigError(
        f"config {value!r} is neither a file nor a shipped preset "
        f"({', '.join(registry.names())})"
    )


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    updates = {}
    if getattr(args, "mode", None):
        if args.mode not in MODES:
            raise ConfigError(
                f"--mode must be one of {', '.join(sorted(MODES))}, got {args.mode!r}"
            )
        updates["mode"] = args.mode
        if args.mode != "projection":
            updates["radius"] = None
    if getattr(args, "horizon", None) is not None:
        if args.horizon < 1:
            raise ConfigError("--horizon must be a positive integer")
        updates["horizon"] = args.horizon
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        updates["seed"] = args.seed
    if getattr(args, "seeds", None):
        updates["seeds"] = _parse_seed_arg(args.seeds)
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    if cfg.mode == "projection" and (cfg.radius is None or not cfg.radius > 0):
        raise ConfigError("run.radius must be positive in projection mode")
    return cfg


def _parse_seed_arg(text: str) -> tuple[int, ...]:
    try:
        if ":" in text:
            lo_s, hi_s = text.split(":", 1)
            lo, hi = int(lo_s), int(hi_s)
            if hi <= lo:
                raise ConfigError("--seeds range is empty")
            seeds = tuple(range(lo, hi))
        else:
            seeds = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(
            f"--seeds takes 'lo:hi' (hi exclusive) or a comma list, got {text!r}"
        ) from None
    if not seeds:
        raise ConfigError("--seeds must name at least one seed")
    if any(s < 0 for s in seeds):
        raise ConfigError("--seeds must be nonnegative")
    return seeds


def _make_stabilizer(cfg: ExperimentConfig):
    if cfg.mode != "adaptive":
        return None
    return configure(
        cfg.problem,
        M=cfg.threshold_M,
        N=cfg.threshold_N,
        margin=cfg.margin,
        samples=cfg.stabilizer_samples,
        rng=np.random.default_rng(0),
    )


def _gate_inline(cfg: ExperimentConfig) -> None:
    """Inline problems must verify descent before any run proceeds."""
    if not cfg.inline:
        return
    report = check_descent(
        cfg.problem,
        M=cfg.threshold_M,
        m=cfg.diagnostics.m,
        samples=cfg.stabilizer_samples,
        rng=np.random.default_rng(0),
    )
    if not report.ok:
        raise _VerificationFailure(
            "descent check failed for the inline problem: "
            f"sup <h, grad W> = {report.sup_wdot:.6g} at y={list(report.argmax)} "
            f"on {{{cfg.threshold_M} <= W <= {cfg.diagnostics.m}}}"
        )


class _VerificationFailure(SastabError):
    pass


def _run_config(cfg: ExperimentConfig, seed: int) -> RunConfig:
    return RunConfig(
        problem=cfg.problem,
        mode=cfg.mode,
        x0=cfg.x0,
        horizon=cfg.horizon,
        seed=seed,
        stabilizer=_make_stabilizer(cfg),
        radius=cfg.radius,
    )


def _prepare_out(path: str) -> Path:
    p = Path(path)
    if p.parent != Path("."):
        p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _fmt(v: float) -> str:
    return f"{v:.6g}"


# ---------------------------------------------------------------------------
# commands


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(_resolve_config_path(args.config)), args)
    _gate_inline(cfg)
    traj = run(_run_config(cfg, cfg.seed), backend=args.backend)
    out = args.out or cfg.trace_path
    if out:
        path = _prepare_out(out.format(seed=cfg.seed))
        write_trace(traj, path)
        print(f"trace written to {path}")
    sup = math.inf if traj.overflowed else float(
        max(np.max(np.linalg.norm(traj.y, axis=1)), np.linalg.norm(traj.terminal.y))
    )
    scaled = np.nonzero(traj.g > 1.0)[0]
    last_scaled = int(scaled[-1]) if len(scaled) else None
    print(
        f"problem={traj.problem} mode={traj.mode} seed={traj.seed} "
        f"steps={traj.steps} overflowed={traj.overflowed} "
        f"sup_norm={_fmt(sup)} last_scaled={last_scaled} "
        f"terminal={[float(v) for v in traj.terminal.y]}"
    )
    return EXIT_ALL_OVERFLOWED if traj.overflowed else EXIT_OK


def cmd_ensemble(args) -> int:
    cfg = _apply_overrides(load_config(_resolve_config_path(args.config)), args)
    _gate_inline(cfg)
    rc = _run_config(cfg, cfg.seeds[0])
    summaries = run_ensemble(
        rc,
        cfg.seeds,
        workers=args.workers,
        keep_trajectories=True,
        backend=args.backend,
    )
    trace_pattern = cfg.trace_path if cfg.trace_path and "{seed}" in cfg.trace_path else None
    for s in summaries:
        t = s.trajectory
        if t is None:
            continue
        verdicts = window_descent_report(t, cfg.problem, cfg.diagnostics)
        s.descent_violations = sum(1 for v in verdicts if v.verdict == "violated")
        if trace_pattern:
            write_trace(t, _prepare_out(trace_pattern.format(seed=s.seed)))
        s.trajectory = None
    doc = summary_document(summaries)
    out = args.out or cfg.summary_path
    if out:
        path = _prepare_out(out)
        summarize(summaries, path)
        print(f"summary written to {path}")
    else:
        print(json.dumps(doc, indent=2))
    agg = doc["aggregates"]
    print(
        f"seeds={len(cfg.seeds)} overflow_rate={agg['overflow_rate']} "
        f"max_sup_norm={agg['max_sup_norm']} "
        f"max_last_scaled={agg['max_last_scaled']} "
        f"descent_violations={agg['descent_violations']}",
        file=sys.stderr if not out else sys.stdout,
    )
    if all(s.overflowed for s in summaries):
        return EXIT_ALL_OVERFLOWED
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _apply_overrides(load_config(_resolve_config_path(args.config)), args)
    problem = cfg.problem
    rng = np.random.default_rng(cfg.seed)
    box = problem.box or Box.cube(-10.0, 10.0, problem.dimension)

    grad = gradient_check(problem.lyapunov, box.sample(rng, 100))
    print(
        f"gradient_check: {'pass' if grad.passed else 'FAIL'} "
        f"(worst relative discrepancy {grad.worst:.3g}, 100 points)"
    )

    descent = check_descent(
        problem,
        M=cfg.threshold_M,
        m=cfg.diagnostics.m,
        samples=max(cfg.stabilizer_samples, 2048),
        rng=rng,
    )
    print(
        f"check_descent: {'pass' if descent.ok else 'FAIL'} "
        f"(sup <h, grad W> = {descent.sup_wdot:.6g} on "
        f"{{{cfg.threshold_M} <= W <= {cfg.diagnostics.m}}}, "
        f"argmax y={[round(float(v), 6) for v in descent.argmax]})"
    )

    stab = configure(
        problem,
        M=cfg.threshold_M,
        N=cfg.threshold_N,
        margin=cfg.margin,
        samples=cfg.stabilizer_samples,
        rng=rng,
    )
    print(
        f"growth constant: c_N = {stab.c_N:.6g} "
        f"(N={cfg.threshold_N:g}, margin={cfg.margin}, "
        f"{cfg.stabilizer_samples} annulus samples)"
    )

    wgc = verify_wgc(stab, problem, samples=args.samples, rng=rng)
    print(
        f"verify_wgc: {'pass' if wgc.ok else 'FAIL'} "
        f"({wgc.violations}/{wgc.samples} violations, "
        f"worst ratio {wgc.worst_ratio:.6g})"
    )

    cinf = check_c_infinity(problem, samples=args.samples, box=box, rng=rng)
    note = "scaling optional" if cinf.ok else "scaling stays on"
    detail = []
    if cinf.boundary_dominated:
        detail.append("boundary-dominated")
    if cinf.sentinel_hit:
        detail.append("W=0 sentinel hit")
    extra = f"; {', '.join(detail)}" if detail else ""
    print(
        f"check_c_infinity: {cinf.verdict} "
        f"(sampled sup {cinf.estimate:.6g} at y="
        f"{[round(float(v), 6) for v in cinf.argmax]}{extra}) -> {note}"
    )

    if args.out:
        doc = {
            "gradient_check": {"passed": grad.passed, "worst": grad.worst},
            "check_descent": {
                "ok": descent.ok,
                "sup_wdot": descent.sup_wdot,
                "argmax": list(descent.argmax),
                "samples": descent.samples,
            },
            "c_N": stab.c_N,
            "verify_wgc": {
                "ok": wgc.ok,
                "violations": wgc.violations,
                "samples": wgc.samples,
                "worst_ratio": wgc.worst_ratio,
                "worst_point": list(wgc.worst_point),
            },
            "check_c_infinity": {
                "verdict": cinf.verdict,
                "estimate": None if math.isinf(cinf.estimate) else cinf.estimate,
                "argmax": list(cinf.argmax),
                "boundary_dominated": cinf.boundary_dominated,
                "sentinel_hit": cinf.sentinel_hit,
            },
        }
        path = _prepare_out(args.out)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, allow_nan=False)
            fh.write("\n")
        print(f"report written to {path}")

    ok = grad.passed and descent.ok and wgc.ok
    return EXIT_OK if ok else EXIT_VERIFICATION


def cmd_ode(args) -> int:
    cfg = _apply_overrides(load_config(_resolve_config_path(args.config)), args)
    problem = cfg.problem
    if args.x0:
        try:
            x0 = tuple(float(t) for t in args.x0.split(","))
        except ValueError:
            raise ConfigError(f"--x0 must be comma-separated numbers, got {args.x0!r}") from None
        if len(x0) != problem.dimension:
            raise ConfigError(
                f"--x0 has {len(x0)} coordinate(s); the problem has "
                f"dimension {problem.dimension}"
            )
    else:
        x0 = cfg.x0
    if args.T <= 0:
        raise ConfigError("--T must be positive")
    try:
        res = integrate(problem.drift, x0, args.T)
    except IntegrationError as ex:
        print(f"integration failed: {ex}", file=sys.stderr)
        return EXIT_CONFIG
    print(
        f"flow from {list(x0)} over T={args.T:g}: endpoint="
        f"{[float(v) for v in res.endpoint]} "
        f"(accepted {res.accepted_steps}, rejected {res.rejected_steps})"
    )
    roots = None
    if problem.dimension == 1:
        box = problem.box or Box.cube(-10.0, 10.0, 1)
        roots = equilibria_1d(problem.drift, (box.lo[0], box.hi[0]), grid=2001)
        print(f"drift equilibria in [{box.lo[0]:g}, {box.hi[0]:g}]: {roots}")
    if args.out:
        doc = {
            "x0": list(x0),
            "T": args.T,
            "endpoint": [float(v) for v in res.endpoint],
            "accepted_steps": res.accepted_steps,
            "rejected_steps": res.rejected_steps,
        }
        if roots is not None:
            doc["equilibria"] = roots
        path = _prepare_out(args.out)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, allow_nan=False)
            fh.write("\n")
        print(f"report written to {path}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _apply_overrides(load_config(_resolve_config_path(args.config)), args)
    problem = cfg.problem
    traj = read_trace(args.trace, problem=problem.name, mode=cfg.mode, seed=cfg.seed)
    completed = reconstruct_noise(traj, problem)
    report = build_report(completed, problem, cfg.diagnostics)
    doc = report.to_dict()
    verdicts = doc["verdicts"]
    print(
        f"trace {args.trace}: {traj.steps} rows, "
        f"sup_norm={_fmt(report.sup_norm)} last_scaled={report.last_scaled}"
    )
    print(
        f"windows: {doc['window_count']} "
        f"(descended {verdicts['descended']}, trapped {verdicts['trapped']}, "
        f"violated {verdicts['violated']}); "
        f"diagnostics start at n={report.diagnostics_start}"
    )
    if report.martingale_sup_tail is not None and len(report.martingale_sup_tail):
        tail = report.martingale_sup_tail
        print(
            f"martingale sup_tail: start {_fmt(float(tail[0]))}, "
            f"midpoint {_fmt(float(tail[len(tail) // 2]))}, "
            f"end {_fmt(float(tail[-1]))}"
        )
    if args.out:
        path = _prepare_out(args.out)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, allow_nan=False)
            fh.write("\n")
        print(f"report written to {path}")
    if report.violated_count > 0:
        print(
            f"windowed descent violated in {report.violated_count} window(s)",
            file=sys.stderr,
        )
        return EXIT_VERIFICATION
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring


def _add_common(p: argparse.ArgumentParser, mode: bool = True) -> None:
    p.add_argument(
        "--config",
        required=True,
        help="TOML config path or shipped preset name",
    )
    p.add_argument("--seed", type=int, help="override run.seed")
    p.add_argument("--horizon", type=int, help="override run.horizon")
    p.add_argument("--out", help="output path")
    if mode:
        p.add_argument(
            "--mode",
            choices=sorted(MODES),
            help="override run.mode",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sastab",
        description="Stochastic approximation runs with adaptive step-size scaling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one seeded trajectory")
    _add_common(p)
    p.add_argument(
        "--backend",
        choices=("auto", "python", "kernel"),
        default="auto",
        help="engine path (default auto)",
    )
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ensemble", help="one run per seed plus a JSON summary")
    _add_common(p)
    p.add_argument("--seeds", help="override run.seeds: 'lo:hi' or comma list")
    p.add_argument("--workers", type=int, default=1, help="thread count")
    p.add_argument(
        "--backend",
        choices=("auto", "python", "kernel"),
        default="auto",
        help="engine path (default auto)",
    )
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("verify", help="numeric assumption checks")
    _add_common(p, mode=False)
    p.add_argument(
        "--samples",
        type=int,
        default=10_000,
        help="sample count for the growth-condition sweeps (default 10000)",
    )
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("ode", help="integrate the mean flow")
    _add_common(p, mode=False)
    p.add_argument("--T", type=float, default=10.0, help="flow time (default 10)")
    p.add_argument("--x0", help="start point, comma separated (default run.x0)")
    p.set_defaults(func=cmd_ode)

    p = sub.add_parser("analyze", help="recompute diagnostics from a stored trace")
    _add_common(p, mode=False)
    p.add_argument("--trace", required=True, help="trace CSV to analyze")
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _VerificationFailure as ex:
        print(f"verification failure: {ex}", file=sys.stderr)
        return EXIT_VERIFICATION
    except (ConfigError, IncompleteTraceError) as ex:
        print(f"config error: {ex}", file=sys.stderr)
        return EXIT_CONFIG
    except SastabError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as ex:
        print(f"i/o error: {ex}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
