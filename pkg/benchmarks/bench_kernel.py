"""Compare the compiled iteration kernel against the pure-Python loop.

Both backends produce bit-identical trajectories; this script only measures
throughput. Run it from the repository root:

    python3 benchmarks/bench_kernel.py [--horizon N] [--repeats K]
"""

import argparse
import time

import numpy as np

from sastab import RunConfig, configure, registry, run
from sastab.engine import KERNEL_AVAILABLE


def time_backend(cfg: RunConfig, backend: str, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        run(cfg, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=int, default=100_000)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    preset = registry.get("example1")
    stab = configure(
        preset.problem, preset.threshold_M, preset.threshold_N, preset.margin,
        samples=2048, rng=np.random.default_rng(0),
    )
    cfg = RunConfig(
        problem="example1", mode="adaptive", x0=preset.x0,
        horizon=args.horizon, seed=0, stabilizer=stab,
    )

    py = time_backend(cfg, "python", args.repeats)
    print(f"python backend: {py:8.4f} s  ({args.horizon / py:12,.0f} steps/s)")
    if KERNEL_AVAILABLE:
        ck = time_backend(cfg, "kernel", args.repeats)
        print(f"kernel backend: {ck:8.4f} s  ({args.horizon / ck:12,.0f} steps/s)")
        print(f"speedup: {py / ck:.2f}x")
        a = run(cfg, backend="python")
        b = run(cfg, backend="kernel")
        assert np.array_equal(a.y, b.y), "backends disagree"
        print("bit-identical trajectories: yes")
    else:
        print("kernel backend: not built (pure-Python fallback active)")


if __name__ == "__main__":
    main()
