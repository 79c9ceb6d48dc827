"""Shared fixtures.

The reference ensembles (100 seeds, horizon 10^4) are session-scoped;
building each once keeps the engine, analysis, and acceptance tests fast
enough to run on every change.
"""

import numpy as np
import pytest

from sastab import RunConfig, configure, registry, run_ensemble

ENSEMBLE_SEEDS = tuple(range(100))
ENSEMBLE_HORIZON = 10_000


@pytest.fixture(scope="session")
def example1():
    return registry.get("example1")


@pytest.fixture(scope="session")
def example2():
    return registry.get("example2")


@pytest.fixture(scope="session")
def shifted():
    return registry.get("shifted-linear")


def configured_stabilizer(preset, samples=2048):
    return configure(
        preset.problem,
        preset.threshold_M,
        preset.threshold_N,
        preset.margin,
        samples,
        np.random.default_rng(0),
    )


@pytest.fixture(scope="session")
def stab1(example1):
    return configured_stabilizer(example1)


@pytest.fixture(scope="session")
def stab2(example2):
    return configured_stabilizer(example2)


@pytest.fixture(scope="session")
def stab_shifted(shifted):
    return configured_stabilizer(shifted)


@pytest.fixture(scope="session")
def adaptive_ensemble1(example1, stab1):
    """example1 under the scaled step, with trajectories retained."""
    cfg = RunConfig(
        problem="example1",
        mode="adaptive",
        x0=example1.x0,
        horizon=ENSEMBLE_HORIZON,
        seed=0,
        stabilizer=stab1,
    )
    return run_ensemble(cfg, ENSEMBLE_SEEDS, keep_trajectories=True)


@pytest.fixture(scope="session")
def vanilla_ensemble1(example1):
    """example1 with the raw step; expected to overflow almost every seed."""
    cfg = RunConfig(
        problem="example1",
        mode="vanilla",
        x0=example1.x0,
        horizon=ENSEMBLE_HORIZON,
        seed=0,
    )
    return run_ensemble(cfg, ENSEMBLE_SEEDS)


@pytest.fixture(scope="session")
def projection_ensemble_shifted(shifted):
    """shifted-linear clipped to a ball that excludes its equilibrium."""
    cfg = RunConfig(
        problem="shifted-linear",
        mode="projection",
        x0=shifted.x0,
        horizon=ENSEMBLE_HORIZON,
        seed=0,
        radius=3.0,
    )
    return run_ensemble(cfg, ENSEMBLE_SEEDS)


@pytest.fixture(scope="session")
def adaptive_ensemble_shifted(shifted, stab_shifted):
    cfg = RunConfig(
        problem="shifted-linear",
        mode="adaptive",
        x0=shifted.x0,
        horizon=ENSEMBLE_HORIZON,
        seed=0,
        stabilizer=stab_shifted,
    )
    return run_ensemble(cfg, ENSEMBLE_SEEDS)
