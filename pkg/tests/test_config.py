"""Experiment files: builtin selection, inline problems, and validation."""

import numpy as np
import pytest

from sastab import load_config
from sastab.errors import ConfigError

BUILTIN = '[problem]\nname = "example2"\n'

INLINE = """
[problem]
h = "5 - x"
W = "(x - 5)^2"
grad_W = "2*(x - 5)"
hessian_bound = 2.0
M = 1
box = [-10.0, 12.0]

[problem.noise]
kind = "additive-gaussian"
mean = 0.0
std = 1.0

[run]
mode = "vanilla"
x0 = 0.0
horizon = 100
seeds = "0:5"
"""

MULTIPLICATIVE = """
[problem]
h = "-x"
W = "x^2"
grad_W = "2*x"
hessian_bound = 2.0
M = 1
dimension = 1
box = [-8.0, 8.0]

[problem.noise]
kind = "multiplicative-gaussian"
scale = "x/2"
f = "x^2/4"

[run]
mode = "vanilla"
x0 = 1.0
horizon = 10
"""


@pytest.fixture
def load(tmp_path):
    def _load(text):
        p = tmp_path / "exp.toml"
        p.write_text(text)
        return load_config(p)

    return _load


# ---------------------------------------------------------------------------
# builtin selection and defaults


def test_builtin_defaults(load):
    cfg = load(BUILTIN)
    assert not cfg.inline
    assert cfg.problem.name == "example2"
    assert cfg.mode == "adaptive"
    assert cfg.x0 == (2.0,)
    assert cfg.horizon == 10_000
    assert cfg.seeds == (0,)
    assert cfg.threshold_M == 1
    assert cfg.threshold_N == 2.0
    assert cfg.margin == 1.05
    assert cfg.stabilizer_samples == 2048
    assert cfg.diagnostics.m == 2
    assert cfg.trace_path is None and cfg.summary_path is None


def test_unknown_builtin_rejected(load):
    with pytest.raises(ConfigError, match="unknown problem"):
        load('[problem]\nname = "nope"\n')


def test_builtin_with_overrides(load):
    cfg = load(
        BUILTIN
        + '[run]\nmode = "vanilla"\nhorizon = 50\nseed = 9\nx0 = 1.5\n'
        + "[stabilizer]\nN = 3\nsamples = 64\n"
        + "[diagnostics]\nT = 2.0\nm = 3\n"
        + '[output]\ntrace = "t-{seed}.csv"\n'
    )
    assert cfg.mode == "vanilla"
    assert cfg.horizon == 50
    assert cfg.seed == 9
    assert cfg.x0 == (1.5,)
    assert cfg.threshold_N == 3.0
    assert cfg.stabilizer_samples == 64
    assert cfg.diagnostics.T == 2.0
    assert cfg.diagnostics.m == 3
    assert cfg.trace_path == "t-{seed}.csv"


def test_builtin_name_excludes_inline_keys(load):
    with pytest.raises(ConfigError, match="not allowed alongside"):
        load('[problem]\nname = "example2"\nh = "-x"\n')


# ---------------------------------------------------------------------------
# inline problems


def test_inline_problem_built_from_expressions(load):
    cfg = load(INLINE)
    assert cfg.inline
    p = cfg.problem
    assert p.name == "inline"
    assert p.dimension == 1
    assert p.drift.eval(np.zeros(1))[0] == 5.0
    assert p.lyapunov.value(np.zeros(1)) == 25.0
    assert p.box.bounds == ((-10.0, 12.0),)
    assert cfg.seeds == (0, 1, 2, 3, 4)
    # threshold_N defaults to one level above the floor
    assert cfg.threshold_N == 2.0


def test_inline_gradient_checked_at_load(load):
    with pytest.raises(ConfigError, match="disagrees with central differences"):
        load(INLINE.replace('"2*(x - 5)"', '"2*x"'))


def test_inline_expression_errors_carry_key_path(load):
    with pytest.raises(ConfigError, match="problem.h"):
        load(INLINE.replace('h = "5 - x"', 'h = "5 - "'))


def test_multiplicative_noise_requires_bound(load):
    cfg = load(MULTIPLICATIVE)
    assert cfg.problem.noise.var_bound(np.array([2.0])) == 1.0
    with pytest.raises(ConfigError, match="variance bound"):
        load(MULTIPLICATIVE.replace('f = "x^2/4"\n', ""))


def test_additive_noise_rejects_bound_override(load):
    uniform = MULTIPLICATIVE.replace(
        'kind = "multiplicative-gaussian"\nscale = "x/2"\nf = "x^2/4"',
        'kind = "additive-uniform"\nlow = -1.0\nhigh = 1.0',
    )
    cfg = load(uniform)
    assert cfg.problem.noise.var_bound(np.zeros(1)) == pytest.approx(1.0 / 3.0)
    with pytest.raises(ConfigError, match="additive kinds carry"):
        load(uniform.replace("high = 1.0", 'high = 1.0\nf = "1"'))


def test_two_dimensional_inline_problem(load):
    cfg = load(
        """
[problem]
h = ["-x0", "-x1"]
W = "x0^2 + x1^2"
grad_W = ["2*x0", "2*x1"]
hessian_bound = 2.0
M = 1
dimension = 2
box = [[-4.0, 4.0], [-4.0, 4.0]]

[problem.noise]
kind = "additive-gaussian"
std = 0.5

[run]
mode = "vanilla"
x0 = [1.0, -1.0]
horizon = 20
"""
    )
    assert cfg.problem.dimension == 2
    assert cfg.x0 == (1.0, -1.0)
    out = cfg.problem.drift.eval(np.array([1.0, 2.0]))
    assert np.array_equal(out, [-1.0, -2.0])


# ---------------------------------------------------------------------------
# validation


def test_stabilizer_threshold_order_enforced(load):
    with pytest.raises(ConfigError, match="stabilizer.N must exceed stabilizer.M"):
        load(BUILTIN + "[stabilizer]\nN = 1\n")


def test_margin_must_exceed_one(load):
    with pytest.raises(ConfigError, match="margin"):
        load(BUILTIN + "[stabilizer]\nmargin = 1.0\n")


def test_unknown_tables_and_keys_rejected(load):
    with pytest.raises(ConfigError, match=r"unknown table \[typo\]"):
        load(BUILTIN + "[typo]\nx = 1\n")
    with pytest.raises(ConfigError, match="unknown key"):
        load(BUILTIN + "[run]\nwarp = 9\n")


def test_projection_radius_rules(load):
    with pytest.raises(ConfigError, match="radius must be positive"):
        load(BUILTIN + '[run]\nmode = "projection"\n')
    with pytest.raises(ConfigError, match="only applies to projection"):
        load(BUILTIN + '[run]\nmode = "vanilla"\nradius = 2.0\n')
    cfg = load(BUILTIN + '[run]\nmode = "projection"\nradius = 2.5\n')
    assert cfg.radius == 2.5


def test_diagnostics_level_checked_against_floor(load):
    with pytest.raises(ConfigError, match="must exceed"):
        load(BUILTIN + "[diagnostics]\nm = 1\n")


def test_x0_dimension_checked(load):
    with pytest.raises(ConfigError, match="coordinate"):
        load(INLINE.replace("x0 = 0.0", "x0 = [1.0, 2.0]"))


def test_seed_forms(load):
    assert load(INLINE.replace('"0:5"', "7")).seeds == (7,)
    assert load(INLINE.replace('"0:5"', "[3, 1, 4]")).seeds == (3, 1, 4)
    assert load(INLINE.replace('"0:5"', '"10:13"')).seeds == (10, 11, 12)


def test_invalid_toml_reported_with_path(load, tmp_path):
    p = tmp_path / "exp.toml"
    p.write_text("[problem\n")
    with pytest.raises(ConfigError, match="invalid TOML"):
        load_config(p)


def test_missing_file_raises_config_error(tmp_path):
    with pytest.raises((ConfigError, OSError)):
        load_config(tmp_path / "absent.toml")


def test_schedule_families(load):
    cfg = load(BUILTIN + '[schedule]\nkind = "polynomial"\na0 = 1.0\nb = 10.0\ngamma = 0.75\n')
    from sastab import schedule_value

    assert schedule_value(cfg.problem.schedule, 0) == pytest.approx(10.0**-0.75)
    cfg2 = load(BUILTIN + '[schedule]\nkind = "table"\nvalues = [0.5, 0.25]\n')
    assert schedule_value(cfg2.problem.schedule, 1) == 0.25
    with pytest.raises(ConfigError, match="schedule.kind"):
        load(BUILTIN + '[schedule]\nkind = "warp"\n')
    with pytest.raises(ConfigError, match="exponent"):
        load(BUILTIN + '[schedule]\nkind = "polynomial"\ngamma = 0.5\n')
