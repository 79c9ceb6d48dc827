"""Stabilized stochastic approximation toolkit.

Runs Robbins-Monro style iterations in three modes (vanilla, adaptively
step-size-scaled, projected), verifies the stability assumptions behind the
scaling scheme numerically, and computes the stability diagnostics
(level-set hitting times, per-window Lyapunov descent, martingale
fluctuation decay) that make the scheme's guarantees observable at desk
scale.
"""

from .analysis import (
    DiagnosticsConfig,
    StabilityReport,
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
from .config import ExperimentConfig, load_config
from .core import (
    DriftField,
    GradientCheckReport,
    LyapunovSpec,
    NoiseModel,
    SAProblem,
    StepSchedule,
    drift_dot_grad,
    gradient_check,
    lipschitz_estimate,
    noise_moment_audit,
    sample_noise,
    schedule_value,
)
from .engine import (
    KERNEL_AVAILABLE,
    EngineState,
    RunConfig,
    RunSummary,
    Trajectory,
    make_rng,
    run,
    run_ensemble,
    step,
)
from .errors import (
    ConfigError,
    EmptyRegionError,
    ExpressionError,
    ExpressionEvalError,
    IncompleteTraceError,
    IntegrationError,
    InvalidRegionError,
    NumericOverflowError,
    SastabError,
    ScheduleExhaustedError,
)
from .ode import (
    FlowResult,
    check_descent,
    equilibria_1d,
    flow_compare,
    integrate,
)
from .expr import eval_expression, parse_expression, pretty
from .regions import Box
from .registry import ProblemPreset, get, get_problem, names
from .stabilizer import (
    StabilizerConfig,
    adaptive_step,
    check_c_infinity,
    choose_threshold_N,
    configure,
    estimate_cN,
    scaling_factor,
    verify_wgc,
)
from .traceio import read_trace, summarize, write_trace

__version__ = "0.1.0"
