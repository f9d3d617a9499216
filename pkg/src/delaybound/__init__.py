"""Numerical integration of a third-order linear delay equation and
machine verification of its two-sided exponential envelope bounds."""

from .bounds import (
    EPS_ABS,
    EPS_REL,
    CheckRecord,
    NormTrace,
    PsiSummary,
    VerificationReport,
    check_delay_bounds,
    check_derivative_bound,
    check_differential_inequality,
    check_envelope,
    norm_state,
    norm_trace,
    psi_global,
    psi_pointwise,
    psi_summary,
)
from .expr import (
    EvaluationError,
    Expression,
    ExpressionSyntaxError,
    differentiate,
    evaluate,
    evaluate_on,
    parse,
    to_text,
)
from .harness import (
    ConvergenceStudy,
    ScenarioDiscard,
    ScenarioResult,
    ScenarioSpec,
    convergence_study,
    generate_scenario,
    run_scenario,
    run_verification,
    sweep,
    sweep_summary,
)
from .integrator import (
    BlowUpError,
    DomainError,
    StateSample,
    Trajectory,
    breaking_points,
    component_values,
    integrate,
    sample,
    samples,
)
from .model import (
    REGIME_RETARDED,
    REGIME_ZERO,
    Problem,
    SupCoefficients,
    ValidationError,
    history_state,
    history_values,
    sup_abs_coefficient,
    sup_coefficients,
    validate,
)
from .mvt import MvtBatch, MvtError, MvtPoints, locate_mvt_batch, locate_mvt_points

__version__ = "0.1.0"
