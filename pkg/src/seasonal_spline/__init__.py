"""Seasonal-trend reconstruction from linear measurements.

Grid-discretized generalized-TV solver for the joint recovery of a trend
and a 1-periodic seasonal component, plus its quadratic (kernel)
counterpart, with optimality certificates and grid-refinement
convergence checks.
"""

from .dictionary import (
    Case,
    DesignMatrix,
    Dictionary,
    GridSpec,
    assemble,
    build_dictionary,
    composite_norm,
    default_margin,
    dictionary_from_json,
    evaluate_solution,
    regularization_value,
)
from .errors import (
    AdmissibilityError,
    ConditioningError,
    ConvergenceError,
    IllPosedError,
    IntegrationError,
    NotPeriodizableError,
    SeasonalSplineError,
    TruncationError,
    UnsupportedOperatorError,
    ValidationError,
)
from .harness import (
    AtomicMeasure,
    ConvergenceReport,
    GroundTruth,
    LadderProblem,
    TabulatedDensity,
    discretize_measure,
    measure_truth,
    run_gamma_ladder,
    simulate,
)
from .operators import (
    OperatorSpec,
    PeriodicGreen,
    admissibility_order,
    composition,
    derivative,
    frequency_response,
    frequency_sequence,
    operator_from_json,
    operator_to_json,
    periodic_green_eval,
    sampling_admissible,
    sobolev,
    trend_green_eval,
)
from .quadratic import (
    KernelPair,
    build_kernel_pair,
    evaluate_quadratic,
    gram,
    solve_quadratic,
)
from .sensing import (
    BoxAverage,
    Sampling,
    WeightedDensity,
    apply_to_seasonal_atom,
    apply_to_trend_atom,
    periodize,
    plan_from_json,
    plan_to_json,
)
from .tv import (
    CompositeSolution,
    KktReport,
    SolverConfig,
    SupportReport,
    extract_support,
    kkt_check,
    load_solution_json,
    prox_l1_zero_sum,
    solve_tv,
)

__all__ = [
    "AdmissibilityError",
    "AtomicMeasure",
    "BoxAverage",
    "Case",
    "CompositeSolution",
    "ConditioningError",
    "ConvergenceError",
    "ConvergenceReport",
    "DesignMatrix",
    "Dictionary",
    "GridSpec",
    "GroundTruth",
    "IllPosedError",
    "IntegrationError",
    "KernelPair",
    "KktReport",
    "LadderProblem",
    "NotPeriodizableError",
    "OperatorSpec",
    "PeriodicGreen",
    "Sampling",
    "SeasonalSplineError",
    "SolverConfig",
    "SupportReport",
    "TabulatedDensity",
    "TruncationError",
    "UnsupportedOperatorError",
    "ValidationError",
    "WeightedDensity",
    "admissibility_order",
    "apply_to_seasonal_atom",
    "apply_to_trend_atom",
    "assemble",
    "build_dictionary",
    "build_kernel_pair",
    "composite_norm",
    "composition",
    "default_margin",
    "derivative",
    "dictionary_from_json",
    "discretize_measure",
    "evaluate_quadratic",
    "evaluate_solution",
    "extract_support",
    "frequency_response",
    "frequency_sequence",
    "gram",
    "kkt_check",
    "load_solution_json",
    "measure_truth",
    "operator_from_json",
    "operator_to_json",
    "periodic_green_eval",
    "periodize",
    "plan_from_json",
    "plan_to_json",
    "prox_l1_zero_sum",
    "regularization_value",
    "run_gamma_ladder",
    "sampling_admissible",
    "simulate",
    "sobolev",
    "solve_quadratic",
    "solve_tv",
    "trend_green_eval",
]
