"""Functional Bell inequality for the two-qubit singlet over all local settings."""
from .discrete import (
    DiscreteStrategy,
    SettingEnsemble,
    discrete_lhv_max,
    discrete_quantum_value,
    discrete_threshold,
    load_ensemble,
)
from .functional import (
    CHAINED_LIMIT,
    COPLANAR_THRESHOLD,
    FULL_SPHERE_THRESHOLD,
    GISIN_THRESHOLD,
    InequalityReport,
    evaluate_coplanar,
    evaluate_inequality,
    threshold_visibility,
)
from .lhv import (
    LhvModel,
    ProjectionCoefficients,
    ResponseStrategy,
    harmonic,
    hemisphere,
    lhv_bound_analytic,
    lhv_functional_value,
    lhv_functional_value_direct,
    linear,
    optimize_lhv,
    project,
    projection_norm_bound,
)
from .quantum import QuantumPrediction, correlation_qm, norm_sq_qm_analytic, norm_sq_qm_numeric, p_qm
from .simulate import EstimateReport, EventStream, estimate_functional, generate_events
from .sphere import Direction, QuadratureGrid, build_grid, dot, integrate, make_direction

__version__ = "0.1.0"
