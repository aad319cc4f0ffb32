"""Certified spectral-gap lower bounds via twisted transport calculus.

The package couples chart-based Riemannian geometry kernels, weighted
Laplacian models, a pointwise twist calculus, Monte-Carlo semigroup
estimators along simulated diffusions, discretized eigensolvers, and an
inequality verification harness behind one configuration-driven CLI.
"""

from .errors import (
    ConfigError,
    DegenerateEstimateError,
    DomainError,
    ExpressionError,
    ModeError,
    NumericError,
    PreconditionError,
    TwistboundError,
    TwistSingularError,
)
from .geometry import (
    ChartPoint,
    ManifoldSpec,
    MetricData,
    christoffel_at,
    circle,
    euclidean,
    flat_torus,
    frame_at,
    hyperbolic_half_plane,
    interval,
    metric_at,
    metric_data,
    ricci_sharp_at,
    sphere2,
    user_chart,
)
from .model import (
    BakryEmeryValue,
    ModelSpec,
    ScalarField,
    apply_L,
    bakry_emery_at,
    grad_hess_V,
    rho_inf,
)
from .regions import Box, ChartDomain

__version__ = "0.1.0"

# higher modules import lazily here to keep the geometry/model core cheap
from .twist import (  # noqa: E402
    BoundReport,
    TwistEval,
    TwistSpec,
    bound_scan,
    hypothesis_gate,
    symmetry_criterion,
    tensor_laplacian,
    twist_eval,
    twist_eval_fd,
)
from .pathsim import (  # noqa: E402
    PathSample,
    TransportResult,
    brownian_increments,
    deterministic_path,
    simulate_path,
    transport,
)
from .semigroup import (  # noqa: E402
    IntertwiningResult,
    MCEstimate,
    OneFormField,
    estimate_P,
    estimate_Q,
    generator_commutation_residual,
    intertwining_residual,
)
from .spectral import (  # noqa: E402
    Discretization,
    GridSpec,
    SpectralResult,
    discretize,
    integrate_mu,
    optimize_twist,
    spectral_gap,
    variance_mu,
)
from .verify import (  # noqa: E402
    InequalityReport,
    check_asymmetric_bl,
    check_concentration,
    check_gronwall,
    check_matrix_lemma,
    check_phi_decay,
    check_variance_inequality,
)
from .cli import RunConfig, run  # noqa: E402

__all__ = [
    "BakryEmeryValue",
    "BoundReport",
    "Box",
    "ChartDomain",
    "ChartPoint",
    "ConfigError",
    "DegenerateEstimateError",
    "Discretization",
    "DomainError",
    "ExpressionError",
    "GridSpec",
    "InequalityReport",
    "IntertwiningResult",
    "MCEstimate",
    "ManifoldSpec",
    "MetricData",
    "ModeError",
    "ModelSpec",
    "NumericError",
    "OneFormField",
    "PathSample",
    "PreconditionError",
    "RunConfig",
    "ScalarField",
    "SpectralResult",
    "TransportResult",
    "TwistEval",
    "TwistSingularError",
    "TwistSpec",
    "TwistboundError",
    "apply_L",
    "bakry_emery_at",
    "bound_scan",
    "brownian_increments",
    "check_asymmetric_bl",
    "check_concentration",
    "check_gronwall",
    "check_matrix_lemma",
    "check_phi_decay",
    "check_variance_inequality",
    "christoffel_at",
    "circle",
    "deterministic_path",
    "discretize",
    "estimate_P",
    "estimate_Q",
    "euclidean",
    "flat_torus",
    "frame_at",
    "generator_commutation_residual",
    "grad_hess_V",
    "hyperbolic_half_plane",
    "hypothesis_gate",
    "integrate_mu",
    "intertwining_residual",
    "interval",
    "metric_at",
    "metric_data",
    "optimize_twist",
    "rho_inf",
    "ricci_sharp_at",
    "run",
    "simulate_path",
    "spectral_gap",
    "sphere2",
    "symmetry_criterion",
    "tensor_laplacian",
    "transport",
    "twist_eval",
    "twist_eval_fd",
    "user_chart",
    "variance_mu",
]
