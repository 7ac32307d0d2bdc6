"""driftlab: Monte Carlo toolkit for drift-reweighted Brownian laws.

Builds Brownian ensembles, reweights them by stochastic exponentials of a
drift, estimates the dual pairing that identifies the weak solution of
dX = b(X) dt + dB, bounds drifts by their convex envelopes, and checks
stochastic-domination and moment-scaling consequences numerically.
"""

from .core import (
    TimeGrid,
    DriftSpec,
    DriftFn,
    build_drift,
    TestFunctionSpec,
    IncrementBatch,
    sample_increments,
    PathBatch,
    accumulate_paths,
    brownian_ensemble,
)
from .errors import (
    DriftlabError,
    ConfigurationError,
    InputError,
    ResourceLimitError,
    UnsupportedRegimeError,
    UnsupportedDimensionError,
    DegenerateWeightsError,
)
from .girsanov import (
    MeasureWeights,
    NormalizationReport,
    GirsanovResult,
    NovikovEstimate,
    stochastic_exponential,
    shift_paths,
    girsanov_weights,
    normalization_report,
    novikov_estimate,
    effective_sample_size,
)
from .integrate import (
    ExplosionInfo,
    EulerSolution,
    euler_maruyama,
    coupled_solve,
)
from .zdual import (
    ScalarMap,
    CylinderTerm,
    FunctionalSpec,
    EstimateWithCI,
    PairingEstimate,
    WeightedSampleSet,
    JensenReport,
    pairing_estimate,
    euler_pairing,
    functional_pairing,
    pairing_samples,
    weak_law_samples,
    z_moment,
    left_inverse_residual,
    jensen_gap,
)
from .drift_analysis import (
    PiecewiseLinearConvex,
    QuasiMonotoneReport,
    lower_convex_envelope_1d,
    biconjugate_1d,
    envelope_nd,
    envelope_drift,
    is_quasi_monotone,
)
from .linear_bound import (
    LinearDriftParams,
    FundamentalMatrixSeries,
    fundamental_matrix,
    matrix_ode_check,
    linear_solution_path,
)
from .compare import (
    WeightedECDF,
    DominanceReport,
    ViolationStats,
    ScalingFit,
    weighted_ecdf,
    dominance_check,
    pathwise_compare,
    kolmogorov_scaling,
    default_knot_pairs,
)

__version__ = "0.1.0"
