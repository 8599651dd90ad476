"""Robust recovery toolkit for Gaussian single-index models.

Computes the structural constants of smooth link functions by deterministic
one-dimensional Gaussian quadrature, and implements the full robust recovery
pipeline (adversarial data generation, filtered spectral initialization,
filtered gradient descent) together with a benchmark harness.
"""

from .gaussian import (
    NonFiniteIntegrand,
    QuadratureRule,
    gauss_expect,
    stein_check_multivariate,
    stein_check_univariate,
    sup_expect_over_scale,
)
from .links import (
    ConstantsReport,
    DegenerateLink,
    LinkFunction,
    SolverFailure,
    UnknownLink,
    basin_radius,
    builtin_link,
    builtin_names,
    c4_hypercontractivity,
    c_lip,
    constants_report,
    curvature_proxies,
    esc,
    k4_for_noise,
    phi_constants,
    score_kurtosis,
)
from .data import (
    AdversaryModel,
    Dataset,
    EpsOutOfRange,
    GroundTruth,
    NoiseModel,
    TooFewSamples,
    corrupt,
    sample_clean,
    split_buckets,
)
from .robust import (
    FilterCollapse,
    FilterConfig,
    FilterRound,
    energy_ratio,
    power_iteration,
    robust_mean,
    robust_top_eigenvector,
)
from .recover import (
    NonFiniteIterate,
    RecoveryConfig,
    RecoveryResult,
    TrajectoryPoint,
    baseline_erm,
    distance,
    gradient_points,
    lrgd,
    lrsi,
    recover,
)
from .bench import (
    Scenario,
    SweepRow,
    emit,
    fit_loglog_slope,
    hessian_spectrum_check,
    read_rows,
    run_single_trial,
    sweep_epsilon,
    verify_table2,
)

__version__ = "0.1.0"
