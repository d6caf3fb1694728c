"""Regenerative integer compositions driven by subordinators.

Exact finite-n laws, poissonised integral recursions, closed-form asymptotic
coefficients and exact-in-law Monte Carlo, for gamma and gamma-like Levy
measures.
"""

from .asymptotics import (
    ExpansionCoefficients,
    SmallPartExpansion,
    clt_normalize,
    covariance_prediction,
    cumulative_small_parts,
    mean_expansion,
    oscillation_phi,
    small_part_expansion,
    variance_leading,
)
from .errors import AccuracyError, StabilityError, TableRangeError
from .exact import (
    FirstPartLaw,
    MomentTable,
    PartsPMF,
    PatternSpec,
    cross_moment,
    first_part_law,
    moments_all_parts,
    moments_pattern,
    parts_pmf,
    sweep,
)
from .models import (
    ConditionReport,
    EwensLikeModel,
    GammaModel,
    GenericTailModel,
    GeometricAtomsModel,
    SubordinatorModel,
    load_generic_csv,
    parse_model,
)
from .montecarlo import (
    CompositionSample,
    CounterRng,
    SimulationSummary,
    ks_statistic,
    sample_composition,
    simulate,
)
from .poisson import (
    PartsDistribution,
    PoissonMomentCurve,
    RhoGrid,
    distribution_recursion,
    poissonise,
    residual_check,
    solve_recursion,
)
from .specfun import (
    EULER_GAMMA,
    PoleError,
    complex_gamma,
    digamma,
    lgamma_diff,
    log_beta,
    log_factorial,
    log_gamma,
    normal_cdf,
    poisson_tail_bound,
    polygamma,
)

__version__ = "0.1.0"

__all__ = [
    "AccuracyError",
    "CompositionSample",
    "ConditionReport",
    "CounterRng",
    "EULER_GAMMA",
    "EwensLikeModel",
    "ExpansionCoefficients",
    "FirstPartLaw",
    "GammaModel",
    "GenericTailModel",
    "GeometricAtomsModel",
    "MomentTable",
    "PartsDistribution",
    "PartsPMF",
    "PatternSpec",
    "PoissonMomentCurve",
    "PoleError",
    "RhoGrid",
    "SimulationSummary",
    "SmallPartExpansion",
    "StabilityError",
    "SubordinatorModel",
    "TableRangeError",
    "clt_normalize",
    "complex_gamma",
    "covariance_prediction",
    "cross_moment",
    "cumulative_small_parts",
    "digamma",
    "distribution_recursion",
    "first_part_law",
    "ks_statistic",
    "lgamma_diff",
    "load_generic_csv",
    "log_beta",
    "log_factorial",
    "log_gamma",
    "mean_expansion",
    "moments_all_parts",
    "moments_pattern",
    "normal_cdf",
    "oscillation_phi",
    "parse_model",
    "parts_pmf",
    "poisson_tail_bound",
    "poissonise",
    "polygamma",
    "residual_check",
    "sample_composition",
    "simulate",
    "small_part_expansion",
    "solve_recursion",
    "sweep",
    "variance_leading",
    "__version__",
]
