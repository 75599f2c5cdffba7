"""Heavy-tailed joint-tail asymptotics toolkit.

Single-big-jump equivalence for bivariate randomly weighted sums,
finite-horizon ruin in a two-line renewal risk model with interest, and
tail distortion risk measures in a spectral background risk model, each
paired with Monte Carlo or closed-form oracles at desk scale.
"""

from .dependence import (
    AMHCopula,
    FGMCopula,
    FrankCopula,
    GtaiReport,
    IndependenceCopula,
    SystemSampler,
    gtai_diagnostic,
    sai_constant,
    sample_pair,
    survival_copula,
    wuod_bound_check,
)
from .distributions import (
    Empirical,
    Pareto,
    ParetoMixture,
    TailClassReport,
    TailLaw,
    classify,
)
from .engine import Estimate, RunPlan, derive_stream, merge, run_mc
from .errors import (
    ClosedFormUnavailable,
    ConfigurationError,
    EstimationError,
    InfiniteMeanError,
    IntegrabilityError,
)
from .mrv import (
    GammaFunctionals,
    MRVSpec,
    ProductMRVSpec,
    gamma_functionals,
    identity_product,
    limit_measure_halfspace,
    linear_combination_tail_check,
    mrv_sample,
    multivariate_breiman,
)
from .renewal import (
    DeterministicInterarrival,
    ExponentialInterarrival,
    GammaInterarrival,
    RenewalFunction,
    RenewalSpec,
    RuinEstimate,
    UniformInterarrival,
    delta_asymptotic,
    joint_aggregate_tail,
    mc_ruin,
    renewal_function,
    ruin_analysis,
    sample_path,
)
from .risk_measures import (
    BackgroundRiskModel,
    IdentityDistortion,
    PowerDistortion,
    ProportionalHazardDistortion,
    TableDistortion,
    c_alpha,
    condition_check,
    corollary_independent,
    cte,
    tdrm_asymptotic,
    tdrm_exact,
    var,
)
from .weighted_sums import (
    BetaWeight,
    BivariateSumSpec,
    JointTailEstimate,
    PointMass,
    UniformWeight,
    breiman_product_tail,
    discrete_ruin_psi,
    max_joint_tail,
    mc_joint_tail,
    rv_closed_form,
    single_jump_rhs,
)

__version__ = "0.1.0"
