"""Posterior analysis and boundary evaluation for group sequential trials.

The package computes design likelihoods for realized interim decision
sequences, unconditional and conditional-on-decisions posteriors for
normal endpoints with known variance, the adaptation-induced posterior
divergence between the two, classical and alpha-spending stopping
boundaries calibrated by root finding, and Monte Carlo estimates of the
expected end-of-study divergence for pre-experimental boundary choice.
"""

__version__ = "0.1.0"

from .aipd import (
    AipdReport,
    aipd_direct,
    aipd_jensen,
    aipd_taylor,
    cross_entropy,
    discrepancy_report,
    entropy,
    hpd_interval,
    kl_divergence,
    surprisal,
)
from .calibration import (
    OBF,
    POCOCK,
    CalibrationTarget,
    InformationSchedule,
    OperatingPoint,
    SpendingFunction,
    build_classical_design,
    build_spending_design,
    calibrate_n_max,
    classical_boundaries,
    operating_characteristics,
    spending_boundaries,
    spending_value,
)
from .design import (
    BoundarySet,
    DecisionPath,
    OutcomeModel,
    QuadratureSpec,
    StageSchedule,
    TrialDesign,
    conditioning_intervals,
    design,
    path_from_data,
)
from .errors import (
    ConfigError,
    DomainError,
    GridTooNarrow,
    InconsistentTrajectory,
    LengthMismatch,
    MismatchedGrids,
    NonmonotoneSpending,
    NoRoot,
    NumericalUnderflow,
    SeqPosteriorError,
)
from .likelihood import (
    StoppingDistribution,
    design_likelihood,
    expected_sample_size,
    log_design_likelihood,
    log_interval_mass,
    stopping_probabilities,
)
from .posterior import (
    NormalPosterior,
    NormalPrior,
    PosteriorGrid,
    PosteriorSummary,
    ThetaGrid,
    bayes_factor,
    conditional_grid,
    conditional_posterior,
    interval_mass,
    log_bayes_factor,
    summarize,
    unconditional_posterior,
)
from .simulate import (
    AipdQuantiles,
    ExpectedAipdCurve,
    SimConfig,
    aipd_distribution,
    expected_aipd_at,
    expected_aipd_curve,
    simulate_trial,
    stream,
)
