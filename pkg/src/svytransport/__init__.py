"""Transport randomized-trial effects to survey-represented populations.

A trial tells you the effect in its own sample; a complex survey tells you
what the target population looks like.  This package joins the two: it
models which sample each unit landed in, converts the fitted probabilities
into per-trial-unit weights (either toward the survey sample or, using the
survey weights, toward the population itself), and forms weighted effect
contrasts with linearization or double-bootstrap uncertainty, plus balance
diagnostics and a known-truth simulation harness.
"""

__version__ = "0.1.0"

from .boosting import GBMMembershipModel, fit_gbm
from .bootstrap import (
    BootstrapPlan,
    BootstrapResult,
    CiMethod,
    double_bootstrap,
    resample_survey_stratified,
)
from .data import (
    ColumnSchema,
    CombinedDataset,
    EffectScale,
    EstimandSpec,
    EstimatorKind,
    Learner,
    Sample,
    UnitRecord,
    ValidationReport,
    dataset_to_csv,
    load_csv,
    validate,
)
from .diagnostics import (
    BalanceTable,
    DenominatorConvention,
    asmd,
    balance_table,
    selection_asmd,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    EstimationError,
    NumericalError,
    RankDeficiencyError,
    SchemaError,
    SeparationError,
    SvyTransportError,
    ValidationError,
)
from .estimators import (
    PateEstimate,
    confidence_interval,
    estimate_naive,
    estimate_weighted,
    sandwich_se,
)
from .membership import LogisticMembershipModel, fit_logistic
from .pipeline import EstimateBundle, estimate_bundle, single_estimate
from .simulation import (
    ScenarioConfig,
    ScenarioSummary,
    draw_samples,
    generate_population,
    run_scenario,
    scenario_grid,
)
from .weights import (
    WeightVariant,
    WeightVector,
    delta_weights_direct,
    delta_weights_two_stage,
    gamma_weights,
    weight_summary,
)

__all__ = [
    "__version__",
    "BalanceTable",
    "BootstrapPlan",
    "BootstrapResult",
    "CiMethod",
    "ColumnSchema",
    "CombinedDataset",
    "ConfigError",
    "ConvergenceError",
    "DenominatorConvention",
    "EffectScale",
    "EstimandSpec",
    "EstimateBundle",
    "EstimationError",
    "EstimatorKind",
    "GBMMembershipModel",
    "Learner",
    "LogisticMembershipModel",
    "NumericalError",
    "PateEstimate",
    "RankDeficiencyError",
    "Sample",
    "ScenarioConfig",
    "ScenarioSummary",
    "SchemaError",
    "SeparationError",
    "SvyTransportError",
    "UnitRecord",
    "ValidationError",
    "ValidationReport",
    "WeightVariant",
    "WeightVector",
    "asmd",
    "balance_table",
    "confidence_interval",
    "dataset_to_csv",
    "delta_weights_direct",
    "delta_weights_two_stage",
    "double_bootstrap",
    "draw_samples",
    "estimate_bundle",
    "estimate_naive",
    "estimate_weighted",
    "fit_gbm",
    "fit_logistic",
    "gamma_weights",
    "generate_population",
    "load_csv",
    "resample_survey_stratified",
    "run_scenario",
    "sandwich_se",
    "scenario_grid",
    "selection_asmd",
    "single_estimate",
    "validate",
    "weight_summary",
]
