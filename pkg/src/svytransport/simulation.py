"""Monte Carlo harness: known-truth populations, selection, and scoring.

Each replication builds a synthetic finite population with six standard
normal covariates (three correlated pairs), assigns every unit a trial and
a survey selection probability through scaled logistic models, draws the
two samples by a per-unit categorical draw, and scores the three estimators
against the true population average effect of 2.  Survey weights are the
inverse of the scaled survey-selection probability, so the harness mimics a
design-weighted survey exactly.

Scenario defaults are desk scale (population 1e5, 500 replications, and
selection scales that realize roughly 600 trial and 4000 survey units);
``ScenarioConfig.full_scale()`` switches to the full-size setup.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field, fields, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .bootstrap import BootstrapPlan, double_bootstrap
from .data import CombinedDataset, EffectScale, EstimandSpec, EstimatorKind, Learner
from .diagnostics import selection_asmd
from .errors import ConfigError, EstimationError, NumericalError
from .pipeline import estimate_bundle

__all__ = [
    "COVARIATE_NAMES",
    "TRUE_PATE",
    "ScenarioConfig",
    "Population",
    "SampleDraw",
    "ReplicationResult",
    "CellSummary",
    "ScenarioSummary",
    "generate_population",
    "draw_samples",
    "run_scenario",
    "scenario_grid",
    "grid_to_csv",
    "load_grid_config",
]

COVARIATE_NAMES = ("X1", "X2", "X3", "X4", "X5", "X6")
TRUE_PATE = 2.0

TRIAL_COEF = np.array([1.0, 1.0, 2.0, 0.0, 1.0, 0.0])
SURVEY_COEF = np.array([2.0, 0.0, 1.0, 1.0, 1.0, 0.0])

# Boosting settings used inside replications unless overridden: far fewer,
# more aggressive rounds than the standalone-model defaults, sized so a
# full scenario stays laptop-runnable.
SIM_GBM_OPTIONS = {"n_trees": 100, "shrinkage": 0.2}

_LEARNER_CHOICES = ("logistic", "gbm", "both")


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation scenario.

    ``gamma1`` and ``gamma2`` steer how strongly covariates drive trial and
    survey selection, ``gamma3`` the treatment-effect heterogeneity, and
    ``rho`` the within-pair covariate correlation.  ``trial_scale`` and
    ``survey_scale`` multiply the logistic selection probabilities to set
    expected sample sizes.  ``learner`` may be "logistic", "gbm" or "both".
    """

    population_size: int = 100_000
    rho: float = 0.0
    gamma1: float = 0.3
    gamma2: float = 0.3
    gamma3: float = 0.0
    trial_scale: float = 0.012
    survey_scale: float = 0.08
    omitted_covariates: tuple[str, ...] = ()
    learner: str = "logistic"
    n_replications: int = 500
    seed: int = 0
    gbm_options: Optional[Mapping] = None

    def __post_init__(self):
        object.__setattr__(
            self, "omitted_covariates", tuple(self.omitted_covariates)
        )
        if self.population_size < 1:
            raise ConfigError("population_size must be >= 1")
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError("rho must lie in [0, 1)")
        for name in ("gamma1", "gamma2", "gamma3"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        for name in ("trial_scale", "survey_scale"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        unknown = [c for c in self.omitted_covariates if c not in COVARIATE_NAMES]
        if unknown:
            raise ConfigError(f"unknown omitted covariate(s): {unknown}")
        if len(self.omitted_covariates) >= len(COVARIATE_NAMES):
            raise ConfigError("cannot omit every covariate")
        learner = str(self.learner)
        if isinstance(self.learner, Learner):
            learner = self.learner.value
        if learner not in _LEARNER_CHOICES:
            raise ConfigError(f"learner must be one of {_LEARNER_CHOICES}")
        object.__setattr__(self, "learner", learner)
        if self.n_replications < 1:
            raise ConfigError("n_replications must be >= 1")

    @classmethod
    def full_scale(cls, **overrides) -> "ScenarioConfig":
        """Full-size setup: population 1e6, scales 0.0006/0.004, 1000 runs.

        Note the expected realized sizes at these scales are about 300 trial
        and 2000 survey units (scale times population times the mean logistic
        probability of one half).
        """
        base = dict(
            population_size=1_000_000,
            trial_scale=0.0006,
            survey_scale=0.004,
            n_replications=1000,
        )
        base.update(overrides)
        return cls(**base)

    @property
    def learner_list(self) -> tuple[Learner, ...]:
        if self.learner == "both":
            return (Learner.LOGISTIC, Learner.GBM)
        return (Learner(self.learner),)

    @property
    def included_covariates(self) -> tuple[str, ...]:
        return tuple(c for c in COVARIATE_NAMES if c not in self.omitted_covariates)

    def to_dict(self) -> dict:
        out = {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if f.name != "gbm_options"
        }
        out["omitted_covariates"] = list(self.omitted_covariates)
        out["gbm_options"] = dict(self.gbm_options) if self.gbm_options else None
        return out


def _expit(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class Population:
    """Synthetic finite population with both potential outcomes attached."""

    X: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    p_trial: np.ndarray  # unscaled P(trial | X)
    p_survey: np.ndarray  # unscaled P(survey | X)

    @property
    def size(self) -> int:
        return self.X.shape[0]

    @property
    def pate(self) -> float:
        return float(np.mean(self.y1 - self.y0))


def generate_population(config: ScenarioConfig, rng: np.random.Generator) -> Population:
    """Draw a population: paired-normal covariates, outcomes, selection probs.

    Covariates come in pairs (X1,X2), (X3,X4), (X5,X6), each pair bivariate
    normal with unit variances and correlation rho.  Y(0) is standard
    normal; Y(1) is 2 + gamma3 * (sum of covariates) plus standard normal
    noise, making 2 the population average effect for any gamma3.
    Consumes, in order: one (N, 6) standard-normal block, then the Y(0)
    noise, then the Y(1) noise.
    """
    n = config.population_size
    Z = rng.standard_normal((n, 6))
    X = np.empty_like(Z)
    mix = np.sqrt(1.0 - config.rho**2)
    for pair in range(3):
        a, b = 2 * pair, 2 * pair + 1
        X[:, a] = Z[:, a]
        X[:, b] = config.rho * Z[:, a] + mix * Z[:, b]
    y0 = rng.standard_normal(n)
    y1 = TRUE_PATE + config.gamma3 * X.sum(axis=1) + rng.standard_normal(n)
    p_trial = _expit(config.gamma1 * (X @ TRIAL_COEF))
    p_survey = _expit(config.gamma2 * (X @ SURVEY_COEF))
    return Population(X=X, y0=y0, y1=y1, p_trial=p_trial, p_survey=p_survey)


@dataclass(frozen=True)
class SampleDraw:
    """Realized trial + survey samples with the true selection probabilities."""

    dataset: CombinedDataset
    p_survey_sample: np.ndarray  # scaled survey prob of each sampled survey unit
    p_survey_population: np.ndarray  # scaled survey prob of every population unit

    @property
    def selection_asmd(self) -> float:
        return selection_asmd(self.p_survey_sample, self.p_survey_population)


def draw_samples(
    population: Population, config: ScenarioConfig, rng: np.random.Generator
) -> SampleDraw:
    """Assign each unit to trial, survey or neither and build the dataset.

    Per unit the category is drawn with probabilities (scaled trial prob,
    scaled survey prob, remainder); trial units get a fair-coin treatment
    and the matching potential outcome, survey units get weight
    1 / (scaled survey prob).  Consumes one uniform per unit, then one
    uniform per trial unit.
    """
    p1 = config.trial_scale * population.p_trial
    p2 = config.survey_scale * population.p_survey
    if float(np.max(p1 + p2)) > 1.0:
        raise ConfigError(
            "scaled selection probabilities sum past 1 for some unit; "
            "reduce trial_scale/survey_scale"
        )
    u = rng.random(population.size)
    in_trial = u < p1
    in_survey = (~in_trial) & (u < p1 + p2)

    treated = rng.random(int(in_trial.sum())) < 0.5
    a = treated.astype(float)
    y = np.where(treated, population.y1[in_trial], population.y0[in_trial])
    dataset = CombinedDataset.from_arrays(
        COVARIATE_NAMES,
        population.X[in_trial],
        a,
        y,
        population.X[in_survey],
        1.0 / p2[in_survey],
    )
    return SampleDraw(
        dataset=dataset,
        p_survey_sample=p2[in_survey],
        p_survey_population=p2,
    )


@dataclass(frozen=True)
class CellOutcome:
    point: float
    se: float
    covered: bool
    boot_covered: Optional[bool] = None


@dataclass(frozen=True)
class ReplicationResult:
    """One replication's estimates keyed by (estimator, learner) name pair."""

    outcomes: dict[tuple[str, str], CellOutcome]
    n_trial: int
    n_survey: int
    selection_asmd: float


@dataclass(frozen=True)
class CellSummary:
    estimator: str
    learner: str
    bias: float
    coverage: float
    mean_se: float
    sd_points: float
    n_used: int
    boot_coverage: Optional[float] = None


@dataclass(frozen=True)
class ScenarioSummary:
    config: ScenarioConfig
    cells: dict[tuple[str, str], CellSummary]
    n_failed: int
    mean_selection_asmd: float
    mean_n_trial: float
    mean_n_survey: float
    replications: Optional[list[ReplicationResult]] = None

    def cell(self, estimator: str, learner: str) -> CellSummary:
        return self.cells[(estimator, learner)]

    def to_rows(self) -> list[dict]:
        rows = []
        for (estimator, learner), c in sorted(self.cells.items()):
            row = self.config.to_dict()
            row["omitted_covariates"] = "+".join(self.config.omitted_covariates)
            row.pop("gbm_options", None)
            row.update(
                estimator=estimator,
                cell_learner=learner,
                bias=c.bias,
                coverage=c.coverage,
                mean_se=c.mean_se,
                sd_points=c.sd_points,
                n_used=c.n_used,
                n_failed=self.n_failed,
                boot_coverage="" if c.boot_coverage is None else c.boot_coverage,
                mean_selection_asmd=self.mean_selection_asmd,
                mean_n_trial=self.mean_n_trial,
                mean_n_survey=self.mean_n_survey,
            )
            rows.append(row)
        return rows


def _replication(
    config: ScenarioConfig,
    rng: np.random.Generator,
    bootstrap_iterations: Optional[int],
) -> ReplicationResult:
    population = generate_population(config, rng)
    draw = draw_samples(population, config, rng)
    boot_seed = int(rng.integers(2**63)) if bootstrap_iterations else 0
    included = config.included_covariates
    gbm_options = dict(config.gbm_options) if config.gbm_options else SIM_GBM_OPTIONS

    outcomes: dict[tuple[str, str], CellOutcome] = {}
    for learner in config.learner_list:
        bundle = estimate_bundle(
            draw.dataset, included, learner, EffectScale.MEAN_DIFFERENCE,
            gbm_options=gbm_options,
        )
        boot_covered = None
        if bootstrap_iterations:
            plan = BootstrapPlan(n_iterations=bootstrap_iterations, rng_seed=boot_seed)
            spec = EstimandSpec(
                estimator=EstimatorKind.SURVEY_WEIGHTED,
                membership_learner=learner,
                covariate_subset=included,
            )
            boot = double_bootstrap(draw.dataset, spec, plan, gbm_options=gbm_options)
            boot_covered = bool(boot.ci[0] <= TRUE_PATE <= boot.ci[1])
        for est in bundle.estimates:
            covered = bool(est.ci_low <= TRUE_PATE <= est.ci_high)
            outcomes[(est.estimator.value, learner.value)] = CellOutcome(
                point=est.point,
                se=est.se,
                covered=covered,
                boot_covered=boot_covered
                if est.estimator == EstimatorKind.SURVEY_WEIGHTED
                else None,
            )
    return ReplicationResult(
        outcomes=outcomes,
        n_trial=draw.dataset.n_trial,
        n_survey=draw.dataset.n_survey,
        selection_asmd=draw.selection_asmd,
    )


def run_scenario(
    config: ScenarioConfig,
    bootstrap_iterations: Optional[int] = None,
    keep_replications: bool = False,
) -> ScenarioSummary:
    """Run all replications of one scenario and aggregate bias and coverage.

    Replication r uses a generator seeded with the r-th child of
    numpy.random.SeedSequence(config.seed), so results are reproducible and
    independent of execution order.  Replications that fail numerically are
    dropped and counted; more than 10% failures aborts the scenario.
    Coverage is always evaluated against the design truth of 2, not the
    realized population mean.
    """
    children = np.random.SeedSequence(config.seed).spawn(config.n_replications)
    results: list[ReplicationResult] = []
    n_failed = 0
    for child in children:
        rng = np.random.default_rng(child)
        try:
            results.append(_replication(config, rng, bootstrap_iterations))
        except NumericalError:
            n_failed += 1
    if n_failed > 0.1 * config.n_replications:
        raise EstimationError(
            f"scenario unstable: {n_failed} of {config.n_replications} "
            "replications failed (> 10%)"
        )
    if not results:
        raise EstimationError("no successful replications")

    cells: dict[tuple[str, str], CellSummary] = {}
    for key in results[0].outcomes:
        points = np.array([r.outcomes[key].point for r in results])
        ses = np.array([r.outcomes[key].se for r in results])
        covered = np.array([r.outcomes[key].covered for r in results])
        boots = [
            r.outcomes[key].boot_covered
            for r in results
            if r.outcomes[key].boot_covered is not None
        ]
        cells[key] = CellSummary(
            estimator=key[0],
            learner=key[1],
            bias=float(points.mean() - TRUE_PATE),
            coverage=float(covered.mean()),
            mean_se=float(ses.mean()),
            sd_points=float(points.std(ddof=1)) if points.size > 1 else 0.0,
            n_used=int(points.size),
            boot_coverage=float(np.mean(boots)) if boots else None,
        )
    return ScenarioSummary(
        config=config,
        cells=cells,
        n_failed=n_failed,
        mean_selection_asmd=float(np.mean([r.selection_asmd for r in results])),
        mean_n_trial=float(np.mean([r.n_trial for r in results])),
        mean_n_survey=float(np.mean([r.n_survey for r in results])),
        replications=results if keep_replications else None,
    )


def scenario_grid(
    base: ScenarioConfig,
    axes: Mapping[str, Sequence],
    bootstrap_iterations: Optional[int] = None,
) -> list[ScenarioSummary]:
    """Cartesian product of scenario settings, one summary per cell.

    Every cell gets an independent seed derived from (base seed, cell
    index), so adding or reordering axis values changes only the affected
    cells' draws, never the shared base.
    """
    valid = {f.name for f in fields(ScenarioConfig)}
    bad = [k for k in axes if k not in valid]
    if bad:
        raise ConfigError(f"unknown scenario field(s) in grid axes: {bad}")
    names = list(axes.keys())
    combos = list(itertools.product(*(axes[k] for k in names)))
    summaries = []
    for i, combo in enumerate(combos):
        overrides = dict(zip(names, combo))
        cell_seed = int(np.random.SeedSequence([base.seed, i]).generate_state(1)[0])
        cell = replace(base, **overrides, seed=cell_seed)
        summaries.append(run_scenario(cell, bootstrap_iterations))
    return summaries


_GRID_CSV_FIELDS = [
    "population_size", "rho", "gamma1", "gamma2", "gamma3",
    "trial_scale", "survey_scale", "omitted_covariates", "learner",
    "n_replications", "seed", "estimator", "cell_learner",
    "bias", "coverage", "mean_se", "sd_points", "n_used", "n_failed",
    "boot_coverage", "mean_selection_asmd", "mean_n_trial", "mean_n_survey",
]


def grid_to_csv(summaries: Sequence[ScenarioSummary], path) -> None:
    """Long-format results: one row per (scenario cell, estimator, learner)."""
    with open(path, "w", newline="") as fh:
        out = csv.DictWriter(fh, fieldnames=_GRID_CSV_FIELDS)
        out.writeheader()
        for summary in summaries:
            for row in summary.to_rows():
                out.writerow({k: row.get(k, "") for k in _GRID_CSV_FIELDS})


def load_grid_config(path) -> tuple[ScenarioConfig, dict]:
    """Read a {"base": {...}, "axes": {...}} JSON grid description."""
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read grid config {path}: {exc}") from exc
    if not isinstance(payload, dict) or "base" not in payload:
        raise ConfigError('grid config must be an object with a "base" section')
    base_dict = dict(payload["base"])
    if "omitted_covariates" in base_dict:
        base_dict["omitted_covariates"] = tuple(base_dict["omitted_covariates"])
    try:
        base = ScenarioConfig(**base_dict)
    except TypeError as exc:
        raise ConfigError(f"bad scenario field in grid config: {exc}") from exc
    axes = dict(payload.get("axes", {}))
    for key, values in axes.items():
        if not isinstance(values, Sequence) or isinstance(values, (str, bytes)):
            raise ConfigError(f"grid axis {key!r} must be a list of values")
        if key == "omitted_covariates":
            axes[key] = [tuple(v) for v in values]
    return base, axes
