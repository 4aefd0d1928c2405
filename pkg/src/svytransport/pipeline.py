"""End-to-end fitting pipelines shared by the bootstrap, simulation and CLI.

One replicate of any analysis is: fit membership model(s) on the combined
data, turn fitted probabilities into trial weights, and form weighted
contrasts.  These helpers keep that sequence in one place.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .boosting import fit_gbm
from .data import CombinedDataset, EffectScale, EstimandSpec, EstimatorKind, Learner
from .errors import ConfigError
from .estimators import DEFAULT_LEVEL, PateEstimate, estimate_naive, estimate_weighted
from .membership import fit_logistic
from .weights import WeightVector, delta_weights_two_stage, gamma_weights

__all__ = ["fit_membership", "single_estimate", "estimate_bundle", "EstimateBundle"]


def fit_membership(
    dataset: CombinedDataset,
    learner: Learner = Learner.LOGISTIC,
    covariates: Optional[Sequence[str]] = None,
    weighted: bool = True,
    gbm_options: Optional[Mapping] = None,
):
    """Fit P(survey | X) with the requested learner."""
    learner = Learner(learner)
    if learner == Learner.LOGISTIC:
        return fit_logistic(dataset, covariates, weighted)
    return fit_gbm(dataset, covariates, weighted, **dict(gbm_options or {}))


def single_estimate(
    dataset: CombinedDataset,
    spec: EstimandSpec,
    level: float = DEFAULT_LEVEL,
    continuity: bool = False,
    gbm_options: Optional[Mapping] = None,
    cap_percentile: Optional[float] = None,
) -> PateEstimate:
    """Run the full pipeline for one estimator as described by ``spec``."""
    spec.validate_against(dataset)
    if spec.estimator == EstimatorKind.NAIVE:
        return estimate_naive(dataset, spec.effect_scale, level, continuity)
    covariates = spec.covariate_subset
    if spec.estimator == EstimatorKind.TRANSPORT:
        model = fit_membership(dataset, spec.membership_learner, covariates, False, gbm_options)
        w = gamma_weights(model, dataset, cap_percentile)
    elif spec.estimator == EstimatorKind.SURVEY_WEIGHTED:
        model = fit_membership(dataset, spec.membership_learner, covariates, True, gbm_options)
        w = delta_weights_two_stage(model, dataset, cap_percentile)
    else:
        raise ConfigError(f"unknown estimator {spec.estimator!r}")
    return estimate_weighted(dataset, w, spec.effect_scale, level, continuity)


@dataclass(frozen=True)
class EstimateBundle:
    """All three estimators computed on one dataset with one learner."""

    naive: PateEstimate
    transport: PateEstimate
    survey_weighted: PateEstimate
    gamma: WeightVector
    delta: WeightVector
    model_unweighted: object
    model_weighted: object

    @property
    def estimates(self) -> tuple[PateEstimate, PateEstimate, PateEstimate]:
        return (self.naive, self.transport, self.survey_weighted)


def estimate_bundle(
    dataset: CombinedDataset,
    covariates: Optional[Sequence[str]] = None,
    learner: Learner = Learner.LOGISTIC,
    scale: EffectScale = EffectScale.MEAN_DIFFERENCE,
    level: float = DEFAULT_LEVEL,
    continuity: bool = False,
    gbm_options: Optional[Mapping] = None,
    cap_percentile: Optional[float] = None,
) -> EstimateBundle:
    """Fit both membership variants once and compute all three estimators."""
    model_u = fit_membership(dataset, learner, covariates, False, gbm_options)
    model_w = fit_membership(dataset, learner, covariates, True, gbm_options)
    gamma = gamma_weights(model_u, dataset, cap_percentile)
    delta = delta_weights_two_stage(model_w, dataset, cap_percentile)
    return EstimateBundle(
        naive=estimate_naive(dataset, scale, level, continuity),
        transport=estimate_weighted(dataset, gamma, scale, level, continuity),
        survey_weighted=estimate_weighted(dataset, delta, scale, level, continuity),
        gamma=gamma,
        delta=delta,
        model_unweighted=model_u,
        model_weighted=model_w,
    )
