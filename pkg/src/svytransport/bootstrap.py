"""Double bootstrap: resample trial and survey together, refit everything.

The sandwich SEs treat estimated weights as fixed; this module prices in
weight re-estimation by redoing the whole pipeline per replicate.  The trial
is resampled with replacement at full size.  The survey is resampled within
strata defined by deciles (generally, quantile bins) of the survey weights:
each stratum of size n_h contributes m_h = n_h - 1 draws with replacement,
and a subject drawn m times reappears as one row with weight
d * (n_h / (n_h - 1)) * m.  Since a draw lands on a given subject with
expectation m_h / n_h = (n_h - 1) / n_h, the adjusted weight has expectation
exactly d and every replicate's survey represents the same population total
on average.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional

import numpy as np
from scipy import stats

from .data import CombinedDataset, EffectScale, EstimandSpec, EstimatorKind
from .errors import ConfigError, EstimationError, NumericalError
from .pipeline import single_estimate

logger = logging.getLogger(__name__)

__all__ = [
    "CiMethod",
    "BootstrapPlan",
    "BootstrapResult",
    "resample_survey_stratified",
    "double_bootstrap",
]


class CiMethod(str, Enum):
    PERCENTILE = "percentile"
    NORMAL_APPROX = "normal"


@dataclass(frozen=True)
class BootstrapPlan:
    n_iterations: int = 1000
    n_strata: int = 10
    rng_seed: int = 0
    ci_method: CiMethod = CiMethod.PERCENTILE
    level: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "ci_method", CiMethod(self.ci_method))
        if self.n_iterations < 2:
            raise ConfigError("bootstrap needs at least 2 iterations")
        if self.n_strata < 1:
            raise ConfigError("bootstrap needs at least 1 stratum")
        if not 0.0 < self.level < 1.0:
            raise ConfigError("confidence level must lie in (0, 1)")


def _weight_strata(d: np.ndarray, n_strata: int) -> list[np.ndarray]:
    """Partition survey rows into weight-quantile strata of size >= 2.

    Rows are sorted by weight (stable, so ties keep input order) and cut
    into ``n_strata`` near-equal contiguous chunks.  Chunks smaller than 2
    are merged into their neighbor, with a warning; merging is forced, never
    silent, because the m_h = n_h - 1 rule needs n_h >= 2.
    """
    order = np.argsort(d, kind="stable")
    chunks = [c for c in np.array_split(order, n_strata) if c.size > 0]
    merged: list[np.ndarray] = []
    n_merges = 0
    for chunk in chunks:
        if merged and (chunk.size < 2 or merged[-1].size < 2):
            merged[-1] = np.concatenate([merged[-1], chunk])
            n_merges += 1
        else:
            merged.append(chunk)
    if len(merged) > 1 and merged[-1].size < 2:
        tail = merged.pop()
        merged[-1] = np.concatenate([merged[-1], tail])
        n_merges += 1
    if not merged or merged[0].size < 2:
        raise EstimationError("survey bootstrap needs at least 2 survey rows")
    if n_merges:
        logger.warning(
            "survey bootstrap: merged %d undersized weight stratum/strata into "
            "neighbors (%d strata used)", n_merges, len(merged),
        )
    return merged


def resample_survey_stratified(
    survey_weights: np.ndarray,
    plan: BootstrapPlan,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """One stratified survey resample.

    Returns (row indices into the survey sample, adjusted weights), one
    entry per distinct subject drawn; a subject drawn m times appears once
    with its weight scaled by (n_h / (n_h - 1)) * m.
    """
    d = np.asarray(survey_weights, dtype=float)
    idx_parts: list[np.ndarray] = []
    w_parts: list[np.ndarray] = []
    for members in _weight_strata(d, plan.n_strata):
        n_h = members.size
        counts = rng.multinomial(n_h - 1, np.full(n_h, 1.0 / n_h))
        drawn = counts > 0
        idx_parts.append(members[drawn])
        w_parts.append(d[members[drawn]] * (n_h / (n_h - 1.0)) * counts[drawn])
    return np.concatenate(idx_parts), np.concatenate(w_parts)


@dataclass(frozen=True)
class BootstrapResult:
    """Replicate distribution summary for one estimator.

    ``se`` is the standard deviation of the replicate estimates on their
    natural scale; for the odds-ratio scale the normal-approximation CI is
    nevertheless built on the log scale.
    """

    replicate_estimates: np.ndarray
    point: float
    se: float
    ci: tuple[float, float]
    n_failed: int
    ci_method: CiMethod
    level: float

    @property
    def n_replicates(self) -> int:
        return int(self.replicate_estimates.size)

    def to_dict(self) -> dict:
        return {
            "point": self.point,
            "se": self.se,
            "ci": [self.ci[0], self.ci[1]],
            "level": self.level,
            "ci_method": self.ci_method.value,
            "n_replicates": self.n_replicates,
            "n_failed": self.n_failed,
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["replicate", "estimate"])
            for i, v in enumerate(self.replicate_estimates):
                out.writerow([i, repr(float(v))])


def _nearest_rank_ci(sorted_reps: np.ndarray, level: float) -> tuple[float, float]:
    # Order statistics at the nearest ranks; no interpolation, so small
    # replicate counts behave predictably.
    B = sorted_reps.size
    alpha = 1.0 - level
    k_lo = max(int(math.ceil(B * alpha / 2.0)), 1)
    k_hi = min(int(math.ceil(B * (1.0 - alpha / 2.0))), B)
    return float(sorted_reps[k_lo - 1]), float(sorted_reps[k_hi - 1])


def summarize_replicates(
    replicates: np.ndarray,
    point: float,
    plan: BootstrapPlan,
    scale: EffectScale,
    n_failed: int,
) -> BootstrapResult:
    replicates = np.sort(np.asarray(replicates, dtype=float))
    se = float(np.std(replicates, ddof=1)) if replicates.size > 1 else float("nan")
    if plan.ci_method == CiMethod.PERCENTILE:
        ci = _nearest_rank_ci(replicates, plan.level)
    else:
        z = float(stats.norm.ppf(0.5 * (1.0 + plan.level)))
        if scale == EffectScale.ODDS_RATIO:
            log_sd = float(np.std(np.log(replicates), ddof=1))
            ci = (
                math.exp(math.log(point) - z * log_sd),
                math.exp(math.log(point) + z * log_sd),
            )
        else:
            ci = (point - z * se, point + z * se)
    return BootstrapResult(
        replicate_estimates=replicates,
        point=float(point),
        se=se,
        ci=ci,
        n_failed=int(n_failed),
        ci_method=plan.ci_method,
        level=plan.level,
    )


def double_bootstrap(
    dataset: CombinedDataset,
    spec: EstimandSpec,
    plan: BootstrapPlan,
    continuity: bool = False,
    gbm_options: Optional[Mapping] = None,
) -> BootstrapResult:
    """Bootstrap one weighted estimator by resampling trial and survey jointly.

    Per replicate the membership model is refit from scratch on the
    resampled data, so the spread prices in weight estimation.  Replicates
    whose fit fails numerically are dropped and counted; more than 20%
    failures aborts.  Given the same plan seed the replicate vector is
    reproducible: replicate b uses the b-th child of
    numpy.random.SeedSequence(plan.rng_seed).
    """
    if spec.estimator == EstimatorKind.NAIVE:
        raise ConfigError("bootstrap applies to the weighted estimators only")
    if plan.n_strata > dataset.n_survey:
        raise ConfigError(
            f"n_strata = {plan.n_strata} exceeds the survey size {dataset.n_survey}"
        )
    full = single_estimate(dataset, spec, plan.level, continuity, gbm_options)

    tm, sm = dataset.trial_mask, dataset.survey_mask
    Xt, Xs = dataset.X[tm], dataset.X[sm]
    a, y = dataset.treatment[tm], dataset.outcome[tm]
    d = dataset.survey_weight[sm]
    n1 = Xt.shape[0]
    names = dataset.covariate_names

    children = np.random.SeedSequence(plan.rng_seed).spawn(plan.n_iterations)
    points: list[float] = []
    n_failed = 0
    for child in children:
        rng = np.random.default_rng(child)
        trial_idx = rng.integers(0, n1, n1)
        s_idx, d_star = resample_survey_stratified(d, plan, rng)
        replicate = CombinedDataset.from_arrays(
            names, Xt[trial_idx], a[trial_idx], y[trial_idx], Xs[s_idx], d_star
        )
        try:
            est = single_estimate(replicate, spec, plan.level, continuity, gbm_options)
        except NumericalError as exc:
            n_failed += 1
            logger.debug("bootstrap replicate failed: %s", exc)
            continue
        points.append(est.point)

    if n_failed > 0.2 * plan.n_iterations:
        raise EstimationError(
            f"unstable configuration: {n_failed} of {plan.n_iterations} "
            "bootstrap replicates failed (> 20%)"
        )
    return summarize_replicates(
        np.array(points), full.point, plan, spec.effect_scale, n_failed
    )
