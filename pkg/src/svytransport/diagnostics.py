"""Covariate balance diagnostics for transport weighting.

The central quantity is the absolute standardized mean difference (ASMD)
between two weighted samples.  The balance table reports, per covariate,
how far the trial sits from the target before weighting and how much of the
gap each weight variant closes:

* pre: unweighted trial vs the survey-weighted population.
* post-gamma: gamma-weighted trial vs the raw survey sample.
* post-delta: delta-weighted trial vs the survey-weighted population.

Each comparison pairs a weighting of the trial with the target that this
weighting aims at.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .data import CombinedDataset
from .errors import EstimationError, ValidationError
from .weights import WeightVector

__all__ = [
    "DenominatorConvention",
    "BalanceRow",
    "BalanceTable",
    "weighted_mean",
    "weighted_var",
    "asmd",
    "balance_table",
    "selection_asmd",
    "balance_iteration_scorer",
]


class DenominatorConvention(str, Enum):
    """Which standard deviation scales the mean difference.

    POOLED averages the two groups' weighted variances; TRIAL uses the first
    (reference) group's SD alone; POPULATION uses the second (target)
    group's SD alone.
    """

    POOLED = "pooled"
    TRIAL = "trial"
    POPULATION = "population"


def weighted_mean(x: np.ndarray, w: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    total = float(w.sum())
    if x.size == 0 or total <= 0:
        raise EstimationError("weighted mean needs a nonempty sample with positive weight")
    return float(np.sum(w * x) / total)


def weighted_var(x: np.ndarray, w: np.ndarray) -> float:
    """Frequency-weights variance sum w (x - xbar)^2 / sum w (no ddof)."""
    m = weighted_mean(x, w)
    return float(np.sum(np.asarray(w, dtype=float) * (np.asarray(x, dtype=float) - m) ** 2) / np.sum(w))


def asmd(
    x_a: np.ndarray,
    w_a: np.ndarray,
    x_b: np.ndarray,
    w_b: np.ndarray,
    denominator: DenominatorConvention = DenominatorConvention.POOLED,
) -> float:
    """Absolute standardized mean difference between two weighted samples.

    The first sample is the reference (trial) group, the second the target;
    this ordering matters only for the TRIAL and POPULATION denominator
    conventions.  A zero denominator is an error unless the means already
    agree, in which case the ASMD is 0.  Zero is judged at 1e-12 relative
    to the means, so constant samples whose means differ only by summation
    rounding report 0 rather than noise / noise.
    """
    denominator = DenominatorConvention(denominator)
    mean_a, mean_b = weighted_mean(x_a, w_a), weighted_mean(x_b, w_b)
    var_a, var_b = weighted_var(x_a, w_a), weighted_var(x_b, w_b)
    if denominator == DenominatorConvention.POOLED:
        denom = math.sqrt(0.5 * (var_a + var_b))
    elif denominator == DenominatorConvention.TRIAL:
        denom = math.sqrt(var_a)
    else:
        denom = math.sqrt(var_b)
    diff = abs(mean_a - mean_b)
    tol = 1e-12 * max(abs(mean_a), abs(mean_b))
    if denom <= tol:
        if diff <= tol:
            return 0.0
        raise EstimationError(
            f"ASMD denominator ({denominator.value} convention) is zero but the "
            f"means differ by {diff:g}"
        )
    return diff / denom


@dataclass(frozen=True)
class BalanceRow:
    covariate: str
    mean_trial: float
    mean_survey_raw: float
    mean_population: float
    asmd_pre: float
    asmd_post_gamma: float
    asmd_post_delta: float


@dataclass(frozen=True)
class BalanceTable:
    rows: tuple[BalanceRow, ...]
    denominator_convention: DenominatorConvention

    def to_dict(self) -> dict:
        return {
            "denominator_convention": self.denominator_convention.value,
            "rows": [vars(r) for r in self.rows],
        }

    def to_json(self, path=None) -> str:
        payload = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(payload + "\n")
        return payload

    def to_csv(self, path) -> None:
        """Wide format, one row per covariate."""
        fields = [
            "covariate", "mean_trial", "mean_survey_raw", "mean_population",
            "asmd_pre", "asmd_post_gamma", "asmd_post_delta",
        ]
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(fields + ["denominator_convention"])
            for r in self.rows:
                out.writerow(
                    [r.covariate]
                    + [repr(getattr(r, f)) for f in fields[1:]]
                    + [self.denominator_convention.value]
                )

    def to_long_csv(self, path) -> None:
        """Plot-ready long format: covariate, comparison, asmd."""
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["covariate", "comparison", "asmd"])
            for r in self.rows:
                out.writerow([r.covariate, "pre", repr(r.asmd_pre)])
                out.writerow([r.covariate, "post_gamma", repr(r.asmd_post_gamma)])
                out.writerow([r.covariate, "post_delta", repr(r.asmd_post_delta)])


def _check_weights(dataset: CombinedDataset, w: Optional[WeightVector], name: str) -> None:
    if w is None:
        return
    if w.n != dataset.n_trial:
        raise ValidationError(
            f"{name} weights have {w.n} entries but dataset has {dataset.n_trial} trial rows"
        )
    digest = getattr(w.source_model, "dataset_digest", None)
    if digest is not None and digest != dataset.digest():
        raise ValidationError(f"{name} weights were built from different data")


def balance_table(
    dataset: CombinedDataset,
    gamma: Optional[WeightVector],
    delta: Optional[WeightVector],
    denominator: DenominatorConvention = DenominatorConvention.POOLED,
) -> BalanceTable:
    """Per-covariate balance before and after each weighting.

    Either weight vector may be None, in which case its column is NaN.
    """
    denominator = DenominatorConvention(denominator)
    _check_weights(dataset, gamma, "gamma")
    _check_weights(dataset, delta, "delta")
    tm, sm = dataset.trial_mask, dataset.survey_mask
    ones_trial = np.ones(dataset.n_trial)
    ones_survey = np.ones(dataset.n_survey)
    d = dataset.survey_weight[sm]

    rows = []
    for j, name in enumerate(dataset.covariate_names):
        xt, xs = dataset.X[tm, j], dataset.X[sm, j]
        pre = asmd(xt, ones_trial, xs, d, denominator)
        post_g = (
            asmd(xt, gamma.values, xs, ones_survey, denominator)
            if gamma is not None
            else float("nan")
        )
        post_d = (
            asmd(xt, delta.values, xs, d, denominator)
            if delta is not None
            else float("nan")
        )
        rows.append(
            BalanceRow(
                covariate=name,
                mean_trial=weighted_mean(xt, ones_trial),
                mean_survey_raw=weighted_mean(xs, ones_survey),
                mean_population=weighted_mean(xs, d),
                asmd_pre=pre,
                asmd_post_gamma=post_g,
                asmd_post_delta=post_d,
            )
        )
    return BalanceTable(tuple(rows), denominator)


def selection_asmd(
    p_sample: np.ndarray,
    p_population: np.ndarray,
    denominator: DenominatorConvention = DenominatorConvention.POOLED,
) -> float:
    """ASMD of the survey-selection probability: sampled units vs everyone.

    Summarizes how non-uniform survey selection is; 0 when selection is
    uniform.  Invariant to rescaling both probability vectors by a common
    factor, so scaled and unscaled probabilities give the same value.
    """
    p_sample = np.asarray(p_sample, dtype=float)
    p_population = np.asarray(p_population, dtype=float)
    return asmd(
        p_sample, np.ones(p_sample.size), p_population, np.ones(p_population.size), denominator
    )


def balance_iteration_scorer(
    dataset: CombinedDataset,
    covariates: Optional[Sequence[str]] = None,
    weighted: bool = True,
    denominator: DenominatorConvention = DenominatorConvention.POOLED,
) -> Callable[[np.ndarray], float]:
    """Scorer for boosted-model iteration selection: mean covariate ASMD.

    The returned callable maps in-sample membership probabilities (one per
    dataset row) to the mean ASMD between the inverse-odds-weighted trial
    and the target implied by the fit variant: the survey-weighted
    population when ``weighted``, the raw survey sample otherwise.
    """
    names = tuple(covariates) if covariates is not None else dataset.covariate_names
    cols = dataset.column_indices(names)
    tm, sm = dataset.trial_mask, dataset.survey_mask
    Xt, Xs = dataset.X[tm][:, cols], dataset.X[sm][:, cols]
    target_w = dataset.survey_weight[sm] if weighted else np.ones(dataset.n_survey)

    def scorer(prob: np.ndarray) -> float:
        e = prob[tm]
        w_trial = e / (1.0 - e)
        values = [
            asmd(Xt[:, k], w_trial, Xs[:, k], target_w, denominator)
            for k in range(len(cols))
        ]
        return float(np.mean(values))

    return scorer
