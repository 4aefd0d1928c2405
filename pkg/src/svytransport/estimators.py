"""Treatment-effect estimators on the combined dataset.

Three point estimators, all contrasts of per-arm means over trial units:

* naive: unweighted arm means; estimates the trial-sample effect.
* transport: Hajek contrast under gamma weights; targets the survey sample.
* survey-weighted: Hajek contrast under delta weights; targets the
  population the survey represents.

Mean-difference and odds-ratio scales are supported; odds-ratio inference
runs on the log scale.  Standard errors for the weighted estimators come
from a Taylor-linearization (sandwich) formula that treats the weights as
fixed; re-estimation uncertainty in the weights is available separately via
the bootstrap module.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .data import CombinedDataset, EffectScale, EstimatorKind
from .errors import ConfigError, EstimationError, ValidationError
from .weights import WeightVariant, WeightVector, kish_ess

DEFAULT_LEVEL = 0.95


@dataclass(frozen=True)
class PateEstimate:
    """One estimator's output: point, uncertainty and per-arm summaries.

    For the odds-ratio scale ``point`` and the interval are on the ratio
    scale while ``se`` is the standard error of the log odds ratio.
    ``arm_means`` and ``n_effective`` are (treated, control); for weighted
    estimators ``n_effective`` is the Kish effective sample size of the arm
    weights rather than a raw count.
    """

    estimator: EstimatorKind
    effect_scale: EffectScale
    point: float
    se: float
    ci_low: float
    ci_high: float
    arm_means: tuple[float, float]
    n_effective: tuple[float, float]
    level: float = DEFAULT_LEVEL
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "estimator", EstimatorKind(self.estimator))
        object.__setattr__(self, "effect_scale", EffectScale(self.effect_scale))
        if self.se < 0:
            raise EstimationError("standard error cannot be negative")
        if not self.ci_low <= self.point <= self.ci_high:
            raise EstimationError(
                f"interval [{self.ci_low}, {self.ci_high}] does not bracket "
                f"point {self.point}"
            )
        if self.effect_scale == EffectScale.ODDS_RATIO and (
            self.point <= 0 or self.ci_low <= 0
        ):
            raise EstimationError("odds ratio and its interval must be positive")

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator.value,
            "scale": self.effect_scale.value,
            "point": self.point,
            "se": self.se,
            "ci": [self.ci_low, self.ci_high],
            "level": self.level,
            "arm_means": {"treated": self.arm_means[0], "control": self.arm_means[1]},
            "ess": {"treated": self.n_effective[0], "control": self.n_effective[1]},
            "metadata": dict(self.metadata),
        }


def _z(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise ConfigError(f"confidence level must lie in (0, 1), got {level}")
    return float(stats.norm.ppf(0.5 * (1.0 + level)))


def _trial_arrays(dataset: CombinedDataset) -> tuple[np.ndarray, np.ndarray]:
    tm = dataset.trial_mask
    return dataset.treatment[tm], dataset.outcome[tm]


def _require_binary_outcome(y: np.ndarray) -> None:
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValidationError("odds-ratio scale requires a binary 0/1 outcome")


def _hajek_mean(y: np.ndarray, w: np.ndarray, label: str) -> float:
    total = float(w.sum())
    if total <= 0:
        raise EstimationError(f"weighted arm empty: no weight mass in the {label} arm")
    return float(np.sum(w * y) / total)


def _odds(success: float, failure: float, label: str) -> float:
    if success > 0.0 and failure > 0.0:
        return success / failure
    raise EstimationError(
        f"zero cell in the {label} arm; "
        "rerun with the continuity-correction flag to add 0.5 per cell"
    )


def estimate_naive(
    dataset: CombinedDataset,
    scale: EffectScale = EffectScale.MEAN_DIFFERENCE,
    level: float = DEFAULT_LEVEL,
    continuity: bool = False,
) -> PateEstimate:
    """Unweighted contrast of trial arm means; ignores the survey entirely.

    Mean-difference SE is the Welch two-sample formula; odds-ratio SE is the
    log-scale cell-count formula.  With ``continuity`` a 0.5-per-cell
    correction rescues zero cells on the odds-ratio scale.
    """
    a, y = _trial_arrays(dataset)
    z = _z(level)
    arms = {}
    for arm, label in ((1.0, "treated"), (0.0, "control")):
        ya = y[a == arm]
        if ya.size == 0:
            raise EstimationError(f"empty {label} arm")
        arms[label] = ya

    y1, y0 = arms["treated"], arms["control"]
    n1, n0 = y1.size, y0.size
    if scale == EffectScale.MEAN_DIFFERENCE:
        point = float(y1.mean() - y0.mean())
        if n1 < 2 or n0 < 2:
            raise EstimationError("naive SE needs at least 2 units per arm")
        se = math.sqrt(y1.var(ddof=1) / n1 + y0.var(ddof=1) / n0)
        lo, hi = point - z * se, point + z * se
        means = (float(y1.mean()), float(y0.mean()))
    else:
        _require_binary_outcome(np.concatenate([y1, y0]))
        p1, p0 = float(y1.mean()), float(y0.mean())
        cells = np.array([y1.sum(), n1 - y1.sum(), y0.sum(), n0 - y0.sum()], dtype=float)
        if continuity and (cells == 0).any():
            cells = cells + 0.5
        if (cells == 0).any():
            raise EstimationError(
                "zero cell in the trial 2x2 table; "
                "rerun with the continuity-correction flag to add 0.5 per cell"
            )
        point = float((cells[0] / cells[1]) / (cells[2] / cells[3]))
        se = math.sqrt(float(np.sum(1.0 / cells)))
        lo, hi = math.exp(math.log(point) - z * se), math.exp(math.log(point) + z * se)
        means = (p1, p0)

    return PateEstimate(
        estimator=EstimatorKind.NAIVE,
        effect_scale=scale,
        point=point,
        se=float(se),
        ci_low=float(lo),
        ci_high=float(hi),
        arm_means=means,
        n_effective=(float(n1), float(n0)),
        level=level,
        metadata={"se_method": "two_sample"},
    )


def _arm_weights(
    dataset: CombinedDataset, w: WeightVector
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    a, y = _trial_arrays(dataset)
    if w.n != a.size:
        raise ValidationError(
            f"weight vector has {w.n} entries but dataset has {a.size} trial rows"
        )
    return a, y, w.values


def _estimator_kind(variant: WeightVariant) -> EstimatorKind:
    return (
        EstimatorKind.TRANSPORT
        if variant == WeightVariant.GAMMA
        else EstimatorKind.SURVEY_WEIGHTED
    )


def _weight_metadata(w: WeightVector, se_method: str) -> dict:
    model = w.source_model
    return {
        "se_method": se_method,
        "weight_variant": w.variant.value,
        "model_kind": getattr(model, "kind", None),
        "model_hash": getattr(model, "dataset_digest", None),
        "cap_percentile": w.cap_percentile,
    }


def estimate_weighted(
    dataset: CombinedDataset,
    w: WeightVector,
    scale: EffectScale = EffectScale.MEAN_DIFFERENCE,
    level: float = DEFAULT_LEVEL,
    continuity: bool = False,
) -> PateEstimate:
    """Hajek (ratio-normalized) weighted contrast of trial arm means.

    Normalizing each arm by its weight total makes the estimate invariant
    to rescaling all weights by a constant.  The estimator tag follows the
    weight variant: gamma weights give the transport estimator, either delta
    variant gives the survey-weighted estimator.
    """
    a, y, wv = _arm_weights(dataset, w)
    z = _z(level)
    w1, w0 = wv[a == 1.0], wv[a == 0.0]
    y1, y0 = y[a == 1.0], y[a == 0.0]
    mu1 = _hajek_mean(y1, w1, "treated")
    mu0 = _hajek_mean(y0, w0, "control")
    se = sandwich_se(dataset, w, scale, continuity=continuity)

    if scale == EffectScale.MEAN_DIFFERENCE:
        point = mu1 - mu0
        lo, hi = point - z * se, point + z * se
    else:
        _require_binary_outcome(y)
        # weighted 2x2 cell sums; the sums-ratio form of the Hajek odds
        # avoids the cancellation in mu/(1-mu) and reduces bitwise to the
        # naive cell-count odds when every weight is 1
        s1, f1 = float(np.sum(w1 * y1)), float(np.sum(w1 * (1.0 - y1)))
        s0, f0 = float(np.sum(w0 * y0)), float(np.sum(w0 * (1.0 - y0)))
        if continuity and 0.0 in (s1, f1, s0, f0):
            # correction, when triggered, applies to both arms' tables
            s1, f1, s0, f0 = s1 + 0.5, f1 + 0.5, s0 + 0.5, f0 + 0.5
        point = _odds(s1, f1, "treated") / _odds(s0, f0, "control")
        lo = math.exp(math.log(point) - z * se)
        hi = math.exp(math.log(point) + z * se)

    return PateEstimate(
        estimator=_estimator_kind(w.variant),
        effect_scale=scale,
        point=float(point),
        se=float(se),
        ci_low=float(lo),
        ci_high=float(hi),
        arm_means=(mu1, mu0),
        n_effective=(kish_ess(w1), kish_ess(w0)),
        level=level,
        metadata=_weight_metadata(w, "sandwich"),
    )


def sandwich_se(
    dataset: CombinedDataset,
    w: WeightVector,
    scale: EffectScale = EffectScale.MEAN_DIFFERENCE,
    continuity: bool = False,
) -> float:
    """Linearization SE of the Hajek contrast, weights treated as fixed.

    Per arm the variance of the Hajek mean is
    sum_i [w_i (y_i - mu_a)]^2 / (sum_i w_i)^2; arm variances add.  On the
    odds-ratio scale each arm's proportion variance is delta-method mapped
    to the log odds and the result is the SE of the log odds ratio.
    """
    scale = EffectScale(scale)
    a, y, wv = _arm_weights(dataset, w)
    if scale == EffectScale.ODDS_RATIO:
        _require_binary_outcome(y)
    total_var = 0.0
    for arm, label in ((1.0, "treated"), (0.0, "control")):
        ya, wa = y[a == arm], wv[a == arm]
        positive = wa > 0
        if positive.sum() < 2:
            raise EstimationError(
                f"sandwich SE undefined: fewer than 2 positive-weight units "
                f"in the {label} arm"
            )
        mu = _hajek_mean(ya, wa, label)
        var = float(np.sum((wa * (ya - mu)) ** 2) / wa.sum() ** 2)
        if scale == EffectScale.ODDS_RATIO:
            if not 0.0 < mu < 1.0:
                if not continuity:
                    raise EstimationError(
                        f"zero cell in the {label} arm; log-odds variance undefined"
                    )
                total = float(wa.sum())
                mu = (mu * total + 0.5) / (total + 1.0)
            var = var / (mu * (1.0 - mu)) ** 2
        total_var += var
    return math.sqrt(total_var)


def confidence_interval(est: PateEstimate, level: float) -> tuple[float, float]:
    """Wald interval at ``level`` from the estimate's point and SE.

    Odds-ratio intervals are built on the log scale and exponentiated.
    """
    z = _z(level)
    if est.effect_scale == EffectScale.ODDS_RATIO:
        center = math.log(est.point)
        return math.exp(center - z * est.se), math.exp(center + z * est.se)
    return est.point - z * est.se, est.point + z * est.se


def estimates_to_json(estimates: Sequence[PateEstimate], path=None) -> str:
    payload = json.dumps([e.to_dict() for e in estimates], indent=2)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(payload + "\n")
    return payload


def estimates_to_csv(estimates: Sequence[PateEstimate], path) -> None:
    """Plot-ready table, one row per estimator, the three side by side."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(
            [
                "estimator", "scale", "point", "se", "ci_low", "ci_high",
                "level", "ess_treated", "ess_control", "weight_variant",
                "model_kind", "se_method",
            ]
        )
        for e in estimates:
            out.writerow(
                [
                    e.estimator.value,
                    e.effect_scale.value,
                    repr(e.point),
                    repr(e.se),
                    repr(e.ci_low),
                    repr(e.ci_high),
                    repr(e.level),
                    repr(e.n_effective[0]),
                    repr(e.n_effective[1]),
                    e.metadata.get("weight_variant", ""),
                    e.metadata.get("model_kind", ""),
                    e.metadata.get("se_method", ""),
                ]
            )
