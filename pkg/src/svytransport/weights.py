"""Per-trial-unit weights that re-target trial contrasts at another sample.

Three variants, all inverse odds of membership evaluated at trial units:

* gamma: odds from the unweighted membership fit; re-targets the trial at
  the survey sample as drawn.
* delta, two-stage: odds from the survey-weighted membership fit; because
  the weighted fit treats each survey row as standing for its survey weight
  worth of population members, these odds estimate 1 / P(trial | X) and
  re-target the trial at the full population in one step.
* delta, direct: gamma times the unit's survey weight 1 / P(survey | X).
  Needs a survey-weight value for every trial unit, so it is only usable
  when covariates are coarse enough to look one up (or in simulations).

Survey units implicitly carry weight 0 throughout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .data import CombinedDataset
from .errors import ConfigError, EstimationError, ValidationError

__all__ = [
    "WeightVariant",
    "WeightVector",
    "gamma_weights",
    "delta_weights_two_stage",
    "delta_weights_direct",
    "weight_summary",
    "export_weights_csv",
]


class WeightVariant(str, Enum):
    GAMMA = "gamma"
    DELTA_TWO_STAGE = "delta_two_stage"
    DELTA_DIRECT = "delta_direct"


def kish_ess(values: np.ndarray) -> float:
    """Kish effective sample size (sum w)^2 / sum w^2."""
    values = np.asarray(values, dtype=float)
    total = values.sum()
    if total <= 0:
        return 0.0
    return float(total**2 / np.sum(values**2))


@dataclass(frozen=True)
class WeightVector:
    """Weights for the trial units of one dataset, in dataset row order.

    ``values[i]`` belongs to the i-th trial row (survey rows carry an
    implicit 0 and are not stored).  ``cap_value`` is set iff a percentile
    cap was applied.
    """

    values: np.ndarray
    variant: WeightVariant
    source_model: Optional[object] = None
    cap_percentile: Optional[float] = None
    cap_value: Optional[float] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValidationError("weight values must be a 1-D array")
        if not np.isfinite(values).all() or (values < 0).any():
            raise ValidationError("weights must be finite and nonnegative")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "variant", WeightVariant(self.variant))

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def ess(self) -> float:
        return kish_ess(self.values)

    def scaled(self, c: float) -> "WeightVector":
        if c <= 0:
            raise ConfigError("weight scale factor must be positive")
        return WeightVector(
            self.values * c, self.variant, self.source_model,
            self.cap_percentile, self.cap_value,
        )


def _check_model(model, dataset: CombinedDataset, want_weighted: bool, op: str) -> None:
    digest = getattr(model, "dataset_digest", None)
    if digest is not None and digest != dataset.digest():
        raise ValidationError(
            f"{op}: model was fitted on different data (digest mismatch)"
        )
    if bool(getattr(model, "weighted", want_weighted)) != want_weighted:
        kind = "survey-weighted" if want_weighted else "unweighted"
        raise ValidationError(f"{op}: requires a model from the {kind} membership fit")


def _check_arm_mass(values: np.ndarray, dataset: CombinedDataset) -> None:
    a = dataset.treatment[dataset.trial_mask]
    for arm, label in ((1.0, "treated"), (0.0, "control")):
        if not (values[a == arm] > 0).any():
            raise EstimationError(f"no positive weight in the {label} arm")


def _apply_cap(values: np.ndarray, cap_percentile: Optional[float]):
    if cap_percentile is None:
        return values, None
    if not 0.0 < cap_percentile < 100.0:
        raise ConfigError("cap percentile must lie in (0, 100)")
    cap = float(np.percentile(values, cap_percentile))
    return np.minimum(values, cap), cap


def _survey_odds(model, dataset: CombinedDataset) -> np.ndarray:
    # The model predicts e = P(survey | X); the weight is the inverse odds
    # of trial membership, (1 - P(trial|X)) / P(trial|X) = e / (1 - e).
    X = dataset.covariate_matrix(getattr(model, "covariate_names", None))[dataset.trial_mask]
    e = model.predict_prob(X)
    return e / (1.0 - e)


def gamma_weights(
    model, dataset: CombinedDataset, cap_percentile: Optional[float] = None
) -> WeightVector:
    """Inverse-odds weights (1 - e) / e from the unweighted membership fit.

    Re-targets trial contrasts at the survey sample as drawn, ignoring the
    survey weights.
    """
    _check_model(model, dataset, want_weighted=False, op="gamma_weights")
    values = _survey_odds(model, dataset)
    values, cap = _apply_cap(values, cap_percentile)
    _check_arm_mass(values, dataset)
    return WeightVector(values, WeightVariant.GAMMA, model, cap_percentile, cap)


def delta_weights_two_stage(
    model, dataset: CombinedDataset, cap_percentile: Optional[float] = None
) -> WeightVector:
    """Inverse-odds weights from the survey-weighted membership fit.

    The weighted fit's odds estimate 1 / P(trial | X), so these weights
    re-target trial contrasts at the population the survey represents.
    """
    _check_model(model, dataset, want_weighted=True, op="delta_weights_two_stage")
    values = _survey_odds(model, dataset)
    values, cap = _apply_cap(values, cap_percentile)
    _check_arm_mass(values, dataset)
    return WeightVector(values, WeightVariant.DELTA_TWO_STAGE, model, cap_percentile, cap)


CellMap = Union[np.ndarray, Mapping[tuple, float], Callable[[np.ndarray], float]]


def delta_weights_direct(
    gamma: WeightVector,
    dataset: CombinedDataset,
    cell_map: CellMap,
    cap_percentile: Optional[float] = None,
) -> WeightVector:
    """Gamma weights times each trial unit's survey weight 1 / P(survey | X).

    ``cell_map`` supplies that survey weight per trial unit: an array in
    trial-row order, a mapping keyed by the unit's covariate tuple, or a
    callable taking the covariate row.  Raises when a unit's value is
    missing or invalid.
    """
    if gamma.variant != WeightVariant.GAMMA:
        raise ConfigError("delta_weights_direct expects gamma-variant weights")
    trial_X = dataset.X[dataset.trial_mask]
    n1 = trial_X.shape[0]
    if gamma.n != n1:
        raise ValidationError(
            f"gamma weights have {gamma.n} entries but dataset has {n1} trial rows"
        )
    if isinstance(cell_map, np.ndarray) or (
        isinstance(cell_map, Sequence) and not isinstance(cell_map, (str, bytes))
    ):
        d = np.asarray(cell_map, dtype=float)
        if d.shape != (n1,):
            raise ValidationError(
                f"cell_map array must have one value per trial unit ({n1}), got {d.shape}"
            )
    elif isinstance(cell_map, Mapping):
        d = np.empty(n1)
        for i in range(n1):
            key = tuple(trial_X[i])
            if key not in cell_map:
                raise ValidationError(
                    f"cell_map has no survey-weight value for trial row {i} "
                    f"with covariates {key}"
                )
            d[i] = float(cell_map[key])
    elif callable(cell_map):
        d = np.array([float(cell_map(trial_X[i])) for i in range(n1)])
    else:
        raise ConfigError("cell_map must be an array, a mapping or a callable")
    if not np.isfinite(d).all() or (d <= 0).any():
        raise ValidationError("cell_map survey-weight values must be positive and finite")

    values, cap = _apply_cap(gamma.values * d, cap_percentile)
    _check_arm_mass(values, dataset)
    return WeightVector(values, WeightVariant.DELTA_DIRECT, gamma.source_model, cap_percentile, cap)


def weight_summary(w: WeightVector, top_k: int = 5) -> dict:
    """Descriptive summary: min, max, coefficient of variation, ESS, heaviest units."""
    values = w.values
    mean = float(values.mean()) if values.size else 0.0
    cv = float(values.std() / mean) if mean > 0 else 0.0
    heavy = np.argsort(-values, kind="stable")[: max(0, top_k)]
    return {
        "variant": w.variant.value,
        "n": w.n,
        "min": float(values.min()) if values.size else 0.0,
        "max": float(values.max()) if values.size else 0.0,
        "cv": cv,
        "ess": w.ess,
        "capped": w.cap_value is not None,
        "top_heaviest": [(int(i), float(values[i])) for i in heavy],
    }


def export_weights_csv(w: WeightVector, dataset: CombinedDataset, path) -> None:
    """Write weights keyed by combined-dataset row index, with provenance columns."""
    trial_rows = np.flatnonzero(dataset.trial_mask)
    model = w.source_model
    model_hash = getattr(model, "dataset_digest", "") or ""
    model_kind = getattr(model, "kind", "") or ""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(
            ["row_index", "weight", "variant", "model_kind", "model_hash", "cap_percentile"]
        )
        cap = "" if w.cap_percentile is None else repr(float(w.cap_percentile))
        for idx, value in zip(trial_rows, w.values):
            out.writerow([int(idx), repr(float(value)), w.variant.value, model_kind, model_hash, cap])
