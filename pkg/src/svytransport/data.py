"""Unit-level data model: ingestion and validation of combined trial + survey data.

The combined dataset concatenates a randomized trial sample (membership
indicator 1) with a complex-survey sample (indicator 2) drawn from the same
target population.  Trial rows carry a binary treatment and an outcome;
survey rows carry a positive survey weight (the inverse probability of
survey selection) and may be missing treatment and outcome entirely.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, SchemaError, ValidationError


class Sample(IntEnum):
    """Sample membership indicator: 1 = trial, 2 = survey.

    Members of the target population outside both samples are never observed
    and are therefore never represented as rows.
    """

    TRIAL = 1
    SURVEY = 2


class EffectScale(str, Enum):
    MEAN_DIFFERENCE = "mean_difference"
    ODDS_RATIO = "odds_ratio"


class EstimatorKind(str, Enum):
    NAIVE = "naive"
    TRANSPORT = "transport"
    SURVEY_WEIGHTED = "survey_weighted"


class Learner(str, Enum):
    LOGISTIC = "logistic"
    GBM = "gbm"


@dataclass(frozen=True)
class UnitRecord:
    """One row of the combined dataset.

    Attributes:
        sample: membership indicator (trial or survey).
        covariates: real-valued feature vector; categorical features are
            pre-encoded as indicators.
        treatment: binary treatment, present iff the row is a trial row.
        outcome: outcome value, present iff the row is a trial row.
        survey_weight: positive weight, present iff the row is a survey row.
            Trial rows are treated as weight 1 wherever an observation
            weight is needed.
    """

    sample: Sample
    covariates: np.ndarray
    treatment: Optional[int] = None
    outcome: Optional[float] = None
    survey_weight: Optional[float] = None


class CombinedDataset:
    """Concatenated trial + survey data, column-major and immutable.

    Rows are stored as flat arrays rather than per-row objects so that model
    fitting and resampling stay cheap; the ``records`` property materializes
    ``UnitRecord`` views on demand.  Arrays are frozen after construction and
    the dataset is safe to share across threads read-only.
    """

    def __init__(
        self,
        covariate_names: Sequence[str],
        X: np.ndarray,
        sample: np.ndarray,
        treatment: np.ndarray,
        outcome: np.ndarray,
        survey_weight: np.ndarray,
    ):
        self.covariate_names = tuple(str(c) for c in covariate_names)
        X = np.ascontiguousarray(np.asarray(X, dtype=float))
        sample = np.asarray(sample, dtype=np.int8)
        treatment = np.asarray(treatment, dtype=float)
        outcome = np.asarray(outcome, dtype=float)
        survey_weight = np.asarray(survey_weight, dtype=float)

        n = X.shape[0] if X.ndim == 2 else 0
        if X.ndim != 2 or X.shape[1] != len(self.covariate_names):
            raise ValidationError(
                f"covariate matrix must be 2-D with {len(self.covariate_names)} "
                f"columns, got shape {X.shape}"
            )
        for name, arr in (
            ("sample", sample),
            ("treatment", treatment),
            ("outcome", outcome),
            ("survey_weight", survey_weight),
        ):
            if arr.shape != (n,):
                raise ValidationError(f"{name} must have shape ({n},), got {arr.shape}")
        if not np.all(np.isin(sample, (int(Sample.TRIAL), int(Sample.SURVEY)))):
            raise ValidationError("sample indicator entries must be 1 (trial) or 2 (survey)")

        self.X = X
        self.sample = sample
        self.treatment = treatment
        self.outcome = outcome
        self.survey_weight = survey_weight
        for arr in (self.X, self.sample, self.treatment, self.outcome, self.survey_weight):
            arr.flags.writeable = False
        self._digest: Optional[str] = None

    # ------------------------------------------------------------------ #
    # construction helpers
    # ------------------------------------------------------------------ #

    @classmethod
    def from_arrays(
        cls,
        covariate_names: Sequence[str],
        X_trial: np.ndarray,
        treatment: np.ndarray,
        outcome: np.ndarray,
        X_survey: np.ndarray,
        survey_weight: np.ndarray,
    ) -> "CombinedDataset":
        """Build a dataset with trial rows first, then survey rows.

        Trial rows get an internal observation weight of 1; survey rows get
        missing treatment/outcome.
        """
        X_trial = np.atleast_2d(np.asarray(X_trial, dtype=float))
        X_survey = np.atleast_2d(np.asarray(X_survey, dtype=float))
        n1, n2 = X_trial.shape[0], X_survey.shape[0]
        X = np.vstack([X_trial, X_survey]) if n2 else X_trial.copy()
        sample = np.concatenate(
            [np.full(n1, int(Sample.TRIAL)), np.full(n2, int(Sample.SURVEY))]
        )
        a = np.concatenate([np.asarray(treatment, dtype=float), np.full(n2, np.nan)])
        y = np.concatenate([np.asarray(outcome, dtype=float), np.full(n2, np.nan)])
        d = np.concatenate([np.ones(n1), np.asarray(survey_weight, dtype=float)])
        return cls(covariate_names, X, sample, a, y, d)

    @classmethod
    def from_records(
        cls, records: Iterable[UnitRecord], covariate_names: Sequence[str]
    ) -> "CombinedDataset":
        records = list(records)
        X = np.array([np.asarray(r.covariates, dtype=float) for r in records])
        sample = np.array([int(r.sample) for r in records])
        a = np.array(
            [np.nan if r.treatment is None else float(r.treatment) for r in records]
        )
        y = np.array([np.nan if r.outcome is None else float(r.outcome) for r in records])
        d = np.array(
            [1.0 if r.survey_weight is None else float(r.survey_weight) for r in records]
        )
        return cls(covariate_names, X, sample, a, y, d)

    # ------------------------------------------------------------------ #
    # views
    # ------------------------------------------------------------------ #

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def trial_mask(self) -> np.ndarray:
        return self.sample == int(Sample.TRIAL)

    @property
    def survey_mask(self) -> np.ndarray:
        return self.sample == int(Sample.SURVEY)

    @property
    def n_trial(self) -> int:
        return int(np.count_nonzero(self.trial_mask))

    @property
    def n_survey(self) -> int:
        return int(np.count_nonzero(self.survey_mask))

    @property
    def population_size_estimate(self) -> float:
        """Sum of survey weights; recomputed on every access, never cached."""
        return float(np.sum(self.survey_weight[self.survey_mask]))

    @property
    def records(self) -> list[UnitRecord]:
        out = []
        trial = int(Sample.TRIAL)
        for i in range(self.n):
            if self.sample[i] == trial:
                out.append(
                    UnitRecord(
                        sample=Sample.TRIAL,
                        covariates=self.X[i],
                        treatment=None
                        if np.isnan(self.treatment[i])
                        else int(self.treatment[i]),
                        outcome=None if np.isnan(self.outcome[i]) else float(self.outcome[i]),
                    )
                )
            else:
                out.append(
                    UnitRecord(
                        sample=Sample.SURVEY,
                        covariates=self.X[i],
                        survey_weight=float(self.survey_weight[i]),
                    )
                )
        return out

    def column_indices(self, names: Sequence[str]) -> np.ndarray:
        lookup = {c: j for j, c in enumerate(self.covariate_names)}
        missing = [c for c in names if c not in lookup]
        if missing:
            raise ConfigError(f"unknown covariate(s): {missing}")
        return np.array([lookup[c] for c in names], dtype=int)

    def covariate_matrix(self, names: Optional[Sequence[str]] = None) -> np.ndarray:
        if names is None:
            return self.X
        return self.X[:, self.column_indices(names)]

    def digest(self) -> str:
        """Content fingerprint used to tie fitted models back to their data."""
        if self._digest is None:
            h = hashlib.blake2b(digest_size=16)
            h.update(",".join(self.covariate_names).encode())
            for arr in (self.X, self.sample, self.treatment, self.outcome, self.survey_weight):
                h.update(np.ascontiguousarray(arr).tobytes())
            self._digest = h.hexdigest()
        return self._digest


@dataclass(frozen=True)
class EstimandSpec:
    """What to estimate and how: effect scale, estimator, learner, covariates."""

    effect_scale: EffectScale = EffectScale.MEAN_DIFFERENCE
    estimator: EstimatorKind = EstimatorKind.SURVEY_WEIGHTED
    membership_learner: Learner = Learner.LOGISTIC
    covariate_subset: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "effect_scale", EffectScale(self.effect_scale))
        object.__setattr__(self, "estimator", EstimatorKind(self.estimator))
        object.__setattr__(self, "membership_learner", Learner(self.membership_learner))
        object.__setattr__(self, "covariate_subset", tuple(self.covariate_subset))

    def validate_against(self, dataset: CombinedDataset) -> None:
        unknown = [c for c in self.covariate_subset if c not in dataset.covariate_names]
        if unknown:
            raise ConfigError(f"covariate subset names not in dataset: {unknown}")
        if self.estimator != EstimatorKind.NAIVE and not self.covariate_subset:
            raise ConfigError(
                f"estimator {self.estimator.value!r} requires a nonempty covariate subset"
            )


# ---------------------------------------------------------------------- #
# CSV ingestion
# ---------------------------------------------------------------------- #

ROLE_COVARIATE = "covariate"
ROLE_TREATMENT = "treatment"
ROLE_OUTCOME = "outcome"
ROLE_SURVEY_WEIGHT = "survey_weight"
_KNOWN_ROLES = (ROLE_COVARIATE, ROLE_TREATMENT, ROLE_OUTCOME, ROLE_SURVEY_WEIGHT)


@dataclass(frozen=True)
class ColumnSchema:
    """Column-role mapping shared by the trial and survey CSV files.

    The trial file must contain the covariate, treatment and outcome columns;
    the survey file must contain the covariate columns plus the survey-weight
    column when one is mapped.  A schema without a survey-weight column loads
    the survey with unit weights (self-weighting).  Extra columns in either
    file are ignored.
    """

    covariates: tuple[str, ...]
    treatment: str
    outcome: str
    survey_weight: Optional[str]

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "ColumnSchema":
        """Build from a ``{column name: role}`` mapping."""
        covs: list[str] = []
        singles: dict[str, str] = {}
        for col, role in mapping.items():
            if role not in _KNOWN_ROLES:
                raise SchemaError(
                    f"unknown role {role!r} for column {col!r}; "
                    f"expected one of {_KNOWN_ROLES}"
                )
            if role == ROLE_COVARIATE:
                covs.append(col)
            else:
                if role in singles:
                    raise SchemaError(f"role {role!r} assigned to multiple columns")
                singles[role] = col
        missing = [r for r in (ROLE_TREATMENT, ROLE_OUTCOME) if r not in singles]
        if missing:
            raise SchemaError(f"schema missing role(s): {missing}")
        if not covs:
            raise SchemaError("schema names no covariate columns")
        return cls(
            covariates=tuple(covs),
            treatment=singles[ROLE_TREATMENT],
            outcome=singles[ROLE_OUTCOME],
            survey_weight=singles.get(ROLE_SURVEY_WEIGHT),
        )

    @classmethod
    def from_json(cls, path) -> "ColumnSchema":
        try:
            with open(path) as fh:
                mapping = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaError(f"cannot read schema file {path}: {exc}") from exc
        if not isinstance(mapping, dict):
            raise SchemaError(f"schema file {path} must hold a column->role object")
        return cls.from_mapping(mapping)


def _read_table(path, delimiter: str) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, delimiter=delimiter, float_precision="round_trip")
    except FileNotFoundError:
        raise SchemaError(f"input file not found: {path}")
    except pd.errors.EmptyDataError:
        raise ValidationError(f"input file {path} is empty (no header row)")
    return frame


def _require_columns(frame: pd.DataFrame, columns: Sequence[str], path) -> None:
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: missing required column(s) {missing}")


def _is_categorical(series: pd.Series) -> bool:
    return not pd.api.types.is_numeric_dtype(series)


def _encode_covariates(
    trial: pd.DataFrame, survey: pd.DataFrame, covariates: Sequence[str]
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """One-hot encode categorical covariates across both files at once.

    Levels are ordered lexicographically and the first level is dropped, so
    coefficients are reproducible run to run regardless of row order.
    """
    trial_cols: list[np.ndarray] = []
    survey_cols: list[np.ndarray] = []
    names: list[str] = []
    for col in covariates:
        t, s = trial[col], survey[col]
        if _is_categorical(t) or _is_categorical(s):
            levels = sorted(set(t.dropna().astype(str)) | set(s.dropna().astype(str)))
            for level in levels[1:]:
                trial_cols.append((t.astype(str) == level).to_numpy(dtype=float))
                survey_cols.append((s.astype(str) == level).to_numpy(dtype=float))
                names.append(f"{col}_{level}")
            if t.isna().any() or s.isna().any():
                raise ValidationError(f"covariate {col!r} has missing values")
        else:
            trial_cols.append(t.to_numpy(dtype=float))
            survey_cols.append(s.to_numpy(dtype=float))
            names.append(col)
    X_trial = np.column_stack(trial_cols) if trial_cols else np.empty((len(trial), 0))
    X_survey = np.column_stack(survey_cols) if survey_cols else np.empty((len(survey), 0))
    return X_trial, X_survey, names


def load_csv(
    trial_path,
    survey_path,
    schema: ColumnSchema | Mapping[str, str],
    delimiter: str = ",",
) -> CombinedDataset:
    """Load and validate a combined dataset from trial and survey CSV files.

    Raises SchemaError for missing columns, ValidationError for bad values
    (non-positive weights, non-binary treatment, missing covariates), always
    citing the offending row where there is one.
    """
    if not isinstance(schema, ColumnSchema):
        schema = ColumnSchema.from_mapping(schema)

    trial = _read_table(trial_path, delimiter)
    survey = _read_table(survey_path, delimiter)
    _require_columns(trial, [*schema.covariates, schema.treatment, schema.outcome], trial_path)
    survey_required = list(schema.covariates)
    if schema.survey_weight is not None:
        survey_required.append(schema.survey_weight)
    _require_columns(survey, survey_required, survey_path)

    X_trial, X_survey, names = _encode_covariates(trial, survey, schema.covariates)
    for label, X in (("trial", X_trial), ("survey", X_survey)):
        bad = np.flatnonzero(~np.isfinite(X).all(axis=1))
        if bad.size:
            raise ValidationError(
                f"{label} file: missing or non-finite covariate value(s) at row "
                f"{int(bad[0])}" + (f" (+{bad.size - 1} more)" if bad.size > 1 else "")
            )

    a = trial[schema.treatment].to_numpy()
    if not np.isin(a, (0, 1)).all():
        bad = np.flatnonzero(~np.isin(a, (0, 1)))
        raise ValidationError(
            f"trial file: treatment must be binary 0/1; row {int(bad[0])} has "
            f"value {a[bad[0]]!r}"
        )
    y = trial[schema.outcome].to_numpy(dtype=float)
    bad = np.flatnonzero(~np.isfinite(y))
    if bad.size:
        raise ValidationError(f"trial file: missing or non-finite outcome at row {int(bad[0])}")

    if schema.survey_weight is None:
        d = np.ones(len(survey))
    else:
        d = survey[schema.survey_weight].to_numpy(dtype=float)
        bad = np.flatnonzero(~(np.isfinite(d) & (d > 0)))
        if bad.size:
            raise ValidationError(
                f"survey file: survey weight must be positive and finite; row "
                f"{int(bad[0])} has value {d[bad[0]]!r}"
            )

    dataset = CombinedDataset.from_arrays(
        names, X_trial, a.astype(float), y, X_survey, d
    )
    report = validate(dataset)
    if not report.passed:
        raise ValidationError(
            "combined dataset failed validation: "
            + "; ".join(c.detail or c.name for c in report.failures)
        )
    return dataset


def dataset_to_csv(
    dataset: CombinedDataset,
    trial_path,
    survey_path,
    schema: Optional[ColumnSchema] = None,
    delimiter: str = ",",
) -> ColumnSchema:
    """Write a dataset back to a pair of CSV files.

    Floats are written with full round-trip precision, so reloading with the
    returned schema reproduces the covariate matrix and weights bit for bit.
    """
    if schema is None:
        schema = ColumnSchema(
            covariates=dataset.covariate_names,
            treatment="treatment",
            outcome="outcome",
            survey_weight="survey_weight",
        )
    tm, sm = dataset.trial_mask, dataset.survey_mask
    trial = pd.DataFrame(dataset.X[tm], columns=schema.covariates)
    trial[schema.treatment] = dataset.treatment[tm].astype(int)
    trial[schema.outcome] = dataset.outcome[tm]
    survey = pd.DataFrame(dataset.X[sm], columns=schema.covariates)
    weight_col = schema.survey_weight or "survey_weight"
    survey[weight_col] = dataset.survey_weight[sm]
    fmt = lambda v: repr(float(v))  # shortest round-trip decimal
    trial.to_csv(trial_path, index=False, sep=delimiter, float_format=fmt)
    survey.to_csv(survey_path, index=False, sep=delimiter, float_format=fmt)
    return ColumnSchema(
        covariates=schema.covariates,
        treatment=schema.treatment,
        outcome=schema.outcome,
        survey_weight=weight_col,
    )


# ---------------------------------------------------------------------- #
# validation report
# ---------------------------------------------------------------------- #

@dataclass
class Check:
    name: str
    status: str  # "pass" | "fail" | "warning"
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if c.status == "fail"]

    @property
    def warnings(self) -> list[Check]:
        return [c for c in self.checks if c.status == "warning"]

    def to_json(self, path=None) -> str:
        payload = json.dumps(
            {
                "passed": self.passed,
                "checks": [
                    {"name": c.name, "status": c.status, "detail": c.detail}
                    for c in self.checks
                ],
            },
            indent=2,
        )
        if path is not None:
            with open(path, "w") as fh:
                fh.write(payload + "\n")
        return payload

    def __str__(self) -> str:
        return "\n".join(f"[{c.status:7s}] {c.name}: {c.detail or 'ok'}" for c in self.checks)


def validate(dataset: CombinedDataset) -> ValidationReport:
    """Report-only check of every dataset invariant.

    Flags, per covariate, constancy within either sample: a covariate that is
    constant in one sample but varies in the other perfectly predicts
    membership on part of its range, which makes the logistic membership fit
    diverge (quasi-complete separation).
    """
    checks: list[Check] = []
    tm, sm = dataset.trial_mask, dataset.survey_mask
    n1, n2 = dataset.n_trial, dataset.n_survey

    checks.append(
        Check("trial_size", "pass" if n1 >= 2 else "fail", f"n_trial = {n1} (need >= 2)")
    )
    a = dataset.treatment[tm]
    n_treated = int(np.nansum(a == 1))
    n_control = int(np.nansum(a == 0))
    if n_treated >= 1 and n_control >= 1:
        checks.append(Check("trial_arms", "pass", f"{n_treated} treated, {n_control} control"))
    elif n_control == 0:
        checks.append(Check("trial_arms", "fail", "no control units"))
    else:
        checks.append(Check("trial_arms", "fail", "no treated units"))
    checks.append(
        Check("survey_size", "pass" if n2 >= 1 else "fail", f"n_survey = {n2} (need >= 1)")
    )

    binary = np.isin(a[~np.isnan(a)], (0, 1)).all() and not np.isnan(a).any()
    checks.append(
        Check(
            "treatment_binary",
            "pass" if binary else "fail",
            "trial treatment present and binary" if binary else "trial treatment missing or non-binary",
        )
    )
    y = dataset.outcome[tm]
    y_ok = bool(np.isfinite(y).all()) if y.size else False
    checks.append(
        Check(
            "outcome_present",
            "pass" if y_ok else "fail",
            "trial outcomes present" if y_ok else "missing or non-finite trial outcome",
        )
    )

    d = dataset.survey_weight[sm]
    d_ok = bool((np.isfinite(d) & (d > 0)).all()) if d.size else True
    checks.append(
        Check(
            "survey_weights_positive",
            "pass" if d_ok else "fail",
            "all survey weights positive and finite" if d_ok else "non-positive or non-finite survey weight",
        )
    )

    finite = bool(np.isfinite(dataset.X).all())
    checks.append(
        Check(
            "covariates_finite",
            "pass" if finite else "fail",
            "covariate matrix finite" if finite else "non-finite covariate values",
        )
    )

    hazards = []
    for j, name in enumerate(dataset.covariate_names):
        const_trial = n1 > 0 and np.ptp(dataset.X[tm, j]) == 0
        const_survey = n2 > 0 and np.ptp(dataset.X[sm, j]) == 0
        if const_trial or const_survey:
            where = "both samples" if (const_trial and const_survey) else (
                "trial" if const_trial else "survey"
            )
            hazards.append(f"{name} (constant in {where})")
    if hazards:
        checks.append(
            Check(
                "separation_hazard",
                "warning",
                "membership model separation hazard: " + ", ".join(hazards),
            )
        )
    else:
        checks.append(Check("separation_hazard", "pass", "no covariate constant within a sample"))

    return ValidationReport(checks)
