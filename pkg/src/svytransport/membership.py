"""Sample-membership models: which sample (trial vs survey) a unit landed in.

Fits P(sample = survey | X) on the combined dataset by logistic regression,
optionally weighting each survey row by its survey weight (trial rows always
have weight 1).  The weighted variant maximizes a pseudo-likelihood: weights
enter as observation multiplicities, so the score is sum_i w_i x_i (y_i - p_i)
and the fit targets the population that the survey represents rather than
the survey sample itself.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .data import CombinedDataset, Sample
from .errors import (
    ConvergenceError,
    RankDeficiencyError,
    SeparationError,
    ValidationError,
)

logger = logging.getLogger(__name__)

PROB_CLIP = 1e-6
MAX_ITER = 100
SCORE_TOL = 1e-10
# Standardized-scale coefficient magnitude past which the likelihood is flat
# and still climbing: the signature of (quasi-)complete separation.
_COEF_BOUND = 30.0
_MAX_HALVINGS = 30


def _expit(eta: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * eta))


@dataclass(frozen=True)
class LogisticMembershipModel:
    """Fitted logistic model for P(sample = survey | X).

    Coefficients are reported on the original covariate scale even though
    fitting standardizes internally.  ``score_sup_norm`` is the final
    sup-norm of the pseudo-score on the standardized design.
    """

    covariate_names: tuple[str, ...]
    intercept: float
    coef: np.ndarray
    weighted: bool
    n_iter: int
    score_sup_norm: float
    dataset_digest: Optional[str] = None
    clip: float = PROB_CLIP

    @property
    def kind(self) -> str:
        return "logistic"

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.covariate_names):
            raise ValidationError(
                f"model expects {len(self.covariate_names)} covariate columns, "
                f"got {X.shape[1]}"
            )
        return self.intercept + X @ self.coef

    def predict_prob(self, X: np.ndarray) -> np.ndarray:
        """P(survey | X), clipped to [clip, 1 - clip].

        Clipping applies only here, at prediction time; the fit itself is
        unclipped so coefficient estimates are not distorted.
        """
        return np.clip(_expit(self.linear_predictor(X)), self.clip, 1.0 - self.clip)

    def predict_odds(self, X: np.ndarray) -> np.ndarray:
        """Fitted odds P(survey|X) / P(trial|X), capped by the clip bound."""
        p = self.predict_prob(X)
        return p / (1.0 - p)

    def coefficients(self) -> dict[str, float]:
        out = {"(intercept)": float(self.intercept)}
        out.update({c: float(b) for c, b in zip(self.covariate_names, self.coef)})
        return out


def _check_rank(Z: np.ndarray, names: Sequence[str]) -> None:
    # QR with pivoting on [1 | Z]; a tiny trailing diagonal of R marks the
    # pivoted-in columns as linear combinations of the earlier ones.
    D = np.column_stack([np.ones(Z.shape[0]), Z])
    _, R, piv = scipy.linalg.qr(D, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(D.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    bad = np.flatnonzero(diag <= tol)
    if bad.size:
        labels = ["(intercept)" if piv[j] == 0 else str(names[piv[j] - 1]) for j in bad]
        raise RankDeficiencyError(
            f"design matrix is rank deficient; redundant column(s): {labels}",
            columns=tuple(labels),
        )


def _check_complete_separation(X: np.ndarray, y: np.ndarray, names: Sequence[str]) -> None:
    # A covariate whose two response groups occupy disjoint ranges separates
    # the data on its own; the MLE does not exist.
    g1, g0 = X[y == 1.0], X[y == 0.0]
    if not len(g1) or not len(g0):
        raise SeparationError("response is constant; membership model cannot be fit")
    for j, name in enumerate(names):
        if g1[:, j].min() > g0[:, j].max() or g0[:, j].min() > g1[:, j].max():
            raise SeparationError(
                f"covariate {name!r} completely separates trial from survey rows",
                covariate=str(name),
            )


def _deviance(eta: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    # -2 * weighted Bernoulli log-likelihood, computed stably from eta:
    # log(1 + e^eta) - y*eta, via logaddexp.
    return 2.0 * float(np.sum(w * (np.logaddexp(0.0, eta) - y * eta)))


def fit_logistic_arrays(
    X: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray,
    covariate_names: Sequence[str],
    *,
    weighted_flag: bool = True,
    dataset_digest: Optional[str] = None,
) -> LogisticMembershipModel:
    """Newton/IRLS fit of weighted logistic regression on raw arrays.

    Covariates are standardized internally for conditioning and the
    coefficients mapped back exactly.  Convergence requires the pseudo-score
    sup-norm (standardized design) to fall below ``SCORE_TOL`` within
    ``MAX_ITER`` iterations; a deviance increase triggers step halving.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    n, p = X.shape
    names = tuple(str(c) for c in covariate_names)
    if len(names) != p:
        raise ValidationError(f"{p} covariate columns but {len(names)} names")

    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    if np.any(sd == 0.0):
        const = [names[j] for j in np.flatnonzero(sd == 0.0)]
        raise RankDeficiencyError(
            f"constant covariate column(s) {const} are collinear with the intercept",
            columns=tuple(const),
        )
    Z = (X - mean) / sd
    _check_rank(Z, names)
    _check_complete_separation(X, y, names)

    beta = np.zeros(p + 1)  # [intercept, standardized coefs]
    D = np.column_stack([np.ones(n), Z])
    eta = D @ beta
    dev = _deviance(eta, y, w)
    sup = np.inf
    for it in range(1, MAX_ITER + 1):
        prob = _expit(eta)
        score = D.T @ (w * (y - prob))
        sup = float(np.max(np.abs(score)))
        if sup < SCORE_TOL:
            break
        wxx = w * np.clip(prob * (1.0 - prob), 1e-10, None)
        hess = D.T @ (D * wxx[:, None])
        try:
            step = np.linalg.solve(hess, score)
        except np.linalg.LinAlgError as exc:
            raise SeparationError(
                "membership fit failed: singular Hessian (fitted probabilities "
                "degenerate, consistent with quasi-complete separation)"
            ) from exc

        scale = 1.0
        for _ in range(_MAX_HALVINGS):
            cand = beta + scale * step
            cand_dev = _deviance(D @ cand, y, w)
            if cand_dev <= dev + 1e-12 * max(1.0, abs(dev)):
                break
            scale *= 0.5
        beta = cand
        eta = D @ beta
        dev = cand_dev

        if np.max(np.abs(beta[1:])) > _COEF_BOUND:
            worst = names[int(np.argmax(np.abs(beta[1:])))]
            raise SeparationError(
                f"membership fit diverged: coefficient for {worst!r} exceeds "
                f"{_COEF_BOUND} on the standardized scale, consistent with "
                "quasi-complete separation",
                covariate=worst,
            )
    else:
        raise ConvergenceError(
            f"membership fit did not converge in {MAX_ITER} iterations "
            f"(score sup-norm {sup:.3e}, tolerance {SCORE_TOL:.0e})",
            iterations=MAX_ITER,
            score_norm=sup,
        )

    coef = beta[1:] / sd
    intercept = float(beta[0] - np.sum(beta[1:] * mean / sd))
    logger.debug(
        "logistic membership fit: %d iters, score sup-norm %.3e, weighted=%s",
        it, sup, weighted_flag,
    )
    return LogisticMembershipModel(
        covariate_names=names,
        intercept=intercept,
        coef=coef,
        weighted=weighted_flag,
        n_iter=it,
        score_sup_norm=sup,
        dataset_digest=dataset_digest,
    )


def membership_design(
    dataset: CombinedDataset,
    covariates: Optional[Sequence[str]] = None,
    weighted: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, tuple[str, ...]]:
    """Design matrix, survey-membership response and observation weights."""
    names = tuple(covariates) if covariates is not None else dataset.covariate_names
    X = dataset.covariate_matrix(names)
    y = (dataset.sample == int(Sample.SURVEY)).astype(float)
    if weighted:
        w = np.where(dataset.survey_mask, dataset.survey_weight, 1.0)
    else:
        w = np.ones(dataset.n)
    return X, y, w, names


def fit_logistic(
    dataset: CombinedDataset,
    covariates: Optional[Sequence[str]] = None,
    weighted: bool = True,
) -> LogisticMembershipModel:
    """Fit P(survey | X) on a combined dataset.

    Args:
        dataset: combined trial + survey data.
        covariates: covariate subset to use; all columns when omitted.
        weighted: weight survey rows by their survey weights (the two-stage
            variant).  When False all rows count equally and the fit targets
            the survey sample itself.
    """
    X, y, w, names = membership_design(dataset, covariates, weighted)
    return fit_logistic_arrays(
        X, y, w, names, weighted_flag=weighted, dataset_digest=dataset.digest()
    )
