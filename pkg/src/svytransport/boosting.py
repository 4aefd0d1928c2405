"""Weighted gradient boosting for the sample-membership probability.

A from-scratch boosted-trees learner for P(sample = survey | X) under
observation weights, used as the flexible alternative to the logistic
membership model.  Boosting minimizes weighted Bernoulli deviance: each
round fits a depth-bounded regression tree to the residuals y - p by exact
greedy search over every observed split point, then sets each leaf to the
Newton step  sum(w r) / sum(w p (1-p))  and shrinks it.

No row or feature subsampling is used, so a fit is a deterministic function
of its inputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .data import CombinedDataset
from .errors import SeparationError, ValidationError
from .membership import PROB_CLIP, _expit, membership_design

logger = logging.getLogger(__name__)

DEFAULT_N_TREES = 1000
DEFAULT_DEPTH = 2
DEFAULT_SHRINKAGE = 0.05
DEFAULT_MIN_CHILD_WEIGHT = 10.0
_MAX_HALVINGS = 30
_HESSIAN_FLOOR = 1e-10


@dataclass(frozen=True)
class _Tree:
    """One regression tree in implicit heap layout (children of k at 2k+1, 2k+2).

    ``feature[k] == -1`` marks a leaf; ``value`` is meaningful only at leaves.
    """

    feature: np.ndarray  # (m,) int
    threshold: np.ndarray  # (m,) float
    value: np.ndarray  # (m,) float

    def predict(self, X: np.ndarray, depth: int) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.intp)
        for _ in range(depth):
            feat = self.feature[node]
            internal = feat >= 0
            if not internal.any():
                break
            go_left = np.zeros_like(internal)
            rows = np.flatnonzero(internal)
            go_left[rows] = X[rows, feat[rows]] <= self.threshold[node[rows]]
            node = np.where(internal, np.where(go_left, 2 * node + 1, 2 * node + 2), node)
        return self.value[node]


def _best_split(
    xs: np.ndarray, rs: np.ndarray, ws: np.ndarray, min_child_weight: float
) -> Optional[tuple[float, float]]:
    """Best threshold for one pre-sorted feature: (gain, threshold), or None.

    Inputs are the node's values, residuals and weights already sorted by
    value.  Gain is the increase in sum(w r)^2 / sum(w) from splitting;
    thresholds sit midway between consecutive distinct observed values.  The
    first maximizing position wins, keeping the search deterministic under
    ties.
    """
    cw = np.cumsum(ws)
    cwr = np.cumsum(ws * rs)
    total_w, total_wr = cw[-1], cwr[-1]
    lw, lwr = cw[:-1], cwr[:-1]
    rw, rwr = total_w - lw, total_wr - lwr
    valid = (
        (xs[1:] > xs[:-1])
        & (lw >= min_child_weight)
        & (rw >= min_child_weight)
    )
    if not valid.any():
        return None
    gain = np.where(valid, lwr**2 / np.maximum(lw, 1e-300) + rwr**2 / np.maximum(rw, 1e-300), -np.inf)
    best = int(np.argmax(gain))
    parent = total_wr**2 / total_w
    return float(gain[best] - parent), float(0.5 * (xs[best] + xs[best + 1]))


def _fit_tree(
    X: np.ndarray,
    r: np.ndarray,
    hess: np.ndarray,
    w: np.ndarray,
    depth: int,
    min_child_weight: float,
    sort_order: np.ndarray,
) -> _Tree:
    """Grow one tree.  ``sort_order[j]`` holds row indices sorted by feature
    j; it is computed once per boosting fit since X never changes, and each
    node recovers its own sorted rows by masking that shared order."""
    n, p = X.shape
    m = 2 ** (depth + 1) - 1
    feature = np.full(m, -1, dtype=np.intp)
    threshold = np.zeros(m)
    value = np.zeros(m)
    root = np.ones(n, dtype=bool)
    # (node id, row membership mask, level) work list; expansion order is irrelevant.
    pending: list[tuple[int, np.ndarray, int]] = [(0, root, 0)]
    while pending:
        node, mask, level = pending.pop()
        size = int(np.count_nonzero(mask))
        if level < depth and size >= 2:
            best: Optional[tuple[float, float, int]] = None
            for j in range(p):
                order_j = sort_order[j]
                sel = order_j[mask[order_j]]
                found = _best_split(X[sel, j], r[sel], w[sel], min_child_weight)
                if found is not None and (best is None or found[0] > best[0]):
                    best = (found[0], found[1], j)
            if best is not None:
                _, thr, j = best
                feature[node] = j
                threshold[node] = thr
                left = mask & (X[:, j] <= thr)
                pending.append((2 * node + 1, left, level + 1))
                pending.append((2 * node + 2, mask & ~left, level + 1))
                continue
        num = float(np.sum(w[mask] * r[mask]))
        den = float(np.sum(w[mask] * hess[mask]))
        value[node] = num / max(den, _HESSIAN_FLOOR)
    return _Tree(feature, threshold, value)


def _deviance(F: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    return 2.0 * float(np.sum(w * (np.logaddexp(0.0, F) - y * F)))


@dataclass
class GBMMembershipModel:
    """Fitted boosted-trees model for P(sample = survey | X).

    ``n_trees_used`` defaults to all fitted trees; when an iteration scorer
    was supplied it is the scored iteration with the smallest value, and
    ``selection_scores`` records every (iteration, score) pair examined.
    """

    covariate_names: tuple[str, ...]
    init_score: float
    trees: list[_Tree]
    depth: int
    shrinkage: float
    weighted: bool
    n_trees_used: int
    dataset_digest: Optional[str] = None
    clip: float = PROB_CLIP
    selection_scores: Optional[list[tuple[int, float]]] = None
    train_deviance: list[float] = field(default_factory=list)

    @property
    def kind(self) -> str:
        return "gbm"

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def linear_predictor(self, X: np.ndarray, n_trees: Optional[int] = None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.covariate_names):
            raise ValidationError(
                f"model expects {len(self.covariate_names)} covariate columns, "
                f"got {X.shape[1]}"
            )
        use = self.n_trees_used if n_trees is None else min(n_trees, len(self.trees))
        F = np.full(X.shape[0], self.init_score)
        for tree in self.trees[:use]:
            F += self.shrinkage * tree.predict(X, self.depth)
        return F

    def predict_prob(self, X: np.ndarray, n_trees: Optional[int] = None) -> np.ndarray:
        """P(survey | X), clipped to [clip, 1 - clip]; clipping only here."""
        return np.clip(
            _expit(self.linear_predictor(X, n_trees)), self.clip, 1.0 - self.clip
        )

    def predict_odds(self, X: np.ndarray) -> np.ndarray:
        p = self.predict_prob(X)
        return p / (1.0 - p)


def fit_gbm_arrays(
    X: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray,
    covariate_names: Sequence[str],
    *,
    n_trees: int = DEFAULT_N_TREES,
    depth: int = DEFAULT_DEPTH,
    shrinkage: float = DEFAULT_SHRINKAGE,
    min_child_weight: float = DEFAULT_MIN_CHILD_WEIGHT,
    iteration_scorer: Optional[Callable[[np.ndarray], float]] = None,
    scorer_stride: int = 10,
    weighted_flag: bool = True,
    dataset_digest: Optional[str] = None,
) -> GBMMembershipModel:
    """Boost on raw arrays.

    Training deviance is guaranteed non-increasing: a round whose shrunken
    tree would raise it has its contribution halved until it does not, and
    boosting stops early if even a vanishing step cannot help.

    ``iteration_scorer``, when given, is called every ``scorer_stride`` rounds
    with the in-sample probabilities; the scored round with the smallest value
    becomes ``n_trees_used``.  min_child_weight is in units of total
    observation weight, not row counts.
    """
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    names = tuple(str(c) for c in covariate_names)
    if X.shape[1] != len(names):
        raise ValidationError(f"{X.shape[1]} covariate columns but {len(names)} names")
    if n_trees < 1 or depth < 1 or not (0.0 < shrinkage <= 1.0):
        raise ValidationError("need n_trees >= 1, depth >= 1 and 0 < shrinkage <= 1")

    ybar = float(np.sum(w * y) / np.sum(w))
    if not 0.0 < ybar < 1.0:
        raise SeparationError("response is constant; membership model cannot be fit")
    init = float(np.log(ybar / (1.0 - ybar)))

    F = np.full(X.shape[0], init)
    dev = _deviance(F, y, w)
    trees: list[_Tree] = []
    deviances = [dev]
    scores: list[tuple[int, float]] = []
    sort_order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)

    for t in range(1, n_trees + 1):
        prob = _expit(F)
        resid = y - prob
        hess = prob * (1.0 - prob)
        tree = _fit_tree(X, resid, hess, w, depth, min_child_weight, sort_order)

        contrib = shrinkage * tree.predict(X, depth)
        scale = 1.0
        for _ in range(_MAX_HALVINGS):
            cand_dev = _deviance(F + scale * contrib, y, w)
            if cand_dev <= dev + 1e-12 * max(1.0, abs(dev)):
                break
            scale *= 0.5
        else:
            logger.debug("boosting stopped early at round %d: no descent step", t)
            break
        if scale != 1.0:
            tree = _Tree(tree.feature, tree.threshold, tree.value * scale)
            contrib = scale * contrib
        F += contrib
        dev = cand_dev
        trees.append(tree)
        deviances.append(dev)
        if iteration_scorer is not None and (t % scorer_stride == 0 or t == n_trees):
            scores.append((len(trees), float(iteration_scorer(_expit(F)))))

    n_used = len(trees)
    selection = None
    if iteration_scorer is not None and scores:
        selection = scores
        n_used = min(scores, key=lambda pair: pair[1])[0]
        logger.debug("iteration selection: using %d of %d trees", n_used, len(trees))

    return GBMMembershipModel(
        covariate_names=names,
        init_score=init,
        trees=trees,
        depth=depth,
        shrinkage=shrinkage,
        weighted=weighted_flag,
        n_trees_used=n_used,
        dataset_digest=dataset_digest,
        selection_scores=selection,
        train_deviance=deviances,
    )


def fit_gbm(
    dataset: CombinedDataset,
    covariates: Optional[Sequence[str]] = None,
    weighted: bool = True,
    **kwargs,
) -> GBMMembershipModel:
    """Fit the boosted membership model P(survey | X) on a combined dataset.

    Keyword arguments are those of :func:`fit_gbm_arrays` (tree count, depth,
    shrinkage, minimum child weight, iteration scorer).
    """
    X, y, w, names = membership_design(dataset, covariates, weighted)
    return fit_gbm_arrays(
        X, y, w, names, weighted_flag=weighted, dataset_digest=dataset.digest(), **kwargs
    )
