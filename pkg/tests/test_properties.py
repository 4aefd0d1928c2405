"""Randomized invariant checks.

Each invariant runs over a long stream of independently drawn random cases
from a single seeded generator.  The checks are module-level functions so
the acceptance suite can rerun them at full strength; the pytest wrappers
below call them directly.
"""

import math

import numpy as np

from svytransport.boosting import fit_gbm_arrays
from svytransport.data import CombinedDataset, EffectScale
from svytransport.diagnostics import DenominatorConvention, asmd
from svytransport.estimators import estimate_naive, estimate_weighted
from svytransport.membership import fit_logistic, membership_design
from svytransport.weights import WeightVariant, WeightVector

from conftest import make_dataset

N_CASES = 1000


def random_trial(rng: np.random.Generator, binary: bool) -> CombinedDataset:
    """Small random trial with >= 2 units per arm and a 2-row dummy survey."""
    n = int(rng.integers(8, 40))
    n1 = int(rng.integers(2, n - 1))
    a = np.zeros(n)
    a[:n1] = 1.0
    rng.shuffle(a)
    if binary:
        y = (rng.random(n) < 0.3 + 0.3 * a).astype(float)
        # both outcome values in both arms, so odds ratios stay finite
        for arm in (0.0, 1.0):
            idx = np.flatnonzero(a == arm)
            y[idx[0]] = 1.0
            y[idx[1]] = 0.0
    else:
        y = rng.normal(a, 1.0)
    x = rng.normal(0.0, 1.0, (n, 1))
    return CombinedDataset.from_arrays(["x"], x, a, y, np.zeros((2, 1)), np.ones(2))


def check_hajek_scale_invariance(n_cases: int = N_CASES, seed: int = 2201) -> None:
    """Rescaling all weights by a positive constant changes nothing."""
    rng = np.random.default_rng(seed)
    for _ in range(n_cases):
        binary = bool(rng.random() < 0.25)
        ds = random_trial(rng, binary)
        scale = EffectScale.ODDS_RATIO if binary else EffectScale.MEAN_DIFFERENCE
        level = float(rng.choice([0.90, 0.95, 0.99]))
        w = WeightVector(
            np.exp(rng.normal(0.0, 1.0, ds.n_trial)), WeightVariant.DELTA_TWO_STAGE
        )
        c = float(np.exp(rng.uniform(-6.0, 6.0)))
        base = estimate_weighted(ds, w, scale=scale, level=level)
        rescaled = estimate_weighted(ds, w.scaled(c), scale=scale, level=level)
        for field in ("point", "se", "ci_low", "ci_high"):
            va = getattr(base, field)
            vb = getattr(rescaled, field)
            assert math.isclose(va, vb, rel_tol=1e-12, abs_tol=1e-12), (
                f"{field}: {va!r} vs {vb!r} under c={c}"
            )


def check_unit_weight_reduction(n_cases: int = N_CASES, seed: int = 2202) -> None:
    """All-ones weights reproduce the naive point estimate exactly."""
    rng = np.random.default_rng(seed)
    for _ in range(n_cases):
        binary = bool(rng.random() < 0.25)
        ds = random_trial(rng, binary)
        scale = EffectScale.ODDS_RATIO if binary else EffectScale.MEAN_DIFFERENCE
        ones = WeightVector(np.ones(ds.n_trial), WeightVariant.GAMMA)
        weighted = estimate_weighted(ds, ones, scale=scale)
        naive = estimate_naive(ds, scale=scale)
        assert weighted.point == naive.point, (
            f"{weighted.point!r} != {naive.point!r} on {scale}"
        )
        assert weighted.arm_means == naive.arm_means


def check_irls_score_zero(n_cases: int = N_CASES, seed: int = 2203) -> None:
    """The raw weighted score vanishes at every converged logistic fit."""
    rng = np.random.default_rng(seed)
    for _ in range(n_cases):
        ds = make_dataset(
            rng,
            n_trial=int(rng.integers(15, 50)),
            n_survey=int(rng.integers(40, 120)),
            p=int(rng.integers(1, 4)),
            weight_spread=float(rng.uniform(0.2, 1.2)),
        )
        weighted = bool(rng.random() < 0.5)
        model = fit_logistic(ds, weighted=weighted)
        X, y, w, _ = membership_design(ds, weighted=weighted)
        prob = 1.0 / (1.0 + np.exp(-(model.intercept + X @ model.coef)))
        score = np.column_stack([np.ones(len(y)), X]).T @ (w * (y - prob))
        bound = 1e-8 * max(1.0, float(w.sum()))
        assert float(np.max(np.abs(score))) < bound, (
            f"score sup-norm {np.max(np.abs(score)):.3e} exceeds {bound:.3e}"
        )


def check_gbm_deviance_monotone(n_cases: int = N_CASES, seed: int = 2204) -> None:
    """Training deviance never increases from one boosting round to the next."""
    rng = np.random.default_rng(seed)
    for _ in range(n_cases):
        n = int(rng.integers(30, 70))
        p = int(rng.integers(1, 4))
        X = rng.normal(0.0, 1.0, (n, p))
        y = (rng.random(n) < 1.0 / (1.0 + np.exp(-X[:, 0]))).astype(float)
        if y.min() == y.max():
            y[0] = 1.0 - y[0]
        w = np.exp(rng.normal(0.0, 0.5, n))
        model = fit_gbm_arrays(
            X,
            y,
            w,
            [f"x{j}" for j in range(p)],
            n_trees=int(rng.integers(5, 9)),
            depth=int(rng.integers(1, 3)),
            shrinkage=float(rng.uniform(0.05, 0.6)),
            min_child_weight=float(rng.uniform(1.0, 5.0)),
        )
        dev = np.asarray(model.train_deviance)
        slack = 1e-9 * max(1.0, float(dev[0]))
        worst = float(np.max(np.diff(dev)))
        assert worst <= slack, f"deviance rose by {worst:.3e} (allowed {slack:.3e})"


def check_asmd_identity(n_cases: int = N_CASES, seed: int = 2205) -> None:
    """A sample compared with itself is exactly balanced."""
    rng = np.random.default_rng(seed)
    conventions = list(DenominatorConvention)
    for _ in range(n_cases):
        n = int(rng.integers(2, 40))
        if rng.random() < 0.2:
            x = np.full(n, float(rng.normal()))
        else:
            x = rng.normal(0.0, float(rng.uniform(0.1, 10.0)), n)
        w = np.exp(rng.normal(0.0, 1.0, n))
        conv = conventions[int(rng.integers(len(conventions)))]
        assert asmd(x, w, x, w, conv) == 0.0


def test_hajek_scale_invariance():
    check_hajek_scale_invariance()


def test_unit_weight_reduction():
    check_unit_weight_reduction()


def test_irls_score_zero():
    check_irls_score_zero()


def test_gbm_deviance_monotone():
    check_gbm_deviance_monotone()


def test_asmd_identity():
    check_asmd_identity()
