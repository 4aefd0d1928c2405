import csv
import math

import numpy as np
import pytest

from svytransport.data import CombinedDataset
from svytransport.errors import ConfigError, EstimationError, ValidationError
from svytransport.membership import fit_logistic
from svytransport.simulation import ScenarioConfig, generate_population
from svytransport.weights import (
    WeightVariant,
    WeightVector,
    delta_weights_direct,
    delta_weights_two_stage,
    export_weights_csv,
    gamma_weights,
    kish_ess,
    weight_summary,
)

from conftest import make_dataset

OLDER = slice(0, 100)
YOUNGER = slice(100, 150)


@pytest.fixture(scope="module")
def toy_models(toy_dataset):
    return (
        fit_logistic(toy_dataset, weighted=False),
        fit_logistic(toy_dataset, weighted=True),
    )


class TestToyGamma:
    def test_values(self, toy_dataset, toy_models):
        unweighted, _ = toy_models
        w = gamma_weights(unweighted, toy_dataset)
        assert w.n == 150
        np.testing.assert_allclose(w.values[OLDER], 2.0, atol=1e-10)
        np.testing.assert_allclose(w.values[YOUNGER], 6.0, atol=1e-10)
        assert w.variant == WeightVariant.GAMMA

    def test_requires_unweighted_model(self, toy_dataset, toy_models):
        _, weighted = toy_models
        with pytest.raises(ValidationError, match="unweighted"):
            gamma_weights(weighted, toy_dataset)


class TestToyDelta:
    def test_two_stage_values(self, toy_dataset, toy_models):
        _, weighted = toy_models
        w = delta_weights_two_stage(weighted, toy_dataset)
        np.testing.assert_allclose(w.values[OLDER], 5.0, atol=1e-10)
        np.testing.assert_allclose(w.values[YOUNGER], 10.0, atol=1e-10)
        assert w.variant == WeightVariant.DELTA_TWO_STAGE

    def test_two_stage_matches_direct_on_saturated_model(
        self, toy_dataset, toy_models
    ):
        unweighted, weighted = toy_models
        two_stage = delta_weights_two_stage(weighted, toy_dataset)
        gamma = gamma_weights(unweighted, toy_dataset)
        direct = delta_weights_direct(
            gamma, toy_dataset, {(0.0,): 2.5, (1.0,): 5.0 / 3.0}
        )
        np.testing.assert_allclose(direct.values, two_stage.values, atol=1e-10)

    def test_two_stage_requires_weighted_model(self, toy_dataset, toy_models):
        unweighted, _ = toy_models
        with pytest.raises(ValidationError, match="survey-weighted"):
            delta_weights_two_stage(unweighted, toy_dataset)

    def test_ess(self, toy_dataset, toy_models):
        # sum w = 100*5 + 50*10 = 1000; sum w^2 = 100*25 + 50*100 = 7500
        _, weighted = toy_models
        w = delta_weights_two_stage(weighted, toy_dataset)
        assert w.ess == pytest.approx(1_000_000.0 / 7500.0, abs=1e-7)


class TestIdentityWithTrueProbabilities:
    def test_delta_equals_inverse_trial_probability(self):
        """gamma(X) * survey_weight(X) = 1 / P(trial | X) when both factors
        come from the true selection probabilities."""
        pop = generate_population(
            ScenarioConfig(population_size=1000),
            np.random.default_rng(21),
        )
        p1, p2 = pop.p_trial, pop.p_survey
        n = 1000
        ds = CombinedDataset.from_arrays(
            ["x"], np.arange(n, dtype=float).reshape(-1, 1),
            np.tile([0.0, 1.0], n // 2), np.zeros(n),
            np.zeros((2, 1)), np.ones(2),
        )
        gamma = WeightVector(p2 / p1, WeightVariant.GAMMA)
        delta = delta_weights_direct(gamma, ds, 1.0 / p2)
        np.testing.assert_allclose(delta.values, 1.0 / p1, rtol=1e-12)

    def test_cell_map_paths_agree(self, toy_dataset, toy_models):
        unweighted, _ = toy_models
        gamma = gamma_weights(unweighted, toy_dataset)
        lookup = {(0.0,): 2.5, (1.0,): 5.0 / 3.0}
        by_map = delta_weights_direct(gamma, toy_dataset, lookup)
        by_call = delta_weights_direct(
            gamma, toy_dataset, lambda row: lookup[tuple(row)]
        )
        arr = np.where(toy_dataset.X[toy_dataset.trial_mask, 0] == 0.0, 2.5, 5.0 / 3.0)
        by_array = delta_weights_direct(gamma, toy_dataset, arr)
        np.testing.assert_array_equal(by_map.values, by_call.values)
        np.testing.assert_array_equal(by_map.values, by_array.values)

    def test_direct_requires_gamma_variant(self, toy_dataset, toy_models):
        _, weighted = toy_models
        delta = delta_weights_two_stage(weighted, toy_dataset)
        with pytest.raises(ConfigError, match="gamma"):
            delta_weights_direct(delta, toy_dataset, np.ones(150))

    def test_direct_rejects_bad_cell_values(self, toy_dataset, toy_models):
        unweighted, _ = toy_models
        gamma = gamma_weights(unweighted, toy_dataset)
        with pytest.raises(ValidationError, match="positive"):
            delta_weights_direct(gamma, toy_dataset, np.zeros(150))
        with pytest.raises(ValidationError, match="150"):
            delta_weights_direct(gamma, toy_dataset, np.ones(7))
        with pytest.raises(ValidationError, match="trial row 0"):
            delta_weights_direct(gamma, toy_dataset, {(1.0,): 2.0})

    def test_zero_weight_arm_rejected(self, toy_dataset):
        treated = toy_dataset.treatment[toy_dataset.trial_mask] == 1.0
        gamma = WeightVector(np.where(treated, 0.0, 1.0), WeightVariant.GAMMA)
        with pytest.raises(EstimationError, match="treated"):
            delta_weights_direct(gamma, toy_dataset, np.ones(150))


class TestKishEss:
    def test_equal_weights(self):
        assert kish_ess(np.full(37, 2.5)) == pytest.approx(37.0)

    def test_concentration(self):
        assert kish_ess(np.array([1000.0, 1e-9, 1e-9])) == pytest.approx(1.0, abs=1e-8)

    def test_zero_mass(self):
        assert kish_ess(np.zeros(4)) == 0.0

    def test_scale_invariant(self):
        rng = np.random.default_rng(22)
        v = rng.uniform(0.1, 5.0, size=50)
        assert kish_ess(v * 123.4) == pytest.approx(kish_ess(v), rel=1e-12)


class TestWeightVector:
    def test_values_read_only_copy(self):
        raw = np.array([1.0, 2.0])
        w = WeightVector(raw, "gamma")
        raw[0] = 99.0
        assert w.values[0] == 1.0
        with pytest.raises(ValueError):
            w.values[0] = 5.0

    def test_variant_coerced_from_string(self):
        w = WeightVector(np.ones(2), "delta_two_stage")
        assert w.variant is WeightVariant.DELTA_TWO_STAGE

    def test_rejects_bad_values(self):
        with pytest.raises(ValidationError):
            WeightVector(np.array([1.0, -0.5]), "gamma")
        with pytest.raises(ValidationError):
            WeightVector(np.array([1.0, np.inf]), "gamma")
        with pytest.raises(ValidationError):
            WeightVector(np.ones((2, 2)), "gamma")

    def test_scaled(self):
        w = WeightVector(np.array([1.0, 3.0]), "gamma")
        s = w.scaled(10.0)
        np.testing.assert_array_equal(s.values, [10.0, 30.0])
        assert s.ess == pytest.approx(w.ess, rel=1e-12)
        with pytest.raises(ConfigError):
            w.scaled(0.0)


class TestModelChecks:
    def test_digest_mismatch(self, toy_dataset):
        rng = np.random.default_rng(23)
        other = make_dataset(rng, p=1)
        model = fit_logistic(other, weighted=False)
        with pytest.raises(ValidationError, match="digest"):
            gamma_weights(model, toy_dataset)


class TestCap:
    def test_cap_applied(self):
        rng = np.random.default_rng(24)
        ds = make_dataset(rng, n_trial=80, n_survey=240, p=2, weight_spread=2.0)
        model = fit_logistic(ds, weighted=False)
        raw = gamma_weights(model, ds)
        capped = gamma_weights(model, ds, cap_percentile=90.0)
        assert capped.cap_value == pytest.approx(np.percentile(raw.values, 90.0))
        assert capped.values.max() <= capped.cap_value + 1e-15
        np.testing.assert_array_equal(
            capped.values, np.minimum(raw.values, capped.cap_value)
        )
        assert raw.cap_value is None

    def test_bad_percentile(self, toy_dataset, toy_models):
        unweighted, _ = toy_models
        with pytest.raises(ConfigError, match="percentile"):
            gamma_weights(unweighted, toy_dataset, cap_percentile=100.0)


class TestSummaryAndExport:
    def test_summary_hand_values(self):
        w = WeightVector(np.array([1.0, 2.0, 3.0, 4.0, 10.0]), "gamma")
        s = weight_summary(w, top_k=2)
        assert s["n"] == 5
        assert s["min"] == 1.0
        assert s["max"] == 10.0
        assert s["ess"] == pytest.approx(400.0 / 130.0)
        assert s["cv"] == pytest.approx(math.sqrt(10.0) / 4.0)
        assert s["capped"] is False
        assert s["top_heaviest"] == [(4, 10.0), (3, 4.0)]

    def test_export_round_trip(self, tmp_path, toy_dataset, toy_models):
        unweighted, _ = toy_models
        w = gamma_weights(unweighted, toy_dataset, cap_percentile=99.0)
        path = tmp_path / "w.csv"
        export_weights_csv(w, toy_dataset, path)
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 150
        assert [int(r["row_index"]) for r in rows] == list(range(150))
        np.testing.assert_array_equal(
            np.array([float(r["weight"]) for r in rows]), w.values
        )
        assert rows[0]["variant"] == "gamma"
        assert rows[0]["model_kind"] == "logistic"
        assert rows[0]["model_hash"] == toy_dataset.digest()
        assert float(rows[0]["cap_percentile"]) == 99.0
