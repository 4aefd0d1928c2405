import json

import numpy as np
import pytest

from svytransport.data import (
    ColumnSchema,
    CombinedDataset,
    EstimandSpec,
    EstimatorKind,
    Sample,
    UnitRecord,
    dataset_to_csv,
    load_csv,
    validate,
)
from svytransport.datasets import toy_paths
from svytransport.errors import ConfigError, SchemaError, ValidationError

from conftest import make_dataset


def write_pair(tmp_path, trial_rows, survey_rows, trial_header, survey_header):
    trial = tmp_path / "trial.csv"
    survey = tmp_path / "survey.csv"
    trial.write_text("\n".join([trial_header] + trial_rows) + "\n")
    survey.write_text("\n".join([survey_header] + survey_rows) + "\n")
    return trial, survey


SCHEMA = {
    "x": "covariate",
    "treatment": "treatment",
    "outcome": "outcome",
    "survey_weight": "survey_weight",
}


class TestSchema:
    def test_from_mapping_roles(self):
        schema = ColumnSchema.from_mapping(SCHEMA)
        assert schema.covariates == ("x",)
        assert schema.treatment == "treatment"
        assert schema.survey_weight == "survey_weight"

    def test_missing_weight_role_is_allowed(self):
        schema = ColumnSchema.from_mapping(
            {"x": "covariate", "treatment": "treatment", "outcome": "outcome"}
        )
        assert schema.survey_weight is None

    def test_unknown_role_rejected(self):
        with pytest.raises(SchemaError, match="unknown role"):
            ColumnSchema.from_mapping({"x": "feature"})

    def test_missing_required_roles_rejected(self):
        with pytest.raises(SchemaError, match="missing role"):
            ColumnSchema.from_mapping({"x": "covariate", "outcome": "outcome"})

    def test_duplicate_single_role_rejected(self):
        with pytest.raises(SchemaError, match="multiple columns"):
            ColumnSchema.from_mapping(
                {"x": "covariate", "a": "treatment", "b": "treatment",
                 "outcome": "outcome"}
            )

    def test_no_covariates_rejected(self):
        with pytest.raises(SchemaError, match="no covariate"):
            ColumnSchema.from_mapping(
                {"a": "treatment", "y": "outcome", "w": "survey_weight"}
            )

    def test_from_json(self, tmp_path):
        path = tmp_path / "schema.json"
        path.write_text(json.dumps(SCHEMA))
        assert ColumnSchema.from_json(path) == ColumnSchema.from_mapping(SCHEMA)

    def test_from_json_bad_payload(self, tmp_path):
        path = tmp_path / "schema.json"
        path.write_text("[1, 2]")
        with pytest.raises(SchemaError, match="column->role"):
            ColumnSchema.from_json(path)


class TestLoadCsv:
    def test_toy_loads(self, toy_dataset):
        assert toy_dataset.n_trial == 150
        assert toy_dataset.n_survey == 500
        assert toy_dataset.covariate_names == ("age_group_younger",)
        assert toy_dataset.population_size_estimate == pytest.approx(1000.0, abs=1e-12)

    def test_missing_column(self, tmp_path):
        trial, survey = write_pair(
            tmp_path, ["1,1,2.0"], ["1,2.5"], "x,treatment,outcome", "x,survey_weight"
        )
        schema = dict(SCHEMA)
        schema["extra"] = "covariate"
        with pytest.raises(SchemaError, match="extra"):
            load_csv(trial, survey, schema)

    def test_nonbinary_treatment(self, tmp_path):
        trial, survey = write_pair(
            tmp_path,
            ["1,2,2.0", "1,0,1.0"],
            ["1,2.5", "0,2.5"],
            "x,treatment,outcome",
            "x,survey_weight",
        )
        with pytest.raises(ValidationError, match="binary 0/1; row 0"):
            load_csv(trial, survey, SCHEMA)

    def test_nonpositive_weight_cites_row(self, tmp_path):
        trial, survey = write_pair(
            tmp_path,
            ["1,1,2.0", "0,0,1.0"],
            ["1,2.5", "0,-1.0"],
            "x,treatment,outcome",
            "x,survey_weight",
        )
        with pytest.raises(ValidationError, match="row 1"):
            load_csv(trial, survey, SCHEMA)

    def test_missing_covariate_value(self, tmp_path):
        trial, survey = write_pair(
            tmp_path,
            ["1,1,2.0", ",0,1.0"],
            ["1,2.5"],
            "x,treatment,outcome",
            "x,survey_weight",
        )
        with pytest.raises(ValidationError, match="trial file.*row 1"):
            load_csv(trial, survey, SCHEMA)

    def test_missing_outcome(self, tmp_path):
        trial, survey = write_pair(
            tmp_path,
            ["1,1,", "0,0,1.0"],
            ["1,2.5"],
            "x,treatment,outcome",
            "x,survey_weight",
        )
        with pytest.raises(ValidationError, match="outcome at row 0"):
            load_csv(trial, survey, SCHEMA)

    def test_headerless_empty_file(self, tmp_path):
        trial = tmp_path / "trial.csv"
        trial.write_text("")
        survey = tmp_path / "survey.csv"
        survey.write_text("x,survey_weight\n1,2.5\n")
        with pytest.raises(ValidationError, match="empty"):
            load_csv(trial, survey, SCHEMA)

    def test_header_only_survey_fails_validation(self, tmp_path):
        trial, survey = write_pair(
            tmp_path,
            ["1,1,2.0", "0,0,1.0"],
            [],
            "x,treatment,outcome",
            "x,survey_weight",
        )
        with pytest.raises(ValidationError, match="n_survey"):
            load_csv(trial, survey, SCHEMA)

    def test_file_not_found(self, tmp_path):
        with pytest.raises(SchemaError, match="not found"):
            load_csv(tmp_path / "nope.csv", tmp_path / "nope2.csv", SCHEMA)

    def test_one_hot_is_deterministic_and_lexicographic(self, tmp_path):
        # levels seen in different orders across files still encode identically
        trial, survey = write_pair(
            tmp_path,
            ["c,1,2.0", "a,0,1.0", "b,1,0.5", "a,0,0.0"],
            ["b,2.5", "a,1.5", "c,3.0"],
            "g,treatment,outcome",
            "g,survey_weight",
        )
        schema = {"g": "covariate", "treatment": "treatment",
                  "outcome": "outcome", "survey_weight": "survey_weight"}
        ds = load_csv(trial, survey, schema)
        assert ds.covariate_names == ("g_b", "g_c")
        np.testing.assert_array_equal(ds.X[0], [0.0, 1.0])
        np.testing.assert_array_equal(ds.X[1], [0.0, 0.0])
        np.testing.assert_array_equal(ds.X[4], [1.0, 0.0])

    def test_schema_without_weight_gives_unit_weights(self, tmp_path):
        trial, survey = write_pair(
            tmp_path,
            ["1,1,2.0", "0,0,1.0"],
            ["1", "0"],
            "x,treatment,outcome",
            "x",
        )
        schema = {"x": "covariate", "treatment": "treatment", "outcome": "outcome"}
        ds = load_csv(trial, survey, schema)
        np.testing.assert_array_equal(ds.survey_weight[ds.survey_mask], [1.0, 1.0])


class TestRoundTrip:
    def test_export_reload_bit_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        ds = make_dataset(rng, n_trial=25, n_survey=60, p=3)
        schema = dataset_to_csv(ds, tmp_path / "t.csv", tmp_path / "s.csv")
        back = load_csv(tmp_path / "t.csv", tmp_path / "s.csv", schema)
        np.testing.assert_array_equal(back.X, ds.X)
        np.testing.assert_array_equal(back.survey_weight, ds.survey_weight)
        np.testing.assert_array_equal(back.treatment[back.trial_mask],
                                      ds.treatment[ds.trial_mask])
        assert back.digest() == ds.digest()


class TestCombinedDataset:
    def test_arrays_are_read_only(self, toy_dataset):
        with pytest.raises(ValueError):
            toy_dataset.X[0, 0] = 99.0

    def test_records_views(self, toy_dataset):
        records = toy_dataset.records
        assert len(records) == 650
        first, last = records[0], records[-1]
        assert first.sample == Sample.TRIAL
        assert first.treatment == 1 and first.outcome == 2.0
        assert first.survey_weight is None
        assert last.sample == Sample.SURVEY
        assert last.survey_weight == pytest.approx(5.0 / 3.0)
        assert last.treatment is None

    def test_from_records_round_trip(self, toy_dataset):
        rebuilt = CombinedDataset.from_records(
            toy_dataset.records, toy_dataset.covariate_names
        )
        assert rebuilt.digest() == toy_dataset.digest()

    def test_digest_distinguishes_data(self, toy_dataset):
        rng = np.random.default_rng(0)
        other = make_dataset(rng)
        assert toy_dataset.digest() != other.digest()

    def test_bad_sample_codes_rejected(self):
        with pytest.raises(ValidationError, match="1 .trial. or 2"):
            CombinedDataset(
                ["x"], np.zeros((2, 1)), np.array([1, 3]),
                np.array([1.0, np.nan]), np.array([0.0, np.nan]),
                np.array([1.0, 2.0]),
            )

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValidationError, match="shape"):
            CombinedDataset(
                ["x"], np.zeros((2, 1)), np.array([1, 2]),
                np.array([1.0]), np.array([0.0, np.nan]), np.array([1.0, 2.0]),
            )

    def test_column_indices_unknown_name(self, toy_dataset):
        with pytest.raises(ConfigError, match="unknown covariate"):
            toy_dataset.column_indices(["nope"])

    def test_population_size_recomputed(self):
        ds = CombinedDataset.from_arrays(
            ["x"], np.zeros((2, 1)), np.array([1.0, 0.0]), np.array([1.0, 0.0]),
            np.ones((3, 1)), np.array([2.0, 3.0, 5.0]),
        )
        assert ds.population_size_estimate == 10.0


class TestValidate:
    def test_toy_passes_with_no_hazard_flags(self, toy_dataset):
        report = validate(toy_dataset)
        assert report.passed
        assert not report.warnings

    def test_single_arm_trial_fails(self):
        ds = CombinedDataset.from_arrays(
            ["x"], np.random.default_rng(0).normal(size=(4, 1)),
            np.ones(4), np.zeros(4), np.ones((3, 1)), np.ones(3),
        )
        report = validate(ds)
        assert not report.passed
        assert any(c.name == "trial_arms" and c.status == "fail" for c in report.checks)

    def test_constant_within_sample_warns(self):
        rng = np.random.default_rng(1)
        X_trial = np.column_stack([np.zeros(6), rng.normal(size=6)])
        X_survey = rng.normal(size=(8, 2))
        ds = CombinedDataset.from_arrays(
            ["flag", "x"], X_trial, np.array([1.0, 0.0] * 3), rng.normal(size=6),
            X_survey, np.ones(8),
        )
        report = validate(ds)
        assert report.passed
        (warning,) = report.warnings
        assert "flag" in warning.detail and "trial" in warning.detail

    def test_report_json(self, toy_dataset, tmp_path):
        report = validate(toy_dataset)
        payload = json.loads(report.to_json(tmp_path / "report.json"))
        assert payload["passed"] is True
        assert {c["name"] for c in payload["checks"]} >= {"trial_size", "trial_arms"}


class TestEstimandSpec:
    def test_accepts_plain_strings(self):
        spec = EstimandSpec("odds_ratio", "naive", "gbm", ("x",))
        assert spec.estimator == EstimatorKind.NAIVE

    def test_rejects_unknown_covariates(self, toy_dataset):
        spec = EstimandSpec(covariate_subset=("nope",))
        with pytest.raises(ConfigError, match="nope"):
            spec.validate_against(toy_dataset)

    def test_weighted_estimator_needs_covariates(self, toy_dataset):
        spec = EstimandSpec(estimator="survey_weighted")
        with pytest.raises(ConfigError, match="nonempty covariate subset"):
            spec.validate_against(toy_dataset)

    def test_naive_allows_empty_subset(self, toy_dataset):
        EstimandSpec(estimator="naive").validate_against(toy_dataset)


def test_toy_paths_exist():
    for path in toy_paths():
        assert path.exists()


def test_unit_record_defaults():
    rec = UnitRecord(sample=Sample.SURVEY, covariates=np.array([1.0]), survey_weight=2.0)
    assert rec.treatment is None and rec.outcome is None
