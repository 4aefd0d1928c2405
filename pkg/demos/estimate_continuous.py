"""Continuous-outcome workflow: trial CSV + survey CSV -> transported effect.

Generates a synthetic randomized trial whose participants skew younger and
less burdened than the population a design-weighted survey represents, with
a treatment effect that strengthens with age and comorbidity.  The naive
trial contrast therefore understates the population effect; the
survey-weighted estimator recovers it.  The CSVs follow the by-name column
convention the CLI reads without a schema file: the trial file carries
``treatment`` and ``outcome``, the survey file carries ``survey_weight``,
and the shared remaining columns are covariates.

Run: python3 demos/estimate_continuous.py [--out DIR]
"""

import argparse
import json
from pathlib import Path

import numpy as np
import pandas as pd

from svytransport.cli import main as cli_main


def write_inputs(out: Path, rng: np.random.Generator) -> tuple[Path, Path]:
    n_trial, n_survey = 400, 1600

    age = rng.normal(46.0, 9.0, n_trial)
    burden = rng.normal(-0.3, 0.9, n_trial)
    a = (rng.random(n_trial) < 0.5).astype(float)
    effect = -3.0 - 0.08 * (age - 55.0) - 0.8 * burden
    y = 1.5 - 0.05 * (age - 50.0) + a * effect + rng.normal(0.0, 2.0, n_trial)
    trial = pd.DataFrame(
        {"age": age, "burden": burden, "treatment": a, "outcome": y}
    )

    age_s = rng.normal(57.0, 11.0, n_survey)
    burden_s = rng.normal(0.4, 1.0, n_survey)
    # design weights from the survey's known selection model
    p_select = 0.1 / (1.0 + np.exp((age_s - 57.0) / 15.0 + 0.25 * burden_s))
    survey = pd.DataFrame(
        {"age": age_s, "burden": burden_s, "survey_weight": 1.0 / p_select}
    )

    out.mkdir(parents=True, exist_ok=True)
    trial_csv = out / "trial.csv"
    survey_csv = out / "survey.csv"
    trial.to_csv(trial_csv, index=False)
    survey.to_csv(survey_csv, index=False)
    return trial_csv, survey_csv


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("demo_output/continuous"))
    args = parser.parse_args()

    trial_csv, survey_csv = write_inputs(args.out, np.random.default_rng(7))
    print(f"wrote {trial_csv} and {survey_csv}\n")

    rc = cli_main([
        "estimate", str(trial_csv), str(survey_csv),
        "--out", str(args.out / "results"),
        "--bootstrap", "200",
        "--weights-out",
    ])
    if rc != 0:
        return rc

    with open(args.out / "results" / "estimates.json") as fh:
        estimates = {e["estimator"]: e for e in json.load(fh)}
    naive = estimates["naive"]["point"]
    pop = estimates["survey_weighted"]["point"]
    print(
        f"\nthe trial-only contrast ({naive:.2f}) understates the effect in "
        f"the survey-represented population ({pop:.2f}) because the benefit "
        "grows with age and comorbidity while trial entry shrinks with them;"
        "\nsee balance.csv for the covariate shift and weights_delta.csv for "
        "the per-unit weights"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
