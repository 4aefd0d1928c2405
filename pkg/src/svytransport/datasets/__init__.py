"""Bundled example data.

The toy dataset is a two-stratum worked example small enough to check by
hand: a trial of 100 older and 50 younger adults with a deterministic
treatment effect (2 among older, 4 among younger) and a survey of 200 older
(weight 5/2) and 300 younger (weight 5/3) adults representing a population
of 1000 with equal numbers in each age group.  The population average
effect is exactly 3.
"""

from importlib import resources
from pathlib import Path

from ..data import ColumnSchema, CombinedDataset, load_csv

__all__ = ["toy_paths", "load_toy"]


def toy_paths() -> tuple[Path, Path, Path]:
    """Paths of the bundled toy trial CSV, survey CSV and schema JSON."""
    root = resources.files(__name__)
    return (
        Path(str(root / "toy_trial.csv")),
        Path(str(root / "toy_survey.csv")),
        Path(str(root / "toy_schema.json")),
    )


def load_toy() -> CombinedDataset:
    trial, survey, schema = toy_paths()
    return load_csv(trial, survey, ColumnSchema.from_json(schema))
