"""Command-line front end.

Three subcommands: ``estimate`` runs the full analysis on a trial CSV and a
survey CSV, ``simulate`` executes a scenario grid from a JSON config, and
``toy`` prints the bundled hand-checkable worked example.  Every run that
writes files also writes a ``manifest.json`` beside them recording the
command, option hash, input hashes, seed and version.

Exit codes: 0 success, 1 input/validation problem, 2 numerical failure,
3 configuration or usage problem.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from . import __version__
from .bootstrap import BootstrapPlan, double_bootstrap
from .data import (
    ColumnSchema,
    EffectScale,
    EstimandSpec,
    EstimatorKind,
    Learner,
    load_csv,
)
from .datasets import toy_paths
from .diagnostics import DenominatorConvention, balance_table
from .errors import (
    ConfigError,
    EstimationError,
    NumericalError,
    SchemaError,
    SvyTransportError,
    ValidationError,
)
from .estimators import estimates_to_csv
from .pipeline import estimate_bundle
from .simulation import grid_to_csv, load_grid_config, scenario_grid
from .weights import export_weights_csv

_SCALE_FLAGS = {
    "meandiff": EffectScale.MEAN_DIFFERENCE,
    "oddsratio": EffectScale.ODDS_RATIO,
}


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is taken by numerical failures,
    # so usage problems are rerouted through ConfigError (exit 3).
    def error(self, message):
        raise ConfigError(message)


@dataclass(frozen=True)
class RunManifest:
    command: list[str]
    config_hash: str
    input_hashes: dict[str, str]
    seed: Optional[int]
    version: str
    timestamp: str

    @classmethod
    def build(cls, argv: list[str], options: dict, inputs: dict[str, Path], seed) -> "RunManifest":
        canon = json.dumps(options, sort_keys=True, default=str).encode()
        input_hashes = {}
        for label, path in inputs.items():
            h = hashlib.blake2b(digest_size=16)
            h.update(Path(path).read_bytes())
            input_hashes[label] = h.hexdigest()
        return cls(
            command=list(argv),
            config_hash=hashlib.blake2b(canon, digest_size=16).hexdigest(),
            input_hashes=input_hashes,
            seed=seed,
            version=__version__,
            timestamp=datetime.now(timezone.utc).isoformat(),
        )

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(vars(self), fh, indent=2, default=str)
            fh.write("\n")


def _default_schema(trial_path, survey_path) -> ColumnSchema:
    """Schema by convention: treatment/outcome/survey_weight columns by name,
    covariates = remaining columns present in both files."""
    try:
        trial_cols = list(pd.read_csv(trial_path, nrows=0).columns)
        survey_cols = list(pd.read_csv(survey_path, nrows=0).columns)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise SchemaError(f"cannot read input CSV headers: {exc}") from exc
    special = {"treatment", "outcome", "survey_weight"}
    covariates = [
        c for c in trial_cols if c not in special and c in survey_cols
    ]
    if not covariates:
        raise SchemaError(
            "no covariate columns shared by both files; pass --schema to "
            "map column roles explicitly"
        )
    for col in ("treatment", "outcome"):
        if col not in trial_cols:
            raise SchemaError(f"trial file lacks a {col!r} column; pass --schema")
    weight = "survey_weight" if "survey_weight" in survey_cols else None
    return ColumnSchema(
        covariates=tuple(covariates),
        treatment="treatment",
        outcome="outcome",
        survey_weight=weight,
    )


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--learner", choices=[m.value for m in Learner], default=Learner.LOGISTIC.value,
        help="membership model family (default: %(default)s)",
    )
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default: %(default)s)")
    p.add_argument(
        "--scale", choices=sorted(_SCALE_FLAGS), default="meandiff",
        help="effect scale (default: %(default)s)",
    )


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="svytransport",
        description="Transport randomized-trial effects to survey-represented populations.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser(
        "estimate", help="estimate effects from a trial CSV and a survey CSV"
    )
    est.add_argument("trial_csv", type=Path)
    est.add_argument("survey_csv", type=Path)
    est.add_argument(
        "--schema", type=Path, default=None,
        help="JSON file mapping column names to roles "
        "(covariate/treatment/outcome/survey_weight); default: by column name",
    )
    _add_common_flags(est)
    est.add_argument(
        "--no-survey-weights", action="store_true",
        help="ignore survey weights: fit the membership model unweighted and "
        "report only the naive and transport estimators",
    )
    est.add_argument(
        "--bootstrap", type=int, default=0, metavar="N",
        help="double-bootstrap iterations for the weighted estimators (0 = off)",
    )
    est.add_argument(
        "--asmd-denominator", choices=[c.value for c in DenominatorConvention],
        default=DenominatorConvention.POOLED.value,
        help="SD convention for balance-table ASMDs (default: %(default)s)",
    )
    est.add_argument(
        "--covariates", default=None,
        help="comma-separated covariate subset for the membership model",
    )
    est.add_argument(
        "--cap-percentile", type=float, default=None,
        help="cap weights at this percentile of their distribution (default: no cap)",
    )
    est.add_argument(
        "--continuity", action="store_true",
        help="0.5-per-cell correction for zero cells on the odds-ratio scale",
    )
    est.add_argument("--level", type=float, default=0.95, help="CI level (default: %(default)s)")
    est.add_argument("--out", type=Path, default=Path("."), help="output directory")
    est.add_argument(
        "--weights-out", action="store_true",
        help="also export per-unit weight CSVs to the output directory",
    )
    est.add_argument(
        "--replicates-out", action="store_true",
        help="also export bootstrap replicate vectors to the output directory",
    )
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="run a scenario grid from a JSON config")
    sim.add_argument("grid_config", type=Path, help='JSON with "base" and "axes" sections')
    _add_common_flags(sim)
    sim.add_argument(
        "--bootstrap", type=int, default=0, metavar="N",
        help="per-replication bootstrap iterations for coverage checks (0 = off)",
    )
    sim.add_argument(
        "--out", type=Path, default=Path("results.csv"), help="output CSV path"
    )
    sim.set_defaults(func=cmd_simulate)

    toy = sub.add_parser("toy", help="print the bundled worked example and verify it")
    toy.add_argument("--json", action="store_true", help="emit JSON instead of text")
    toy.set_defaults(func=cmd_toy)
    return parser


def cmd_estimate(args, argv: list[str]) -> int:
    if args.schema is not None:
        schema = ColumnSchema.from_json(args.schema)
    else:
        schema = _default_schema(args.trial_csv, args.survey_csv)
    if args.no_survey_weights:
        schema = replace(schema, survey_weight=None)
    elif schema.survey_weight is None:
        raise SchemaError(
            "survey-weighted estimation needs a survey_weight column; "
            "map one via --schema or pass --no-survey-weights"
        )
    dataset = load_csv(args.trial_csv, args.survey_csv, schema)

    covariates = (
        tuple(c.strip() for c in args.covariates.split(",") if c.strip())
        if args.covariates
        else None
    )
    scale = _SCALE_FLAGS[args.scale]
    learner = Learner(args.learner)
    bundle = estimate_bundle(
        dataset, covariates, learner, scale,
        level=args.level, continuity=args.continuity,
        cap_percentile=args.cap_percentile,
    )
    if args.no_survey_weights:
        estimates = [bundle.naive, bundle.transport]
        gamma, delta = bundle.gamma, None
    else:
        estimates = list(bundle.estimates)
        gamma, delta = bundle.gamma, bundle.delta

    args.out.mkdir(parents=True, exist_ok=True)
    records = [e.to_dict() for e in estimates]
    if args.bootstrap:
        for record, est in zip(records, estimates):
            if est.estimator == EstimatorKind.NAIVE:
                continue
            spec = EstimandSpec(
                effect_scale=scale,
                estimator=est.estimator,
                membership_learner=learner,
                covariate_subset=covariates or dataset.covariate_names,
            )
            plan = BootstrapPlan(
                n_iterations=args.bootstrap, rng_seed=args.seed, level=args.level
            )
            boot = double_bootstrap(dataset, spec, plan, continuity=args.continuity)
            record["bootstrap"] = boot.to_dict()
            if args.replicates_out:
                boot.to_csv(args.out / f"replicates_{est.estimator.value}.csv")

    with open(args.out / "estimates.json", "w") as fh:
        json.dump(records, fh, indent=2)
        fh.write("\n")
    estimates_to_csv(estimates, args.out / "estimates.csv")
    table = balance_table(
        dataset, gamma, delta, DenominatorConvention(args.asmd_denominator)
    )
    table.to_csv(args.out / "balance.csv")
    table.to_long_csv(args.out / "balance_long.csv")
    if args.weights_out:
        export_weights_csv(gamma, dataset, args.out / "weights_gamma.csv")
        if delta is not None:
            export_weights_csv(delta, dataset, args.out / "weights_delta.csv")

    # the config hash describes the analysis, not where outputs land
    options = {k: str(v) for k, v in vars(args).items() if k not in ("func", "out")}
    RunManifest.build(
        argv, options,
        {"trial_csv": args.trial_csv, "survey_csv": args.survey_csv},
        args.seed,
    ).write(args.out / "manifest.json")

    for e in estimates:
        print(
            f"{e.estimator.value:16s} {e.effect_scale.value}: "
            f"{e.point:.6g} (se {e.se:.4g}, {int(e.level * 100)}% CI "
            f"[{e.ci_low:.6g}, {e.ci_high:.6g}])"
        )
    print(f"outputs written to {args.out}")
    return 0


def cmd_simulate(args, argv: list[str]) -> int:
    base, axes = load_grid_config(args.grid_config)
    base = replace(base, seed=args.seed, learner=args.learner)
    summaries = scenario_grid(base, axes, bootstrap_iterations=args.bootstrap or None)
    if args.out.parent != Path(""):
        args.out.parent.mkdir(parents=True, exist_ok=True)
    grid_to_csv(summaries, args.out)
    options = {k: str(v) for k, v in vars(args).items() if k not in ("func", "out")}
    RunManifest.build(
        argv, options, {"grid_config": args.grid_config}, args.seed
    ).write(args.out.with_name(args.out.stem + "_manifest.json"))
    for summary in summaries:
        cfg = summary.config
        for (estimator, learner), cell in sorted(summary.cells.items()):
            print(
                f"gamma1={cfg.gamma1} gamma2={cfg.gamma2} gamma3={cfg.gamma3} "
                f"rho={cfg.rho} omitted=[{'+'.join(cfg.omitted_covariates)}] "
                f"{estimator}/{learner}: bias {cell.bias:+.4f}, "
                f"coverage {cell.coverage:.3f}"
            )
    print(f"results written to {args.out}")
    return 0


def _toy_report() -> dict:
    trial_path, survey_path, schema_path = toy_paths()
    dataset = load_csv(trial_path, survey_path, ColumnSchema.from_json(schema_path))
    bundle = estimate_bundle(dataset, learner=Learner.LOGISTIC)
    indicator = dataset.X[dataset.trial_mask, 0]
    golden = {"naive": 8.0 / 3.0, "transport": 3.2, "survey_weighted": 3.0}
    report = {
        "strata": {
            "older": {"trial": 100, "survey": 200, "survey_weight": 2.5},
            "younger": {"trial": 50, "survey": 300, "survey_weight": 5.0 / 3.0},
        },
        "population_size_estimate": dataset.population_size_estimate,
        "weights": {
            "gamma": {
                "older": float(bundle.gamma.values[indicator == 0][0]),
                "younger": float(bundle.gamma.values[indicator == 1][0]),
            },
            "delta": {
                "older": float(bundle.delta.values[indicator == 0][0]),
                "younger": float(bundle.delta.values[indicator == 1][0]),
            },
        },
        "estimates": {
            "naive": bundle.naive.point,
            "transport": bundle.transport.point,
            "survey_weighted": bundle.survey_weighted.point,
        },
        "expected": golden,
    }
    for name, want in golden.items():
        got = report["estimates"][name]
        if abs(got - want) > 1e-10:
            raise EstimationError(
                f"toy example check failed: {name} = {got!r}, expected {want!r}"
            )
    return report


def cmd_toy(args, argv: list[str]) -> int:
    report = _toy_report()
    if args.json:
        print(json.dumps(report, indent=2))
        return 0
    w, e = report["weights"], report["estimates"]
    print("Worked example: two age strata, deterministic effects 2 (older) and 4 (younger)")
    print("  trial: 100 older, 50 younger; survey: 200 older (weight 5/2), "
          "300 younger (weight 5/3)")
    print(f"  estimated population size: {report['population_size_estimate']:g}")
    print("membership-model inverse odds at trial units:")
    print(f"  unweighted fit (gamma):      older {w['gamma']['older']:g}, "
          f"younger {w['gamma']['younger']:g}   (expected 2 and 6)")
    print(f"  survey-weighted fit (delta): older {w['delta']['older']:g}, "
          f"younger {w['delta']['younger']:g}   (expected 5 and 10)")
    print("estimates (mean difference):")
    print(f"  naive:           {e['naive']:.10g}   (trial-composition average, 8/3)")
    print(f"  transport:       {e['transport']:.10g}   (survey-sample composition)")
    print(f"  survey-weighted: {e['survey_weighted']:.10g}   (population composition)")
    print("all golden values verified to 1e-10")
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args, argv)
    except (SchemaError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except SvyTransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
