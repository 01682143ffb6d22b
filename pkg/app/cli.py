"""
Command line entry point.

    python -m app.cli classify --dataset data/sw --kernel gp-lambda --seed 7 --out results
    python -m app.cli simulate --config sw.env --out data/sw
    python -m app.cli serve --port 8000

Configuration merges Settings defaults < the key=value file given by --config <
explicit flags < repeated --set key=value pairs.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from dotenv import dotenv_values
from pydantic import ValidationError

from app.config import get_settings
from app.exceptions import NetGPError
from app.models.schemas import (
    EvaluationScheme,
    ExperimentConfig,
    GraphModel,
    KernelChoice,
    LaplacianVariant,
    OccTraining,
    PredictMode,
    SurvivalCase,
    Task,
)

logger = logging.getLogger("app.cli")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

# flag dest -> ExperimentConfig field
_FLAGS = {
    "dataset": "dataset",
    "kernel": "kernel",
    "laplacian": "laplacian",
    "evaluation": "evaluation",
    "replicates": "replicates",
    "test_fraction": "test_fraction",
    "folds": "folds",
    "n_samples": "n_samples",
    "burn_in": "burn_in",
    "thin": "thin",
    "predict_mode": "predict_mode",
    "n_jobs": "n_jobs",
    "model": "model",
    "survival_case": "survival_case",
    "m": "m",
    "n": "n",
    "minority_fraction": "minority_fraction",
    "occ_train_label": "occ_train_label",
    "occ_training": "occ_training",
    "lattice_radius": "lattice_radius",
    "grid_points": "survival_grid_points",
}


def _choices(enum) -> list[str]:
    return [e.value for e in enum]


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="key=value configuration file")
    parser.add_argument("--seed", type=int, help="experiment seed (default 0)")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--dataset", type=Path, help="dataset directory")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override any configuration key; repeatable",
    )
    parser.add_argument("--n-jobs", dest="n_jobs", type=int)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netgp",
        description="Gaussian process models with graph-valued covariates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="write a simulated dataset directory")
    _add_common(simulate)
    simulate.add_argument("--model", choices=_choices(GraphModel))
    simulate.add_argument("--survival-case", dest="survival_case", choices=_choices(SurvivalCase))
    simulate.add_argument("--m", type=int, help="total number of graphs")
    simulate.add_argument("--n", type=int, help="nodes per graph")
    simulate.add_argument("--minority-fraction", dest="minority_fraction", type=float)
    simulate.add_argument("--lattice-radius", dest="lattice_radius", type=int,
                          help="small-world ring-lattice neighbourhood radius")

    for name, help_text in (
        ("distances", "compute and cache a dataset's distance matrix"),
        ("classify", "cross-validated GP classification"),
        ("occ", "one-class anomaly scores with elbow thresholds"),
        ("survival", "GP survival analysis and survival surfaces"),
    ):
        task = sub.add_parser(name, help=help_text)
        _add_common(task)
        task.add_argument("--kernel", choices=_choices(KernelChoice))
        task.add_argument("--laplacian", choices=_choices(LaplacianVariant))
        if name in ("classify", "occ", "survival"):
            task.add_argument("--n-samples", dest="n_samples", type=int)
            task.add_argument("--burn-in", dest="burn_in", type=int)
            task.add_argument("--thin", type=int)
        if name in ("classify", "occ"):
            task.add_argument("--predict-mode", dest="predict_mode", choices=_choices(PredictMode))
            task.add_argument("--replicates", type=int)
            task.add_argument("--test-fraction", dest="test_fraction", type=float)
        if name == "classify":
            task.add_argument("--evaluation", choices=_choices(EvaluationScheme))
            task.add_argument("--folds", type=int)
        if name == "occ":
            task.add_argument("--occ-train-label", dest="occ_train_label", type=int, choices=[-1, 1])
            task.add_argument("--occ-training", dest="occ_training", choices=_choices(OccTraining))
        if name == "survival":
            task.add_argument("--grid-points", dest="grid_points", type=int)

    serve = sub.add_parser("serve", help="run the HTTP API with uvicorn")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("-v", "--verbose", action="store_true")
    return parser


def _parse_overrides(pairs: Sequence[str]) -> dict[str, str]:
    values = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"--set expects KEY=VALUE, got {pair!r}")
        values[key.strip().lower().replace("-", "_")] = value.strip()
    return values


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge the config file, explicit flags and --set overrides into an ExperimentConfig."""
    values: dict[str, Any] = {}
    if args.config is not None:
        if not args.config.exists():
            raise FileNotFoundError(f"config file not found: {args.config}")
        for key, value in dotenv_values(args.config).items():
            if value is not None:
                values[key.lower().replace("-", "_")] = value

    for dest, field_name in _FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            values[field_name] = value
    if args.seed is not None:
        values["seed"] = args.seed
    if args.out is not None:
        values["out"] = args.out
    values.update(_parse_overrides(args.overrides))
    values["task"] = Task(args.command)
    return ExperimentConfig.model_validate(values)


def _configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else get_settings().log_level.upper()
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    _configure_logging(args.verbose)

    if args.command == "serve":
        import uvicorn

        uvicorn.run("app.main:app", host=args.host, port=args.port)
        return EXIT_OK

    try:
        cfg = load_config(args)
    except (ValidationError, ValueError, FileNotFoundError) as e:
        print(f"netgp {args.command}: invalid configuration: {e}", file=sys.stderr)
        return EXIT_USAGE

    from app.services.runner import experiment_runner

    try:
        result = experiment_runner.run(cfg)
    except (NetGPError, ValueError, OSError) as e:
        logger.error(f"Task '{cfg.task.value}' failed: {e}")
        print(f"netgp {cfg.task.value}: {e}", file=sys.stderr)
        return EXIT_FAILURE

    print(result.model_dump_json(indent=2, exclude={"report"}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
