"""Command-line entry point.

Exit codes: 0 success, 2 configuration problems, 3 stage failure,
4 inference backend exhausted its retries.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import rater, semclass
from .config import PipelineConfig, load_config
from .errors import BackendExhausted, ConfigError, ScholarpipeError, StageError
from .pipeline import STAGES, Pipeline
from .semclass import MethodLabel, StrategyKind

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_BACKEND = 4

COMMAND_STAGES = {
    "ingest": ("ingest",),
    "match": ("ingest", "match"),
    "classify": ("ingest", "classify"),
    "extract-sections": ("extract-sections",),
    "indicators": ("ingest", "match", "classify", "indicators"),
    "fit": ("ingest", "classify", "fit"),
    "geo": ("ingest", "classify", "geo"),
    "report": ("ingest", "match", "classify", "indicators", "report"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scholarpipe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="pipeline config file (key = value lines)")
        p.add_argument("--strategy", choices=[k.value for k in StrategyKind], default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--mock-backend", action=argparse.BooleanOptionalAction, default=None)

    for name in COMMAND_STAGES:
        add_common(sub.add_parser(name, help=f"run the {name} stage (and its prerequisites)"))

    run_all = sub.add_parser("run-all", help="run every pipeline stage in order")
    add_common(run_all)
    run_all.add_argument(
        "--stage", action="append", choices=STAGES, default=None,
        help="restrict to this stage (repeatable); default is all stages",
    )

    validate = sub.add_parser("validate", help="score machine labels against human coders")
    add_common(validate)
    validate.add_argument("--coder-labels", required=True, help="CSV of work_id,coder_id,q1,q2")
    validate.add_argument("--question", choices=("q1", "q2"), default="q1")
    return parser


def _apply_overrides(config: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    if args.strategy is not None:
        config.strategy = StrategyKind(args.strategy)
    if args.seed is not None:
        config.seed = args.seed
    if args.workers is not None:
        config.workers = args.workers
    if args.mock_backend is not None:
        config.mock_backend = args.mock_backend
        if not config.mock_backend and not config.backend_endpoint:
            raise ConfigError("remote backend selected but no endpoint configured")
    return config


def _run_validate(pipeline: Pipeline, args: argparse.Namespace) -> int:
    if not pipeline.classifications_path.exists():
        print("validate: no classification results; run classify first", file=sys.stderr)
        return EXIT_STAGE
    labels, overrides = rater.load_coder_labels(args.coder_labels)
    machine = {r.work_id: r.label for r in semclass.load_results(pipeline.classifications_path)}
    report = rater.agreement_report(labels, machine, overrides, question=args.question)
    print(json.dumps({"question": args.question, **report.to_dict()}, indent=2, sort_keys=True))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        config = _apply_overrides(config, args)
        pipeline = Pipeline(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "validate":
            return _run_validate(pipeline, args)
        if args.command == "run-all":
            stages = tuple(dict.fromkeys(args.stage)) if args.stage else STAGES
        else:
            stages = COMMAND_STAGES[args.command]
        statuses = pipeline.run(stages)
        for stage in STAGES:
            if stage in statuses:
                print(f"{stage}: {statuses[stage]}")
        return EXIT_OK
    except BackendExhausted as exc:
        print(f"backend exhausted: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (StageError, ScholarpipeError) as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
