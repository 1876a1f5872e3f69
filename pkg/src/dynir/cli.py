"""Command line entry point: ``dynir run | verify | synth``.

Exit status is 0 on success, 1 when a self-check fails and 2 for usage,
configuration or input errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .data_ingest import ensemble_to_runs, write_diversity_qrels, write_qrels, write_run
from .errors import DynIRError
from .experiment import ALGORITHMS, ALL_METRICS, SYNTH_DEFAULTS, UNAVAILABLE_METRICS, \
    ExperimentConfig, run_experiment
from .metrics import Judgments
from .simulator import synth_collection
from .verification import run_checks

SYNTH_FLAGS = {"topics": int, "docs": int, "methods": int, "noise": float,
               "relevant_rate": float, "subtopics": int}


def _csv(kind):
    def parse(text: str):
        return [kind(x) for x in text.split(",") if x.strip()]
    return parse


def _add_synth_flags(p: argparse.ArgumentParser):
    for name, kind in SYNTH_FLAGS.items():
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=kind, default=None,
                       help=f"synthetic generator: {name} (default {SYNTH_DEFAULTS[name]})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynir", description="Multi-page dynamic ranking experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="rank and evaluate every topic, write result tables")
    run.add_argument("--config", help="JSON file with ExperimentConfig fields")
    run.add_argument("--runs", nargs="+", help="run files, one per scoring method")
    run.add_argument("--qrels")
    run.add_argument("--diversity-qrels")
    run.add_argument("--synthetic", action="store_true",
                     help="use generated data; --topics etc. tune the generator")
    _add_synth_flags(run)
    run.add_argument("--algorithms", type=_csv(str),
                     help=f"comma-separated subset of {','.join(ALGORITHMS)}")
    run.add_argument("--lambdas", type=_csv(float), help="comma-separated discounts in [0, 1]")
    run.add_argument("--metrics", type=_csv(str),
                     help=f"comma-separated subset of {','.join(ALL_METRICS + UNAVAILABLE_METRICS)}")
    run.add_argument("--pages", type=int)
    run.add_argument("--page-size", type=int)
    run.add_argument("--obs-mass", type=float)
    run.add_argument("--mode", choices=("sequential", "exact"))
    run.add_argument("--cross-doc-covariance", action=argparse.BooleanOptionalAction, default=None)
    run.add_argument("--pool-depth", type=int)
    run.add_argument("--keep-top", type=int)
    run.add_argument("--click-user", choices=("perfect", "examination"))
    run.add_argument("--page2-weighting", choices=("probability", "uniform"))
    run.add_argument("--alpha", type=float)
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--output-dir")

    sub.add_parser("verify", help="run the built-in numeric checks")

    synth = sub.add_parser("synth", help="write a synthetic collection as run and qrels files")
    _add_synth_flags(synth)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--output-dir", required=True)
    return parser


OVERRIDES = ("runs", "qrels", "diversity_qrels", "algorithms", "lambdas", "metrics", "pages",
             "page_size", "obs_mass", "mode", "cross_doc_covariance", "pool_depth", "keep_top",
             "click_user", "page2_weighting", "alpha", "seed", "workers", "output_dir")


def config_from_args(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    for name in OVERRIDES:
        value = getattr(args, name)
        if value is not None:
            setattr(config, name, value)
    synth = {k: getattr(args, k) for k in SYNTH_FLAGS if getattr(args, k) is not None}
    if args.synthetic or synth:
        config.synthetic = {**(config.synthetic or {}), **synth}
    return config.validate()


def _run(args) -> int:
    config = config_from_args(args)
    if not config.output_dir:
        print("error: --output-dir is required", file=sys.stderr)
        return 2
    result = run_experiment(config)
    print(f"wrote {len(result.rows)} rows for {result.summary['n_topics']} topics to {config.output_dir}")
    return 0


def _verify(_args) -> int:
    results = run_checks()
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def write_synthetic(output_dir, seed: int = 0, **params) -> List[Path]:
    p = {**SYNTH_DEFAULTS, **{k: v for k, v in params.items() if v is not None}}
    ensembles, judgments = synth_collection(int(p["topics"]), int(p["docs"]), int(p["methods"]),
                                            seed, float(p["noise"]), float(p["relevant_rate"]),
                                            int(p["subtopics"]))
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for run in ensemble_to_runs(ensembles):
        path = out / f"{run.name}.run"
        write_run(run, path)
        written.append(path)
    write_qrels(judgments, out / "qrels.txt")
    written.append(out / "qrels.txt")
    if judgments.subtopics:
        write_diversity_qrels(Judgments(subtopics=judgments.subtopics), out / "diversity_qrels.txt")
        written.append(out / "diversity_qrels.txt")
    return written


def _synth(args) -> int:
    written = write_synthetic(args.output_dir, args.seed,
                              **{k: getattr(args, k) for k in SYNTH_FLAGS})
    for path in written:
        print(path)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _run, "verify": _verify, "synth": _synth}
    try:
        return handlers[args.command](args)
    except (DynIRError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
