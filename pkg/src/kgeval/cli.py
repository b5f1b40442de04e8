"""Command line entry point: ``kgeval <stage> --config PATH``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, pipeline
from .config import Config, ConfigError, load_config
from .datasets import DatasetError
from .graph import format_summary
from .mapping import MappingConfigError

logger = logging.getLogger("kgeval")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, type=Path, help="YAML run configuration")
    parser.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    parser.add_argument("--seed", type=int, help="global seed (overrides seed)")
    parser.add_argument("--threads", type=int, help="worker threads (overrides threads)")
    parser.add_argument("--deterministic", action="store_true", default=None,
                        help="single worker and fixed seeds; identical inputs give identical bytes")
    parser.add_argument("--stage-filter", metavar="TASKS",
                        help="comma-separated task types or task_type:dataset pairs to run")
    parser.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgeval", description="Evaluate knowledge graphs through downstream tasks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "prepare": "load the KG and print statistics",
        "preprocess": "train embeddings and build indices",
        "map": "run the mapper chains",
        "run": "execute the task plan",
        "report": "aggregate results and write the report",
        "all": "every stage in order",
    }
    for name, text in helps.items():
        _common(sub.add_parser(name, help=text, description=text))
    return parser


def configure(args: argparse.Namespace) -> Config:
    config = load_config(args.config)
    update = {}
    if args.out is not None:
        update["output_dir"] = str(args.out.resolve())
    if args.seed is not None:
        update["seed"] = args.seed
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        update["threads"] = args.threads
    if args.deterministic:
        update["deterministic"] = True
    return config.model_copy(update=update)


def _prepare(artifacts: pipeline.Artifacts, args) -> None:
    print(format_summary(artifacts.graph, artifacts.parse_stats))
    print(f"tasks: {len(pipeline.filter_roster(artifacts.roster, args.stage_filter))}")


def _preprocess(artifacts: pipeline.Artifacts, args) -> None:
    for kind, emb in pipeline.preprocess(artifacts).items():
        print(f"{kind}: {len(emb)} vectors, dim {emb.dim}")


def _map(artifacts: pipeline.Artifacts, args) -> None:
    for chain, cov in pipeline.run_mapping(artifacts).items():
        print(f"{chain}: {cov['mapped']}/{cov['total']} mapped, coverage {cov['coverage']:.3f}")


def _run(artifacts: pipeline.Artifacts, args) -> list:
    plan = pipeline.plan_runs(artifacts.config, pipeline.filter_roster(artifacts.roster, args.stage_filter))
    results = pipeline.execute_plan(plan, artifacts)
    counts = {s: sum(r.status == s for r in results) for s in ("ok", "skipped", "failed")}
    print(f"runs: {len(results)} ({', '.join(f'{v} {k}' for k, v in counts.items())})")
    return results


def _report(artifacts: pipeline.Artifacts, args, results=None) -> None:
    config = artifacts.config
    if results is None:
        store = pipeline.ResultStore(config.out / "results")
        results = list(store.load().values())
        roster = {(t.task_type, t.dataset) for t in pipeline.filter_roster(artifacts.roster, args.stage_filter)}
        results = [r for r in results if (r.key.task_type, r.key.dataset) in roster]
    for path in pipeline.make_report(config, results):
        print(path)


def _all(artifacts: pipeline.Artifacts, args) -> None:
    _prepare(artifacts, args)
    _preprocess(artifacts, args)
    _map(artifacts, args)
    _report(artifacts, args, _run(artifacts, args))


COMMANDS = {"prepare": _prepare, "preprocess": _preprocess, "map": _map, "run": _run, "report": _report, "all": _all}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors count as configuration errors; --help and --version exit 0
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = configure(args)
        COMMANDS[args.command](pipeline.Artifacts(config), args)
    except (ConfigError, MappingConfigError, DatasetError) as exc:
        print(f"kgeval: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        logger.debug("failure", exc_info=True)
        print(f"kgeval: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
