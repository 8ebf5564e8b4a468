"""Command-line entry point: ingest, cluster, analyze, run, eval, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .clustering import cluster_lake, save_clusters
from .config import ConfigError, RunConfig
from .evaluation import TaskSpec, load_task_manifest
from .gateway import Gateway
from .lake import ingest_manifest
from .system import (
    OFFLINE_SCOPE,
    make_backend,
    prepare_lake,
    run_budget_sweep,
    run_eval,
    run_one_task,
    run_search_ablation,
)

logger = logging.getLogger(__name__)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML-style config file; flags override it")
    parser.add_argument("--mode", choices=("blackboard", "master-slave", "rag"))
    parser.add_argument("--budget", type=int, help="main-agent action budget T")
    parser.add_argument("--no-search", dest="no_search", action="store_true", default=None)
    parser.add_argument("--backend", choices=("live", "scripted", "replay"))
    parser.add_argument("--script", dest="script_path", help="scripted-backend fixture (file or dir)")
    parser.add_argument("--replay", dest="replay_path", help="previous run directory to replay")
    parser.add_argument("--live-url", dest="live_url")
    parser.add_argument("--live-model", dest="live_model")
    parser.add_argument("--lake-root", dest="lake_root")
    parser.add_argument("--exec-timeout", dest="exec_timeout", type=float)
    parser.add_argument("--interpreter")
    parser.add_argument("--runner-cmd", dest="runner_cmd", help="route execution through this runner shim")
    parser.add_argument("--excluded-domains", dest="excluded_domains", help="comma-separated host suffixes")
    parser.add_argument("--web-fixture", dest="web_fixture", help="scripted search-provider fixture")
    parser.add_argument("--output-dir", dest="output_dir")
    parser.add_argument("--jobs", type=int)


def _build_config(args: argparse.Namespace, require_backend: bool = True) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {
        "mode": args.mode,
        "budget": args.budget,
        "backend": args.backend,
        "script_path": args.script_path,
        "replay_path": args.replay_path,
        "live_url": args.live_url,
        "live_model": args.live_model,
        "lake_root": args.lake_root,
        "exec_timeout": args.exec_timeout,
        "interpreter": args.interpreter,
        "runner_cmd": args.runner_cmd,
        "web_fixture": args.web_fixture,
        "output_dir": args.output_dir,
        "jobs": args.jobs,
    }
    if args.no_search:
        overrides["search_enabled"] = False
    if args.excluded_domains is not None:
        overrides["excluded_domains"] = [
            d.strip() for d in args.excluded_domains.split(",") if d.strip()
        ]
    config = config.apply_overrides(**overrides)
    config.validate(require_backend=require_backend)
    return config


def _cmd_ingest(args: argparse.Namespace) -> int:
    manifest = ingest_manifest(args.lake_root)
    manifest.save(args.output)
    print(f"ingested {len(manifest)} files from {args.lake_root} -> {args.output}")
    return 0


def _cmd_cluster(args: argparse.Namespace) -> int:
    config = _build_config(args, require_backend=not args.fallback)
    manifest = ingest_manifest(config.lake_root or args.lake_root)
    gateway = None
    if not args.fallback:
        gateway = Gateway(make_backend(config, OFFLINE_SCOPE))
    clusters = cluster_lake(manifest, gateway)
    save_clusters(clusters, args.output)
    print(f"{len(clusters)} clusters -> {args.output}")
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    config = _build_config(args)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    gateway = Gateway(make_backend(config, OFFLINE_SCOPE), transcript_path=out / "offline.jsonl")
    bundle = prepare_lake(config.lake_root, config, gateway, out / "cache")
    print(f"analyzed {len(bundle.clusters)} clusters; caches under {out / 'cache'}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = _build_config(args)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    offline_gateway = Gateway(make_backend(config, OFFLINE_SCOPE), transcript_path=out / "offline.jsonl")
    bundle = prepare_lake(config.lake_root, config, offline_gateway, out / "cache")
    spec = TaskSpec(
        task_id=args.task_id,
        query_text=args.query,
        lake_root=config.lake_root,
        ground_truth_file_ids=[],
        reference_answer="",
    )
    artifacts = run_one_task(spec, config, bundle, out / "tasks" / spec.task_id, score=False)
    print(f"terminated by: {artifacts.result.terminated_by.value}")
    program = artifacts.result.executable_program
    if program:
        print("--- program ---")
        print(program.source_text)
    if artifacts.execution:
        print("--- output ---")
        print(artifacts.execution.observation())
    return 0 if artifacts.result.terminated_by.value != "Fatal" else 1


def _cmd_eval(args: argparse.Namespace) -> int:
    config = _build_config(args)
    specs = load_task_manifest(args.manifest)
    if args.sweep_budgets:
        budgets = tuple(int(b) for b in args.sweep_budgets.split(","))
        sweep = run_budget_sweep(specs, config, budgets)
        print(json.dumps(sweep, indent=2, sort_keys=True))
        return 0
    if args.ablate_search:
        comparison = run_search_ablation(specs, config)
        print(json.dumps(comparison, indent=2, sort_keys=True))
        return 0
    outcome = run_eval(specs, config)
    print(outcome.report.render_table())
    return 1 if outcome.any_fatal else 0


def _cmd_report(args: argparse.Namespace) -> int:
    from .evaluation import DiscoveryScore, EvalReport, TaskRow

    data = json.loads(Path(args.report).read_text())
    rows = [
        TaskRow(
            task_id=r["task_id"],
            dataset=r["dataset"],
            generation_score=r["generation_score"],
            discovery=DiscoveryScore(**r["discovery"]),
            terminated_by=r["terminated_by"],
        )
        for r in data["per_task"]
    ]
    report = EvalReport(
        per_task=rows,
        per_dataset=data["per_dataset"],
        overall=data["overall"],
        unscored=data["unscored"],
        meta=data.get("meta", {}),
    )
    print(report.render_table())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lakeboard",
        description="Blackboard multi-agent system for data-science tasks over data lakes",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a lake manifest")
    p.add_argument("--lake-root", required=True)
    p.add_argument("--output", default="manifest.json")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("cluster", help="partition the lake by file names")
    _add_config_flags(p)
    p.add_argument("--fallback", action="store_true", help="skip the model; one cluster per extension")
    p.add_argument("--output", default="clusters.json")
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("analyze", help="run the offline file-agent phase")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("run", help="run a single ad-hoc query")
    _add_config_flags(p)
    p.add_argument("--query", required=True)
    p.add_argument("--task-id", default="task-0")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("eval", help="run a task manifest and score it")
    _add_config_flags(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--sweep-budgets", dest="sweep_budgets", help="comma-separated budgets, e.g. 2,4,6,8,10")
    p.add_argument("--ablate-search", dest="ablate_search", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("report", help="render a saved report.json as a table")
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
