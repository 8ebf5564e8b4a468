"""End-to-end wiring: prepare a lake, assemble agents, run tasks, score runs.

One run directory holds everything a run produces: offline transcript,
caches, per-task transcripts/boards/histories, and the final report. Replays
point a fresh run at a previous run directory and reproduce it exactly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shlex
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .baselines import (
    AgentDirectory,
    HashingEmbedder,
    HttpEmbedder,
    RetrievalIndex,
    build_index,
    run_master_slave,
    run_rag,
)
from .blackboard import Blackboard, BudgetExhausted, EmptyBody, HelperAgent
from .clustering import ClusterAssignment, apply_assignments, cluster_lake, load_clusters, save_clusters
from .config import RunConfig
from .evaluation import (
    DiscoveryScore,
    EvalReport,
    LlmJudge,
    TaskRow,
    TaskSpec,
    aggregate,
    score_discovery,
    score_generation,
)
from .file_agent import FileAgent
from .gateway import Gateway, LiveBackend, ReplayBackend, ScriptedBackend
from .lake import LakeManifest, ingest_manifest
from .main_agent import (
    ActionKind,
    TaskResult,
    TerminationReason,
    build_system_prompt,
    render_entries,
    run_task,
)
from .preview import PreviewStore
from .sandbox import (
    ExecutionResult,
    ExtractedReferences,
    ProgramRunner,
    execute,
    extract_file_references,
    stage_lake_copy,
)
from .search_agent import (
    HttpSearchProvider,
    LivePageFetcher,
    ScriptedPageFetcher,
    ScriptedSearchProvider,
    SearchAgent,
    SearchResult,
)

logger = logging.getLogger(__name__)

OFFLINE_SCOPE = "offline"


class BlackboardChannel:
    """The blackboard help mechanism: post, broadcast, gather, render."""

    help_kind = ActionKind.REQUEST_HELP

    def __init__(self, board: Blackboard, helpers: list[HelperAgent]):
        self.board = board
        self.helpers = helpers

    def observe_help(self, payload: str, agent_id: str | None, task_id: str, step: int) -> str:
        try:
            request = self.board.post_request(task_id, payload, step)
        except (EmptyBody, BudgetExhausted) as exc:
            return f"Request rejected: {exc}"
        entries = self.board.broadcast_and_gather(request, self.helpers)
        return render_entries(entries)


class BackendPool:
    """Backends per scope (the offline phase or one task id).

    A scripted fixture given as a single file is one continued conversation:
    all scopes share one backend so per-caller queues carry across the
    offline and online phases. A fixture directory supplies one file per
    scope instead (required for parallel multi-task scripted runs).
    """

    def __init__(self, config: RunConfig):
        self.config = config
        self._shared = None
        if config.backend == "scripted" and Path(config.script_path).is_file():
            self._shared = ScriptedBackend.from_file(config.script_path)

    def for_scope(self, scope: str):
        config = self.config
        if config.backend == "live":
            return LiveBackend(config.live_url or None, config.live_key or None, config.live_model)
        if config.backend == "scripted":
            if self._shared is not None:
                return self._shared
            return ScriptedBackend.from_file(Path(config.script_path) / f"{scope}.json")
        path = Path(config.replay_path)
        if scope == OFFLINE_SCOPE:
            transcript = path / "offline.jsonl"
        else:
            transcript = path / "tasks" / scope / "transcript.jsonl"
        return ReplayBackend.from_file(transcript)


def make_backend(config: RunConfig, scope: str):
    """One-off backend for a single scope (CLI helpers)."""
    return BackendPool(config).for_scope(scope)


def _load_web_fixture(path: str) -> tuple[ScriptedSearchProvider, ScriptedPageFetcher]:
    data = json.loads(Path(path).read_text())
    provider = ScriptedSearchProvider(
        {
            query: [SearchResult(r.get("title", ""), r["url"], r.get("snippet", "")) for r in items]
            for query, items in data.get("results", {}).items()
        }
    )
    return provider, ScriptedPageFetcher(data.get("pages", {}))


class _NullProvider:
    def search(self, query: str) -> list[SearchResult]:
        return []


def make_search_agent(config: RunConfig, gateway: Gateway) -> SearchAgent | None:
    if not config.search_enabled:
        return None
    if config.web_fixture:
        provider, fetcher = _load_web_fixture(config.web_fixture)
    elif config.search_provider_url:
        provider, fetcher = HttpSearchProvider(config.search_provider_url), LivePageFetcher()
    else:
        provider, fetcher = _NullProvider(), ScriptedPageFetcher({})
    return SearchAgent(
        gateway,
        provider,
        fetcher,
        excluded_domains=config.excluded_domains,
        parallel_fetch=(config.backend == "live"),
    )


@dataclass
class LakeBundle:
    """Everything the online phase needs about one lake, prepared offline."""

    manifest: LakeManifest
    clusters: list[ClusterAssignment]
    previews: PreviewStore
    analyses_dir: Path
    cache_root: Path
    index: RetrievalIndex | None = None

    def summary(self) -> str:
        lines = [
            f"The data lake holds {len(self.manifest)} files in "
            f"{len(self.clusters)} clusters:"
        ]
        for cluster in self.clusters:
            lines.append(f"- {cluster.label} ({len(cluster.member_file_ids)} files)")
        return "\n".join(lines)


def _names_key(manifest: LakeManifest) -> str:
    h = hashlib.sha256()
    for f in manifest:
        h.update(f.path.encode())
        h.update(b"\x00")
    return h.hexdigest()[:16]


def prepare_lake(lake_root: str, config: RunConfig, offline_gateway: Gateway, cache_root: Path) -> LakeBundle:
    """Offline phase for one lake: ingest, cluster, analyze, and (for RAG) index."""
    manifest = ingest_manifest(lake_root)
    cache_root.mkdir(parents=True, exist_ok=True)

    clusters_file = cache_root / f"clusters-{_names_key(manifest)}.json"
    if clusters_file.exists():
        clusters = load_clusters(clusters_file)
        apply_assignments(manifest, clusters)
    else:
        clusters = cluster_lake(manifest, offline_gateway)
        save_clusters(clusters, clusters_file)

    previews = PreviewStore(manifest, cache_root / "previews")
    analyses_dir = cache_root / "analyses"
    bundle = LakeBundle(manifest, clusters, previews, analyses_dir, cache_root)

    for cluster in clusters:
        FileAgent(
            cluster,
            manifest,
            offline_gateway,
            previews,
            max_inspect=config.max_inspect,
            cache_dir=analyses_dir,
        ).offline_analyze()

    if config.mode == "rag":
        index_file = cache_root / f"index-{_names_key(manifest)}.bin"
        if index_file.exists():
            bundle.index = RetrievalIndex.load(index_file)
        else:
            bundle.index = build_index(manifest, previews, _make_embedder(config))
            bundle.index.save(index_file)
    return bundle


def _make_embedder(config: RunConfig):
    if config.backend == "live" and config.live_url:
        return HttpEmbedder(config.live_url, config.live_key or None, config.live_model)
    return HashingEmbedder()


def _file_agents(bundle: LakeBundle, config: RunConfig, gateway: Gateway) -> list[FileAgent]:
    agents = []
    for cluster in bundle.clusters:
        agent = FileAgent(
            cluster,
            bundle.manifest,
            gateway,
            bundle.previews,
            max_inspect=config.max_inspect,
            cache_dir=bundle.analyses_dir,
        )
        agent.offline_analyze()  # cache hit: the offline phase already ran
        agents.append(agent)
    return agents


@dataclass
class TaskArtifacts:
    spec: TaskSpec
    result: TaskResult
    execution: ExecutionResult | None
    references: ExtractedReferences
    generation_score: float | None
    discovery: DiscoveryScore
    task_dir: Path

    def row(self) -> TaskRow:
        return TaskRow(
            task_id=self.spec.task_id,
            dataset=self.spec.dataset,
            generation_score=self.generation_score,
            discovery=self.discovery,
            terminated_by=self.result.terminated_by.value,
        )


def resolve_truth_ids(spec: TaskSpec, manifest: LakeManifest) -> list[str]:
    """Ground truth may be given as file ids or lake-relative paths."""
    ids = set(manifest.file_ids)
    resolved = []
    for ref in spec.ground_truth_file_ids:
        if ref in ids:
            resolved.append(ref)
            continue
        f = manifest.by_path(ref)
        if f is None:
            raise ValueError(f"task {spec.task_id}: ground-truth file {ref!r} not in manifest")
        resolved.append(f.file_id)
    return resolved


def run_one_task(
    spec: TaskSpec,
    config: RunConfig,
    bundle: LakeBundle,
    task_dir: Path,
    score: bool = True,
    pool: BackendPool | None = None,
) -> TaskArtifacts:
    """Run one task in the configured mode, then execute and score its program."""
    task_dir.mkdir(parents=True, exist_ok=True)
    pool = pool or BackendPool(config)
    gateway = Gateway(pool.for_scope(spec.task_id), transcript_path=task_dir / "transcript.jsonl")

    staged = stage_lake_copy(spec.lake_root, task_dir / "work")
    runner_cmd = shlex.split(config.runner_cmd) if config.runner_cmd else None
    exec_log = task_dir / "executions.jsonl"
    executor = ProgramRunner(
        staged,
        limit=config.exec_timeout,
        interpreter=config.interpreter or None,
        runner_cmd=runner_cmd,
        log_path=exec_log,
    )

    result = _run_mode(spec, config, bundle, gateway, task_dir, executor)

    execution = None
    references = ExtractedReferences(file_ids=[])
    program = result.executable_program
    if program is not None:
        final_dir = stage_lake_copy(spec.lake_root, task_dir / "final")
        execution = execute(
            program,
            final_dir,
            limit=config.exec_timeout,
            interpreter=config.interpreter or None,
            runner_cmd=runner_cmd,
            log_path=exec_log,
        )
        references = extract_file_references(program, bundle.manifest)

    generation = None
    discovery = DiscoveryScore(0.0, 0.0, 0.0)
    if score:
        judge = LlmJudge(gateway)
        generation = score_generation(execution, spec, judge)
        discovery = score_discovery(references.file_ids, resolve_truth_ids(spec, bundle.manifest))

    _persist_task(task_dir, spec, result, execution, references, generation, discovery)
    return TaskArtifacts(spec, result, execution, references, generation, discovery, task_dir)


def _run_mode(
    spec: TaskSpec,
    config: RunConfig,
    bundle: LakeBundle,
    gateway: Gateway,
    task_dir: Path,
    executor: ProgramRunner,
) -> TaskResult:
    helper_timeout = None if config.backend != "live" else 120.0
    if config.mode == "blackboard":
        helpers: list[HelperAgent] = list(_file_agents(bundle, config, gateway))
        search = make_search_agent(config, gateway)
        if search is not None:
            helpers.append(search)
        board = Blackboard(
            budget=config.budget,
            log_path=task_dir / "board.jsonl",
            helper_timeout=helper_timeout,
        )
        channel = BlackboardChannel(board, helpers)
        prompt = build_system_prompt(spec.query_text, bundle.summary(), config.budget)
        return run_task(spec.query_text, spec.task_id, gateway, channel, executor, config.budget, prompt)

    if config.mode == "master-slave":
        file_agents = _file_agents(bundle, config, gateway)
        search = make_search_agent(config, gateway)
        helpers = list(file_agents) + ([search] if search else [])
        directory = AgentDirectory.for_helpers(file_agents, search)
        return run_master_slave(
            spec.query_text,
            spec.task_id,
            gateway,
            directory,
            helpers,
            executor,
            config.budget,
            bundle.summary(),
        )

    # rag
    assert bundle.index is not None, "rag mode requires a prepared index"
    search = make_search_agent(config, gateway)
    return run_rag(
        spec.query_text,
        spec.task_id,
        gateway,
        bundle.manifest,
        bundle.previews,
        bundle.index,
        _make_embedder(config),
        search,
        executor,
        config.budget,
    )


def _persist_task(
    task_dir: Path,
    spec: TaskSpec,
    result: TaskResult,
    execution: ExecutionResult | None,
    references: ExtractedReferences,
    generation: float | None,
    discovery: DiscoveryScore,
) -> None:
    with open(task_dir / "history.jsonl", "w", encoding="utf-8") as fh:
        for record in result.history:
            fh.write(json.dumps(record.as_dict(), ensure_ascii=False) + "\n")
    summary = {
        "task_id": spec.task_id,
        "terminated_by": result.terminated_by.value,
        "program": result.program.source_text if result.program else None,
        "fallback_program": result.fallback_program.source_text if result.fallback_program else None,
        "execution": execution.as_dict() if execution else None,
        "referenced_file_ids": references.file_ids,
        "basename_collisions": references.basename_collisions,
        "generation_score": generation,
        "discovery": discovery.as_dict(),
    }
    (task_dir / "result.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


@dataclass
class RunOutcome:
    report: EvalReport
    artifacts: list[TaskArtifacts]
    any_fatal: bool = False


def run_eval(specs: list[TaskSpec], config: RunConfig) -> RunOutcome:
    """Run a task manifest end to end and aggregate an evaluation report."""
    if not specs:
        raise ValueError("task manifest is empty")
    config.validate()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "config.toml")

    pool = BackendPool(config)
    offline_gateway = Gateway(pool.for_scope(OFFLINE_SCOPE), transcript_path=out / "offline.jsonl")
    bundles: dict[str, LakeBundle] = {}
    for spec in specs:
        if spec.lake_root not in bundles:
            bundles[spec.lake_root] = prepare_lake(
                spec.lake_root, config, offline_gateway, out / "cache"
            )

    def _run(spec: TaskSpec) -> TaskArtifacts:
        return run_one_task(spec, config, bundles[spec.lake_root], out / "tasks" / spec.task_id, pool=pool)

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as workers:
            artifacts = list(workers.map(_run, specs))
    else:
        artifacts = [_run(spec) for spec in specs]

    meta = {
        "mode": config.mode,
        "budget": config.budget,
        "search_enabled": config.search_enabled,
        "backend": config.backend,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    report = aggregate([a.row() for a in artifacts], meta=meta)
    report.save(out / "report.json")
    (out / "report.txt").write_text(report.render_table() + "\n")
    any_fatal = any(a.result.terminated_by is TerminationReason.FATAL for a in artifacts)
    return RunOutcome(report=report, artifacts=artifacts, any_fatal=any_fatal)


# ---------------------------------------------------------------------------
# ablation harnesses
# ---------------------------------------------------------------------------

BUDGET_SWEEP = (2, 4, 6, 8, 10)


def run_budget_sweep(
    specs: list[TaskSpec], base_config: RunConfig, budgets: tuple[int, ...] = BUDGET_SWEEP
) -> dict:
    """Run the manifest at each action budget and emit comparable columns."""
    columns: dict[str, list[float]] = {"generation": [], "recall": [], "precision": [], "f1": []}
    out = Path(base_config.output_dir)
    for budget in budgets:
        cfg = base_config.apply_overrides(budget=budget, output_dir=str(out / f"budget-{budget}"))
        outcome = run_eval(specs, cfg)
        for metric in columns:
            columns[metric].append(outcome.report.overall[metric])
    sweep = {"budgets": list(budgets), "columns": columns}
    out.mkdir(parents=True, exist_ok=True)
    (out / "budget_sweep.json").write_text(json.dumps(sweep, indent=2, sort_keys=True) + "\n")
    return sweep


def run_search_ablation(specs: list[TaskSpec], base_config: RunConfig) -> dict:
    """Run the manifest with and without the search agent and compare."""
    out = Path(base_config.output_dir)
    comparison = {}
    for label, enabled in (("with_search", True), ("without_search", False)):
        cfg = base_config.apply_overrides(search_enabled=enabled, output_dir=str(out / label))
        outcome = run_eval(specs, cfg)
        comparison[label] = outcome.report.overall
    out.mkdir(parents=True, exist_ok=True)
    (out / "search_ablation.json").write_text(json.dumps(comparison, indent=2, sort_keys=True) + "\n")
    return comparison
