"""Scoring: program output (exact or judge-based) and file-discovery metrics.

Discovery is scored as recall/precision/F1 over predicted versus ground-truth
file sets. Aggregation is a per-dataset mean followed by an unweighted macro
mean across datasets; the aggregated F1 column is the mean of per-task F1
values ("mean F1"), not a harmonic mean of aggregated precision and recall.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .gateway import ChatTurn, Gateway, GatewayError
from .sandbox import ExecutionResult, ExitStatus

logger = logging.getLogger(__name__)


class EmptyTruth(ValueError):
    """Discovery scoring requires a non-empty ground-truth set."""


class JudgeUnavailable(RuntimeError):
    """The judge model could not produce a verdict."""


@dataclass(frozen=True)
class DiscoveryScore:
    recall: float
    precision: float
    f1: float

    def as_dict(self) -> dict:
        return {"recall": self.recall, "precision": self.precision, "f1": self.f1}


def score_discovery(predicted_ids: Iterable[str], truth_ids: Iterable[str]) -> DiscoveryScore:
    """Set-overlap recall/precision/F1.

    An empty prediction scores (0, 0, 0); an empty truth set is a caller
    error. F1 is 0 whenever precision + recall is 0, else their harmonic mean.
    """
    predicted = set(predicted_ids)
    truth = set(truth_ids)
    if not truth:
        raise EmptyTruth("ground-truth file set must be non-empty")
    hits = len(predicted & truth)
    recall = hits / len(truth)
    precision = hits / len(predicted) if predicted else 0.0
    f1 = 0.0 if (precision + recall) == 0 else 2 * precision * recall / (precision + recall)
    return DiscoveryScore(recall=recall, precision=precision, f1=f1)


# ---------------------------------------------------------------------------
# generation scoring
# ---------------------------------------------------------------------------

Comparator = Callable[[str, str], bool]


def exact_output_match(output: str, reference: str) -> bool:
    """Default comparator: whitespace-normalized equality, numeric-aware."""
    a, b = output.strip(), str(reference).strip()
    if a == b:
        return True
    try:
        return math.isclose(float(a), float(b), rel_tol=1e-6, abs_tol=1e-9)
    except ValueError:
        return False


COMPARATORS: dict[str, Comparator] = {"exact": exact_output_match}


JUDGE_TEMPLATE = (
    "You are an impartial judge for data-science answers.\n\n"
    "Question:\n{query}\n\n"
    "Reference answer:\n{reference}\n\n"
    "Submitted program output:\n{output}\n\n"
    "Does the submitted output answer the question correctly, matching the "
    "reference answer in substance? Reply with exactly 1 for correct or 0 "
    "for incorrect, and nothing else."
)


class LlmJudge:
    """Binary judge over (question, reference, output) triples."""

    def __init__(self, gateway: Gateway):
        self.gateway = gateway

    def judge(self, query: str, reference: str, output: str) -> int:
        try:
            reply = self.gateway.complete(
                [
                    ChatTurn.user(
                        JUDGE_TEMPLATE.format(query=query, reference=reference, output=output)
                    )
                ],
                caller="judge",
            )
        except GatewayError as exc:
            raise JudgeUnavailable(str(exc)) from exc
        verdict = reply.content.strip().split()[0] if reply.content.strip() else ""
        if verdict not in ("0", "1"):
            raise JudgeUnavailable(f"judge returned a non-binary verdict: {reply.content[:80]!r}")
        return int(verdict)


@dataclass
class TaskSpec:
    task_id: str
    query_text: str
    lake_root: str
    ground_truth_file_ids: list[str]
    reference_answer: str
    checker: str = "ExactScript"  # ExactScript | LlmJudge
    dataset: str = "default"
    comparator: str = "exact"

    def __post_init__(self) -> None:
        if self.checker not in ("ExactScript", "LlmJudge"):
            raise ValueError(f"unknown checker {self.checker!r}")
        if self.checker and self.reference_answer is None:
            raise ValueError("reference_answer required when a checker is set")

    @classmethod
    def from_dict(cls, data: dict) -> "TaskSpec":
        return cls(
            task_id=data["task_id"],
            query_text=data["query_text"],
            lake_root=data["lake_root"],
            ground_truth_file_ids=list(data.get("ground_truth_file_ids", [])),
            reference_answer=str(data.get("reference_answer", "")),
            checker=data.get("checker", "ExactScript"),
            dataset=data.get("dataset", "default"),
            comparator=data.get("comparator", "exact"),
        )


def load_task_manifest(path: str | Path) -> list[TaskSpec]:
    """Read the documented JSON task-manifest format: {"tasks": [...]}."""
    data = json.loads(Path(path).read_text())
    tasks = data["tasks"] if isinstance(data, dict) else data
    specs = [TaskSpec.from_dict(t) for t in tasks]
    seen = set()
    for spec in specs:
        if spec.task_id in seen:
            raise ValueError(f"duplicate task_id {spec.task_id!r} in manifest")
        seen.add(spec.task_id)
    return specs


def score_generation(
    result: ExecutionResult | None,
    spec: TaskSpec,
    judge: LlmJudge | None = None,
) -> float | None:
    """Score a program's execution against the task's reference answer.

    Non-Ok executions (and missing programs) score 0. ``None`` means the
    task could not be scored (judge unavailable) and must be excluded from
    aggregates with a count.
    """
    if result is None or result.exit_status is not ExitStatus.OK:
        return 0.0
    if spec.checker == "ExactScript":
        comparator = COMPARATORS[spec.comparator]
        return 1.0 if comparator(result.stdout, spec.reference_answer) else 0.0
    if judge is None:
        logger.warning("task %s needs a judge but none is configured", spec.task_id)
        return None
    try:
        return float(judge.judge(spec.query_text, spec.reference_answer, result.stdout.strip()))
    except JudgeUnavailable as exc:
        logger.warning("judge unavailable for task %s: %s", spec.task_id, exc)
        return None


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


@dataclass
class TaskRow:
    task_id: str
    dataset: str
    generation_score: float | None
    discovery: DiscoveryScore
    terminated_by: str

    def as_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "dataset": self.dataset,
            "generation_score": self.generation_score,
            "discovery": self.discovery.as_dict(),
            "terminated_by": self.terminated_by,
        }


@dataclass
class EvalReport:
    per_task: list[TaskRow]
    per_dataset: dict[str, dict[str, float]]
    overall: dict[str, float]
    unscored: int
    meta: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "per_task": [row.as_dict() for row in self.per_task],
            "per_dataset": self.per_dataset,
            "overall": self.overall,
            "unscored": self.unscored,
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    def render_table(self) -> str:
        """Plain-text table: one row per dataset plus the macro average."""
        headers = ["dataset", "tasks", "generation", "recall", "precision", "mean F1"]
        rows = []
        for dataset in sorted(self.per_dataset):
            stats = self.per_dataset[dataset]
            rows.append(
                [
                    dataset,
                    str(int(stats["tasks"])),
                    f"{stats['generation']:.3f}",
                    f"{stats['recall']:.3f}",
                    f"{stats['precision']:.3f}",
                    f"{stats['f1']:.3f}",
                ]
            )
        rows.append(
            [
                "macro average",
                str(len(self.per_task)),
                f"{self.overall['generation']:.3f}",
                f"{self.overall['recall']:.3f}",
                f"{self.overall['precision']:.3f}",
                f"{self.overall['f1']:.3f}",
            ]
        )
        widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(len(headers))]
        lines = [
            "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
            "  ".join("-" * w for w in widths),
        ]
        lines += ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows]
        if self.unscored:
            lines.append(f"(unscored tasks excluded from generation means: {self.unscored})")
        return "\n".join(lines)


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def aggregate(per_task: Sequence[TaskRow], meta: dict | None = None) -> EvalReport:
    """Per-dataset task-level means, then an unweighted macro mean across datasets."""
    if not per_task:
        raise ValueError("cannot aggregate an empty result set")
    datasets: dict[str, list[TaskRow]] = {}
    for row in per_task:
        datasets.setdefault(row.dataset, []).append(row)

    per_dataset: dict[str, dict[str, float]] = {}
    unscored = sum(1 for row in per_task if row.generation_score is None)
    for dataset, rows in datasets.items():
        scored = [r.generation_score for r in rows if r.generation_score is not None]
        per_dataset[dataset] = {
            "tasks": float(len(rows)),
            "generation": _mean(scored),
            "recall": _mean([r.discovery.recall for r in rows]),
            "precision": _mean([r.discovery.precision for r in rows]),
            "f1": _mean([r.discovery.f1 for r in rows]),
        }
    overall = {
        metric: _mean([per_dataset[d][metric] for d in per_dataset])
        for metric in ("generation", "recall", "precision", "f1")
    }
    return EvalReport(
        per_task=list(per_task),
        per_dataset=per_dataset,
        overall=overall,
        unscored=unscored,
        meta=meta or {},
    )
