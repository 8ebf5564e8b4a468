"""Checkable protocol properties over recorded transcripts and board logs.

These run over plain dict records (parsed JSON lines), so they can audit
both live objects and persisted logs. Each checker returns a list of
violation strings; empty means the property holds.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

from .file_agent import render_file_plan
from .search_agent import render_web_findings

# request records must stay addressee-free; these are the only legal keys
REQUEST_RECORD_KEYS = {
    "record",
    "request_id",
    "task_id",
    "body",
    "step_index",
    "status",
    "created_at",
}

MIN_DISTINCTIVE_LEN = 24  # ignore trivially short strings in substring checks


def read_jsonl(path: str | Path) -> list[dict]:
    records = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            records.append(json.loads(line))
    return records


def _payload_fragments(record: dict) -> list[str]:
    """Distinctive text fragments of one response-board payload."""
    payload = record.get("payload") or {}
    fragments = []
    kind = record.get("kind")
    if kind == "FilePlan":
        fragments.append(render_file_plan(payload))
    elif kind == "WebFindings":
        fragments.append(render_web_findings(payload))
    for value in payload.values():
        if isinstance(value, str):
            fragments.append(value)
    return [f for f in fragments if len(f) >= MIN_DISTINCTIVE_LEN]


def check_isolation(
    transcript_records: Sequence[dict],
    board_records: Sequence[dict],
    helper_ids: Iterable[str],
) -> list[str]:
    """No helper's prompt may contain any other helper's response payload."""
    helper_ids = set(helper_ids)
    prompts: dict[str, str] = {}
    for record in transcript_records:
        caller = record.get("caller", "")
        if caller in helper_ids:
            text = "\n".join(turn.get("content", "") for turn in record.get("turns", []))
            prompts[caller] = prompts.get(caller, "") + "\n" + text

    violations = []
    for record in board_records:
        if record.get("record") != "response" or record.get("declined"):
            continue
        author = record.get("agent_id", "")
        for fragment in _payload_fragments(record):
            for helper, prompt in prompts.items():
                if helper != author and fragment in prompt:
                    violations.append(
                        f"helper {helper} saw part of {author}'s response to "
                        f"{record.get('request_id')}"
                    )
    return violations


def check_no_assignment(board_records: Sequence[dict]) -> list[str]:
    """Request records carry no addressee; routing is self-selection only."""
    violations = []
    for record in board_records:
        if record.get("record") != "request":
            continue
        extra = set(record) - REQUEST_RECORD_KEYS
        if extra:
            violations.append(
                f"request {record.get('request_id')} carries unexpected fields {sorted(extra)}"
            )
    return violations


def check_round_bound(board_records: Sequence[dict], max_rounds: int = 3) -> list[str]:
    """No web-findings response may contain more than ``max_rounds`` rounds."""
    violations = []
    for record in board_records:
        if record.get("record") != "response" or record.get("kind") != "WebFindings":
            continue
        rounds = (record.get("payload") or {}).get("rounds", [])
        if len(rounds) > max_rounds:
            violations.append(
                f"response to {record.get('request_id')} ran {len(rounds)} search rounds"
            )
        for entry in rounds:
            if entry.get("round", 0) > max_rounds:
                violations.append(
                    f"response to {record.get('request_id')} has a round numbered {entry['round']}"
                )
    return violations


def check_budget(history_records: Sequence[dict], budget: int) -> list[str]:
    """Action history length must never exceed the configured budget."""
    violations = []
    if len(history_records) > budget:
        violations.append(f"history holds {len(history_records)} actions with budget {budget}")
    steps = [r.get("step", -1) for r in history_records]
    if steps != sorted(set(steps)) or any(b - a != 1 for a, b in zip(steps, steps[1:])):
        violations.append(f"steps are not strictly increasing by 1: {steps}")
    return violations


def check_monotone_prompts(transcript_records: Sequence[dict], caller: str = "main") -> list[str]:
    """Each main-agent prompt must extend the previous one (append-only history)."""
    turns_seq = [r["turns"] for r in transcript_records if r.get("caller") == caller]
    violations = []
    for i in range(1, len(turns_seq)):
        previous, current = turns_seq[i - 1], turns_seq[i]
        if current[: len(previous)] != previous:
            violations.append(f"prompt {i} does not extend prompt {i - 1} for caller {caller!r}")
    return violations
