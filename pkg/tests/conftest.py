from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fixture_formats import write_csv  # noqa: E402

from lakeboard.blackboard import HelperReply  # noqa: E402
from lakeboard.gateway import Gateway, ScriptedBackend  # noqa: E402
from lakeboard.lake import ingest_manifest  # noqa: E402


class StubHelper:
    """Scripted helper agent: volunteers a fixed reply or declines."""

    def __init__(self, agent_id: str, reply: HelperReply | None = None):
        self.agent_id = agent_id
        self.reply = reply or HelperReply.decline("nothing to offer")
        self.seen: list[str] = []

    def consider(self, request) -> HelperReply:
        self.seen.append(request.request_id)
        return self.reply

    def respond_directly(self, instruction: str) -> HelperReply:
        self.seen.append(instruction)
        return self.reply


def make_gateway(script, path=None, **kwargs) -> Gateway:
    backend = ScriptedBackend.from_map(script) if isinstance(script, dict) else ScriptedBackend(script)
    return Gateway(backend, transcript_path=path, **kwargs)


@pytest.fixture
def mini_lake(tmp_path) -> Path:
    """A small mixed lake: two csv files and one text note."""
    root = tmp_path / "lake"
    (root / "data").mkdir(parents=True)
    write_csv(
        root / "data" / "ages.csv",
        ["patient_id", "age"],
        [[f"p{i}", 40 + i] for i in range(6)],
    )
    write_csv(
        root / "data" / "scores.csv",
        ["patient_id", "app_z_score"],
        [[f"p{i}", round(0.5 * i - 1.0, 2)] for i in range(6)],
    )
    (root / "notes.txt").write_text("cohort notes\nsee data directory\n")
    return root


@pytest.fixture
def mini_manifest(mini_lake):
    return ingest_manifest(mini_lake)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    outcomes: dict[str, str] = {}
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            if getattr(report, "when", None) != "call":
                continue
            if "test_acceptance.py" in report.nodeid:
                name = report.nodeid.split("::")[-1]
                outcomes[name] = status
    if outcomes:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name in sorted(outcomes):
            label = "PASS" if outcomes[name] == "passed" else "FAIL"
            terminalreporter.write_line(f"[{label}] {name}")
