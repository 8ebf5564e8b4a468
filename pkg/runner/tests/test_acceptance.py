"""Runner-shim acceptance: record integrity and direct-execution equivalence.

Covers the echo/crash/memory-bomb trio plus the integration route through
the main package's executor; < 30 s.
"""

from __future__ import annotations

import base64
import json
import sys
import time

from conftest import invoke_runner, run_direct

ECHO = 'print("equivalence check", 41 + 1)\n'
CRASH = 'raise KeyError("missing column")\n'
MEMORY_BOMB = "blocks = []\nwhile True:\n    blocks.append(bytearray(16 * 1024 * 1024))\n"


def test_criterion_runner_record_integrity(write_program):
    start = time.monotonic()

    fixtures = {
        "echo": (ECHO, []),
        "crash": (CRASH, []),
        "bomb": (MEMORY_BOMB, ["--memory-mb", "256"]),
    }
    records = {}
    for name, (source, args) in fixtures.items():
        result = invoke_runner(write_program(source, f"{name}.py"), *args)
        lines = result.record_bytes.decode().strip().splitlines()
        assert len(lines) == 1, f"{name}: fd-3 stream must hold exactly one line"
        records[name] = json.loads(lines[0])
        assert records[name]["v"] == 1

    assert records["echo"]["exit_status"] == "ok"
    assert records["crash"]["exit_status"] == "error"
    assert records["bomb"]["exit_status"] == "killed_memory"

    echo_program = write_program(ECHO, "echo_direct.py")
    direct = run_direct(echo_program)
    decoded = base64.b64decode(invoke_runner(echo_program).record["stdout_b64"])
    assert decoded == direct.stdout

    assert time.monotonic() - start < 30


def test_shim_routes_through_main_executor(tmp_path):
    """The primary's sandbox accepts a runner command and maps its statuses."""
    from lakeboard.sandbox import CandidateProgram, ExitStatus, execute

    runner_cmd = [sys.executable, "-m", "lakerunner"]

    ok = execute(CandidateProgram('print("routed")'), tmp_path / "a", runner_cmd=runner_cmd)
    assert ok.exit_status is ExitStatus.OK
    assert ok.stdout == "routed\n"

    err = execute(CandidateProgram('raise ValueError("nope")'), tmp_path / "b", runner_cmd=runner_cmd)
    assert err.exit_status is ExitStatus.ERROR
    assert "nope" in err.stderr

    slow = execute(CandidateProgram("while True: pass"), tmp_path / "c", limit=1, runner_cmd=runner_cmd)
    assert slow.exit_status is ExitStatus.TIMEOUT
