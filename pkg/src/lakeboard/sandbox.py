"""Isolated execution of candidate programs and static file-reference extraction.

Programs run in a child process against a private copy of the lake, so the
lake itself can never be mutated. Which lake files a program "uses" is read
statically: any manifest path or basename occurring inside one of the
program's string literals counts as a reference.
"""

from __future__ import annotations

import ast
import base64
import json
import logging
import os
import re
import shutil
import subprocess
import sys
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

from .lake import LakeManifest

logger = logging.getLogger(__name__)

DEFAULT_EXEC_TIMEOUT = 120.0
OUTPUT_BYTE_CAP = 64 * 1024
RUNNER_RECORD_FD = 3


class ExitStatus(str, Enum):
    OK = "Ok"
    ERROR = "Error"
    TIMEOUT = "Timeout"


@dataclass
class CandidateProgram:
    source_text: str
    language_hint: str = "python"
    referenced_file_ids: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.source_text:
            raise ValueError("program source must be non-empty")


@dataclass
class ExecutionResult:
    exit_status: ExitStatus
    stdout: str
    stderr: str
    wall_time: float

    def as_dict(self) -> dict:
        return {
            "exit_status": self.exit_status.value,
            "stdout": self.stdout,
            "stderr": self.stderr,
            "wall_time": self.wall_time,
        }

    def observation(self) -> str:
        """The execution outcome as text for the agent to observe."""
        if self.exit_status is ExitStatus.OK:
            return self.stdout if self.stdout.strip() else "(program produced no output)"
        if self.exit_status is ExitStatus.TIMEOUT:
            return f"execution timed out after {self.wall_time:.0f}s"
        tail = self.stderr[-2000:] if self.stderr else "(no stderr)"
        return f"execution failed:\n{tail}"


def _cap_bytes(data: bytes) -> str:
    return data[:OUTPUT_BYTE_CAP].decode("utf-8", errors="replace")


def stage_lake_copy(lake_root: str | Path, workdir: str | Path) -> Path:
    """Copy the lake tree into a per-task working directory.

    The program gets cwd inside the copy; whatever it does there, the real
    lake stays untouched.
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    staged = workdir / "lake"
    if staged.exists():
        shutil.rmtree(staged)
    shutil.copytree(lake_root, staged)
    return staged


def _append_log(log_path: str | Path | None, result: ExecutionResult) -> ExecutionResult:
    if log_path:
        with open(log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(result.as_dict(), ensure_ascii=False) + "\n")
    return result


def execute(
    program: CandidateProgram,
    workdir: str | Path,
    limit: float = DEFAULT_EXEC_TIMEOUT,
    interpreter: str | None = None,
    runner_cmd: Sequence[str] | None = None,
    log_path: str | Path | None = None,
) -> ExecutionResult:
    """Run a program in a child process with cwd=workdir and a wall-clock limit.

    With ``runner_cmd`` set, execution routes through the resource-limiting
    runner shim and its structured fd-3 record; otherwise the configured
    interpreter is invoked directly on the program file. Each result is
    appended to ``log_path`` (JSON lines) when given.
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    program_path = workdir / "_candidate_program.py"
    program_path.write_text(program.source_text)

    if runner_cmd:
        return _append_log(log_path, _execute_via_runner(program_path, workdir, limit, runner_cmd))

    cmd = [interpreter or sys.executable, str(program_path)]
    start = time.monotonic()
    try:
        proc = subprocess.run(
            cmd,
            cwd=workdir,
            capture_output=True,
            timeout=limit,
        )
    except subprocess.TimeoutExpired as exc:
        wall = time.monotonic() - start
        result = ExecutionResult(
            exit_status=ExitStatus.TIMEOUT,
            stdout=_cap_bytes(exc.stdout or b""),
            stderr=_cap_bytes(exc.stderr or b""),
            wall_time=max(wall, limit),
        )
        return _append_log(log_path, result)
    wall = time.monotonic() - start
    status = ExitStatus.OK if proc.returncode == 0 else ExitStatus.ERROR
    result = ExecutionResult(
        exit_status=status,
        stdout=_cap_bytes(proc.stdout),
        stderr=_cap_bytes(proc.stderr),
        wall_time=wall,
    )
    return _append_log(log_path, result)


_RUNNER_STATUS_MAP = {
    "ok": ExitStatus.OK,
    "error": ExitStatus.ERROR,
    "killed_timeout": ExitStatus.TIMEOUT,
    "killed_memory": ExitStatus.ERROR,
    "runner_error": ExitStatus.ERROR,
}


def _execute_via_runner(
    program_path: Path, workdir: Path, limit: float, runner_cmd: Sequence[str]
) -> ExecutionResult:
    read_fd, write_fd = os.pipe()
    cmd = list(runner_cmd) + [str(program_path), "--timeout", str(limit)]
    start = time.monotonic()

    # dup2 in the child rebinds the pipe to fd 3 and clears its CLOEXEC flag;
    # close_fds must stay off or the interpreter would close fd 3 again
    def _bind_record_fd() -> None:
        os.dup2(write_fd, RUNNER_RECORD_FD)

    try:
        proc = subprocess.Popen(
            cmd,
            cwd=workdir,
            stdout=subprocess.DEVNULL,
            stderr=subprocess.DEVNULL,
            close_fds=False,
            preexec_fn=_bind_record_fd,
        )
        os.close(write_fd)
        write_fd = -1
        with os.fdopen(read_fd, "rb") as record_stream:
            read_fd = -1
            raw = record_stream.read()
        # grace period on top of the runner's own internal timeout
        proc.wait(timeout=limit + 30)
    except Exception as exc:  # noqa: BLE001 - a broken shim degrades to an error result
        logger.error("runner shim failed: %s", exc)
        return ExecutionResult(ExitStatus.ERROR, "", f"runner shim failure: {exc}", time.monotonic() - start)
    finally:
        for fd in (read_fd, write_fd):
            if fd >= 0:
                os.close(fd)
    wall = time.monotonic() - start

    try:
        record = json.loads(raw.decode("utf-8").strip().splitlines()[-1])
        status = _RUNNER_STATUS_MAP.get(record["exit_status"], ExitStatus.ERROR)
        stdout = base64.b64decode(record["stdout_b64"])[:OUTPUT_BYTE_CAP].decode("utf-8", "replace")
        stderr = base64.b64decode(record["stderr_b64"])[:OUTPUT_BYTE_CAP].decode("utf-8", "replace")
    except (ValueError, KeyError, IndexError) as exc:
        return ExecutionResult(ExitStatus.ERROR, "", f"unparseable runner record: {exc}", wall)
    if status is ExitStatus.TIMEOUT:
        wall = max(wall, limit)
    return ExecutionResult(status, stdout, stderr, wall)


class ProgramRunner:
    """Bound executor for one task: fixed workdir, limit, and interpreter."""

    def __init__(
        self,
        workdir: str | Path,
        limit: float = DEFAULT_EXEC_TIMEOUT,
        interpreter: str | None = None,
        runner_cmd: Sequence[str] | None = None,
        log_path: str | Path | None = None,
    ):
        self.workdir = Path(workdir)
        self.limit = limit
        self.interpreter = interpreter
        self.runner_cmd = list(runner_cmd) if runner_cmd else None
        self.log_path = log_path

    def run_source(self, source: str) -> ExecutionResult:
        program = CandidateProgram(source_text=source)
        return execute(
            program,
            self.workdir,
            limit=self.limit,
            interpreter=self.interpreter,
            runner_cmd=self.runner_cmd,
            log_path=self.log_path,
        )


_STRING_RE = re.compile(r"(['\"])((?:\\.|(?!\1).)*)\1")


def _string_literals(source: str, language_hint: str = "python") -> list[str]:
    if language_hint == "python":
        try:
            tree = ast.parse(source)
            return [
                node.value
                for node in ast.walk(tree)
                if isinstance(node, ast.Constant) and isinstance(node.value, str)
            ]
        except SyntaxError:
            pass
    return [m.group(2) for m in _STRING_RE.finditer(source)]


@dataclass
class ExtractedReferences:
    file_ids: list[str]
    basename_collisions: list[str] = field(default_factory=list)

    @property
    def collision_flag(self) -> bool:
        return bool(self.basename_collisions)


def extract_file_references(program: CandidateProgram, manifest: LakeManifest) -> ExtractedReferences:
    """Statically derive which manifest files the program references.

    A file counts as referenced when its relative path or basename occurs
    inside any string literal of the source. Pure function of
    ``(source_text, manifest)``; results are deduplicated in manifest order.
    Basename matches shared by several lake files are flagged as collisions.
    """
    literals = _string_literals(program.source_text, program.language_hint)
    basename_owners: dict[str, list[str]] = {}
    for f in manifest:
        basename_owners.setdefault(f.basename, []).append(f.file_id)

    referenced: list[str] = []
    collisions: list[str] = []
    for f in manifest:
        hit = any(f.path in lit for lit in literals)
        basename_hit = any(f.basename in lit for lit in literals)
        if hit or basename_hit:
            referenced.append(f.file_id)
            if not hit and basename_hit and len(basename_owners[f.basename]) > 1:
                collisions.append(f.basename)
    if collisions:
        logger.warning("ambiguous basename references: %s", sorted(set(collisions)))
    program.referenced_file_ids = referenced
    return ExtractedReferences(file_ids=referenced, basename_collisions=sorted(set(collisions)))
