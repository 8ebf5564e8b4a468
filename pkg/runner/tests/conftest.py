from __future__ import annotations

import json
import os
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

import pytest


@dataclass
class Invocation:
    record_bytes: bytes
    exit_code: int

    @property
    def record(self) -> dict:
        return json.loads(self.record_bytes)


def invoke_runner(program: Path, *args: str, bind_fd3: bool = True) -> Invocation:
    """Run the shim in a child process with fd 3 piped back to us."""
    cmd = [sys.executable, "-m", "lakerunner", str(program), *args]
    if not bind_fd3:
        proc = subprocess.run(cmd, capture_output=True)
        return Invocation(record_bytes=b"", exit_code=proc.returncode)

    read_fd, write_fd = os.pipe()
    # dup2 in the child puts the pipe at fd 3 (and clears CLOEXEC on it);
    # close_fds=False keeps the interpreter from closing it again pre-exec
    proc = subprocess.Popen(
        cmd,
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
        close_fds=False,
        preexec_fn=lambda: os.dup2(write_fd, 3),
    )
    os.close(write_fd)
    with os.fdopen(read_fd, "rb") as stream:
        data = stream.read()
    code = proc.wait(timeout=120)
    return Invocation(record_bytes=data, exit_code=code)


def run_direct(program: Path) -> subprocess.CompletedProcess:
    return subprocess.run([sys.executable, str(program)], capture_output=True, timeout=120)


@pytest.fixture
def write_program(tmp_path):
    def _write(source: str, name: str = "prog.py") -> Path:
        path = tmp_path / name
        path.write_text(source)
        return path

    return _write
