"""Program runner with CPU/memory/time limits and a structured result record.

The runner forks: the child (the same interpreter image) redirects its
standard streams into capture files, applies the resource limits, and runs
the program; the parent supervises the wall clock, reaps the child, and
emits exactly one JSON record on file descriptor 3. Parent-side enforcement
means even programs that swallow exceptions or block signals get stopped,
and the record is emitted no matter how the program dies.
"""

from __future__ import annotations

import base64
import json
import os
import resource
import runpy
import signal
import sys
import tempfile
import time
import traceback
from dataclasses import asdict, dataclass

RECORD_VERSION = 1
RECORD_FD = 3

STATUS_OK = "ok"
STATUS_ERROR = "error"
STATUS_KILLED_MEMORY = "killed_memory"
STATUS_KILLED_TIMEOUT = "killed_timeout"
STATUS_RUNNER_ERROR = "runner_error"

# one-byte child -> parent outcome markers (exit codes would collide with
# whatever the user program passes to sys.exit)
_MARK_ERROR = b"E"
_MARK_MEMORY = b"M"
_MARK_INTERNAL = b"I"

_MARK_CHILD_FD = 250  # where the child parks the marker pipe before closing the rest
_CLOSE_FDS_UPTO = 4096
_POLL_INTERVAL = 0.01


@dataclass
class RunnerRecord:
    exit_status: str
    stdout_b64: str
    stderr_b64: str
    peak_memory: int
    cpu_time: float
    v: int = RECORD_VERSION

    def as_json_line(self) -> bytes:
        return (json.dumps(asdict(self), sort_keys=True) + "\n").encode("utf-8")


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _child_usage() -> tuple[int, float]:
    usage = resource.getrusage(resource.RUSAGE_CHILDREN)
    return usage.ru_maxrss * 1024, usage.ru_utime + usage.ru_stime


def _program_traceback(exc: BaseException, program_path: str) -> None:
    """Print the traceback starting at the program's own frames, mirroring
    what a direct interpreter run would show."""
    tb = exc.__traceback__
    while tb is not None and tb.tb_frame.f_code.co_filename != program_path:
        tb = tb.tb_next
    traceback.print_exception(type(exc), exc, tb or exc.__traceback__, file=sys.stderr)


def _child_main(
    program_path: str,
    out_fd: int,
    err_fd: int,
    mark_fd: int,
    memory_mb: int | None,
) -> None:
    """Runs in the forked child; never returns."""
    exit_code = 0
    try:
        os.dup2(out_fd, 1)
        os.dup2(err_fd, 2)
        # park the marker pipe at a reserved fd, then close every other
        # inherited descriptor so the program cannot reach the record
        # channel, the capture files, or anything of the parent's
        os.dup2(mark_fd, _MARK_CHILD_FD)
        mark_fd = _MARK_CHILD_FD
        os.closerange(3, _MARK_CHILD_FD)
        os.closerange(_MARK_CHILD_FD + 1, _CLOSE_FDS_UPTO)
        if memory_mb is not None:
            _, hard = resource.getrlimit(resource.RLIMIT_AS)
            resource.setrlimit(resource.RLIMIT_AS, (memory_mb * 1024 * 1024, hard))
    except BaseException:  # noqa: BLE001 - setup failure, not a program fault
        os.write(mark_fd, _MARK_INTERNAL)
        os._exit(1)

    try:
        runpy.run_path(program_path, run_name="__main__")
    except MemoryError:
        os.write(mark_fd, _MARK_MEMORY)
        exit_code = 1
    except SystemExit as exc:
        if exc.code not in (None, 0):
            if not isinstance(exc.code, int):
                print(exc.code, file=sys.stderr)
            os.write(mark_fd, _MARK_ERROR)
            exit_code = 1
    except BaseException as exc:  # noqa: BLE001 - any program fault is an error
        _program_traceback(exc, program_path)
        os.write(mark_fd, _MARK_ERROR)
        exit_code = 1
    try:
        sys.stdout.flush()
        sys.stderr.flush()
    except (OSError, ValueError):
        pass
    os._exit(exit_code)


def run(
    program_path: str,
    timeout: float | None = None,
    memory_mb: int | None = None,
) -> RunnerRecord:
    """Execute a program in a forked child under the given limits.

    The child closes every inherited descriptor above stderr before the
    program runs, so the record channel stays out of reach. Always returns
    a record.
    """
    if not os.path.isfile(program_path) or not os.access(program_path, os.R_OK):
        peak, cpu = _child_usage()
        return RunnerRecord(
            exit_status=STATUS_RUNNER_ERROR,
            stdout_b64="",
            stderr_b64=_b64(f"program not readable: {program_path}".encode()),
            peak_memory=peak,
            cpu_time=cpu,
        )

    with tempfile.TemporaryFile() as out_file, tempfile.TemporaryFile() as err_file:
        mark_read, mark_write = os.pipe()
        pid = os.fork()
        if pid == 0:
            os.close(mark_read)
            _child_main(program_path, out_file.fileno(), err_file.fileno(), mark_write, memory_mb)
            os._exit(70)  # unreachable

        os.close(mark_write)
        status, timed_out = _supervise(pid, timeout)

        marker = b""
        try:
            marker = os.read(mark_read, 1)
        finally:
            os.close(mark_read)

        out_file.seek(0)
        err_file.seek(0)
        stdout_bytes = out_file.read()
        stderr_bytes = err_file.read()

    exit_status = _classify(status, timed_out, marker)
    if timed_out:
        stderr_bytes += b"\n[killed: wall-clock limit exceeded]\n" if stderr_bytes else b"[killed: wall-clock limit exceeded]\n"
    peak, cpu = _child_usage()
    return RunnerRecord(
        exit_status=exit_status,
        stdout_b64=_b64(stdout_bytes),
        stderr_b64=_b64(stderr_bytes),
        peak_memory=peak,
        cpu_time=cpu,
    )


def _supervise(pid: int, timeout: float | None) -> tuple[int, bool]:
    """Wait for the child, killing it when the wall-clock limit passes."""
    deadline = time.monotonic() + timeout if timeout is not None else None
    while True:
        done, status = os.waitpid(pid, os.WNOHANG)
        if done == pid:
            return status, False
        if deadline is not None and time.monotonic() >= deadline:
            os.kill(pid, signal.SIGKILL)
            _, status = os.waitpid(pid, 0)
            return status, True
        time.sleep(_POLL_INTERVAL)


def _classify(status: int, timed_out: bool, marker: bytes) -> str:
    if timed_out:
        return STATUS_KILLED_TIMEOUT
    if marker == _MARK_MEMORY:
        return STATUS_KILLED_MEMORY
    if marker == _MARK_INTERNAL:
        return STATUS_RUNNER_ERROR
    if os.WIFEXITED(status) and os.WEXITSTATUS(status) == 0:
        return STATUS_OK
    return STATUS_ERROR
