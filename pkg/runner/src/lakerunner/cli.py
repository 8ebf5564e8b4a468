"""CLI: ``lakerunner <program_path> --timeout S --memory-mb M``.

Requires an open file descriptor 3 for the result record
(``lakerunner prog.py 3>record.json`` from a shell). The record channel is
secured before the program runs; exactly one JSON line is written to it per
invocation, even when the runner itself fails.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import RECORD_FD, STATUS_RUNNER_ERROR, RunnerRecord, _b64, _child_usage, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lakerunner", description=__doc__)
    parser.add_argument("program_path")
    parser.add_argument("--timeout", type=float, default=None, help="wall-clock limit in seconds")
    parser.add_argument("--memory-mb", type=int, default=None, help="address-space limit in MiB")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    try:
        record_fd = os.dup(RECORD_FD)
        os.close(RECORD_FD)
    except OSError:
        print(
            "lakerunner: file descriptor 3 must be open for the result record "
            "(e.g. `lakerunner prog.py 3>record.json`)",
            file=sys.stderr,
        )
        return 2

    try:
        record = run(args.program_path, timeout=args.timeout, memory_mb=args.memory_mb)
    except BaseException as exc:  # noqa: BLE001 - internal faults still emit a record
        peak, cpu = _child_usage()
        record = RunnerRecord(
            exit_status=STATUS_RUNNER_ERROR,
            stdout_b64="",
            stderr_b64=_b64(f"runner failure: {type(exc).__name__}: {exc}".encode()),
            peak_memory=peak,
            cpu_time=cpu,
        )

    os.write(record_fd, record.as_json_line())
    os.close(record_fd)
    return 0


if __name__ == "__main__":
    sys.exit(main())
