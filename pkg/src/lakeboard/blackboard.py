"""The shared blackboard and its response board.

The main agent posts addressee-free requests here; registered helper agents
are each offered every broadcast exactly once and individually decide whether
to volunteer. Responses go to the response board, which only the main agent
reads, so no helper ever sees another helper's output.
"""

from __future__ import annotations

import itertools
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Protocol, Sequence

logger = logging.getLogger(__name__)

DEFAULT_HELPER_TIMEOUT = 120.0  # seconds, live runs; scripted runs pass None


class EmptyBody(ValueError):
    """A request body must be non-empty."""


class BudgetExhausted(RuntimeError):
    """The posting step is at or past the configured action budget."""


class ProtocolError(RuntimeError):
    """A blackboard lifecycle rule was violated."""


class RequestStatus(str, Enum):
    OPEN = "Open"
    COLLECTING = "Collecting"
    CLOSED = "Closed"


_STATUS_ORDER = [RequestStatus.OPEN, RequestStatus.COLLECTING, RequestStatus.CLOSED]


class ResponseKind(str, Enum):
    FILE_PLAN = "FilePlan"
    WEB_FINDINGS = "WebFindings"


@dataclass
class Request:
    request_id: str
    task_id: str
    body: str
    step_index: int
    status: RequestStatus = RequestStatus.OPEN
    created_at: float = 0.0

    def advance(self, new_status: RequestStatus) -> None:
        if _STATUS_ORDER.index(new_status) <= _STATUS_ORDER.index(self.status):
            raise ProtocolError(f"cannot move request {self.request_id} {self.status} -> {new_status}")
        self.status = new_status

    def as_dict(self) -> dict:
        # deliberately carries no addressee: routing is by helper self-selection
        return {
            "record": "request",
            "request_id": self.request_id,
            "task_id": self.task_id,
            "body": self.body,
            "step_index": self.step_index,
            "status": self.status.value,
            "created_at": self.created_at,
        }


@dataclass
class ResponseEntry:
    request_id: str
    agent_id: str
    kind: ResponseKind | None
    payload: dict | None
    declined: bool
    received_at: float
    diagnostic: str = ""

    def as_dict(self) -> dict:
        return {
            "record": "response",
            "request_id": self.request_id,
            "agent_id": self.agent_id,
            "kind": self.kind.value if self.kind else None,
            "payload": self.payload,
            "declined": self.declined,
            "received_at": self.received_at,
            "diagnostic": self.diagnostic,
        }


@dataclass
class HelperReply:
    """What a helper hands back when offered a request."""

    kind: ResponseKind | None = None
    payload: dict | None = None
    declined: bool = False
    diagnostic: str = ""

    @classmethod
    def decline(cls, reason: str = "") -> "HelperReply":
        return cls(declined=True, diagnostic=reason)

    @classmethod
    def file_plan(cls, payload: dict) -> "HelperReply":
        return cls(kind=ResponseKind.FILE_PLAN, payload=payload)

    @classmethod
    def web_findings(cls, payload: dict) -> "HelperReply":
        return cls(kind=ResponseKind.WEB_FINDINGS, payload=payload)


class HelperAgent(Protocol):
    """Anything that can monitor the blackboard and volunteer responses."""

    agent_id: str

    def consider(self, request: Request) -> HelperReply:
        """Decide whether to volunteer on a request; never sees other replies."""
        ...


class Blackboard:
    """Request lifecycle plus response-board collection for one run.

    Appends to the response board are serialized, so entries are totally
    ordered; helper evaluation order is the registration order given to
    :meth:`broadcast_and_gather`, which keeps scripted runs bit-reproducible.
    """

    def __init__(
        self,
        budget: int,
        log_path: str | Path | None = None,
        helper_timeout: float | None = DEFAULT_HELPER_TIMEOUT,
    ):
        if budget < 1:
            raise ValueError("budget must be >= 1")
        self.budget = budget
        self.helper_timeout = helper_timeout
        self.requests: dict[str, Request] = {}
        self.responses: dict[str, dict[str, ResponseEntry]] = {}
        self._clock = itertools.count()
        self._counter = itertools.count()
        self._lock = threading.Lock()
        self._log_path = Path(log_path) if log_path else None
        if self._log_path:
            self._log_path.parent.mkdir(parents=True, exist_ok=True)
            self._log_path.write_text("")

    def _tick(self) -> float:
        return float(next(self._clock))

    def _log(self, record: dict) -> None:
        if self._log_path:
            with open(self._log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    @property
    def request_count(self) -> int:
        return len(self.requests)

    def post_request(self, task_id: str, body: str, step_index: int) -> Request:
        """Post an addressee-free request, visible to all registered helpers."""
        if not body or not body.strip():
            raise EmptyBody("request body must be non-empty")
        if step_index >= self.budget:
            raise BudgetExhausted(f"step {step_index} is outside the action budget T={self.budget}")
        with self._lock:
            request = Request(
                request_id=f"r{next(self._counter):04d}",
                task_id=task_id,
                body=body,
                step_index=step_index,
                created_at=self._tick(),
            )
            self.requests[request.request_id] = request
            self.responses[request.request_id] = {}
        self._log(request.as_dict())
        return request

    def record_response(self, request: Request, agent_id: str, reply: HelperReply) -> ResponseEntry:
        if request.request_id not in self.requests:
            raise ProtocolError(f"response references unknown request {request.request_id}")
        if reply.declined and reply.payload:
            raise ProtocolError("a declined reply must carry no payload")
        with self._lock:
            board = self.responses[request.request_id]
            if agent_id in board:
                raise ProtocolError(f"duplicate response from {agent_id} on {request.request_id}")
            entry = ResponseEntry(
                request_id=request.request_id,
                agent_id=agent_id,
                kind=reply.kind,
                payload=reply.payload,
                declined=reply.declined,
                received_at=self._tick(),
                diagnostic=reply.diagnostic,
            )
            board[agent_id] = entry
        self._log(entry.as_dict())
        return entry

    def broadcast_and_gather(
        self,
        request: Request,
        helpers: Sequence[HelperAgent],
        timeout: float | None = -1.0,
    ) -> list[ResponseEntry]:
        """Offer a request to every helper exactly once and collect volunteers.

        Returns only the non-declined entries, ordered by
        ``(received_at, agent_id)``. Per-helper failures and timeouts are
        recorded as declined entries with a diagnostic, never aborting the
        gather. The request is Closed on return.
        """
        if request.status is not RequestStatus.OPEN:
            raise ProtocolError(f"request {request.request_id} is {request.status}, not Open")
        if timeout == -1.0:
            timeout = self.helper_timeout
        request.advance(RequestStatus.COLLECTING)

        for helper in helpers:
            reply = self._evaluate(helper, request, timeout)
            self.record_response(request, helper.agent_id, reply)

        request.advance(RequestStatus.CLOSED)
        self._log(
            {
                "record": "request_closed",
                "request_id": request.request_id,
                "responses": len(self.responses[request.request_id]),
            }
        )
        volunteered = [e for e in self.responses[request.request_id].values() if not e.declined]
        return sorted(volunteered, key=lambda e: (e.received_at, e.agent_id))

    def _evaluate(self, helper: HelperAgent, request: Request, timeout: float | None) -> HelperReply:
        if timeout is None:
            try:
                return helper.consider(request)
            except Exception as exc:  # noqa: BLE001 - helper faults become declines
                logger.warning("helper %s failed on %s: %s", helper.agent_id, request.request_id, exc)
                return HelperReply.decline(f"helper error: {exc}")
        executor = ThreadPoolExecutor(max_workers=1)
        try:
            future = executor.submit(helper.consider, request)
            try:
                return future.result(timeout=timeout)
            except FutureTimeout:
                logger.warning("helper %s timed out on %s", helper.agent_id, request.request_id)
                return HelperReply.decline("timeout")
            except Exception as exc:  # noqa: BLE001
                logger.warning("helper %s failed on %s: %s", helper.agent_id, request.request_id, exc)
                return HelperReply.decline(f"helper error: {exc}")
        finally:
            executor.shutdown(wait=False)

    def entries_for(self, request_id: str) -> list[ResponseEntry]:
        return sorted(
            self.responses.get(request_id, {}).values(),
            key=lambda e: (e.received_at, e.agent_id),
        )
