"""Chat-completion gateway: live HTTP backend, scripted backend, and replay.

Every model call in the system goes through a :class:`Gateway`, which records
the full exchange to an append-only JSON-lines transcript. The scripted and
replay backends make whole runs deterministic and byte-reproducible.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence, TypeVar

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.1
DEFAULT_MAX_TOKENS = 8192
MAX_RETRIES = 3  # a live call is attempted at most 1 + MAX_RETRIES times


class GatewayError(Exception):
    """Base class for gateway failures."""


class BackendError(GatewayError):
    """Network/HTTP failure that survived the retry policy."""


class ScriptExhausted(GatewayError):
    """A scripted or replay backend has no next reply."""


class StructuredOutputError(GatewayError):
    """The model failed to produce parseable structured output twice."""

    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text


class ParseError(ValueError):
    """Raised by reply parsers handed to :meth:`Gateway.complete_structured`."""


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatTurn:
    role: Role
    content: str

    def as_dict(self) -> dict:
        return {"role": self.role.value, "content": self.content}

    @classmethod
    def system(cls, content: str) -> "ChatTurn":
        return cls(Role.SYSTEM, content)

    @classmethod
    def user(cls, content: str) -> "ChatTurn":
        return cls(Role.USER, content)

    @classmethod
    def assistant(cls, content: str) -> "ChatTurn":
        return cls(Role.ASSISTANT, content)


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    def as_dict(self) -> dict:
        return {"temperature": self.temperature, "max_tokens": self.max_tokens}


class Backend(Protocol):
    """A chat-completion provider. Implementations must be thread-safe."""

    name: str

    def complete(self, turns: Sequence[ChatTurn], params: SamplingParams, caller: str) -> str:
        """Return the assistant reply text for the given conversation."""
        ...


class LiveBackend:
    """OpenAI-compatible chat-completions HTTP backend.

    Retries transient failures with exponential backoff; the 4th consecutive
    failure surfaces as :class:`BackendError`. The token cap is always sent.
    """

    name = "live"

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str = "default",
        timeout: float = 120.0,
        sleep: Callable[[float], None] = time.sleep,
        post: Callable | None = None,
    ):
        self.base_url = (base_url or os.environ.get("LAKEBOARD_API_BASE", "")).rstrip("/")
        self.api_key = api_key or os.environ.get("LAKEBOARD_API_KEY", "")
        if not self.base_url:
            raise ValueError("live backend requires a base URL (or LAKEBOARD_API_BASE)")
        self.model = model
        self.timeout = timeout
        self._sleep = sleep
        if post is None:
            import requests

            post = requests.post
        self._post = post

    def complete(self, turns: Sequence[ChatTurn], params: SamplingParams, caller: str) -> str:
        payload = {
            "model": self.model,
            "messages": [t.as_dict() for t in turns],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = f"{self.base_url}/chat/completions"

        last_error: Exception | None = None
        for attempt in range(1 + MAX_RETRIES):
            if attempt:
                self._sleep(0.5 * 2 ** (attempt - 1))
            try:
                resp = self._post(url, json=payload, headers=headers, timeout=self.timeout)
                status = getattr(resp, "status_code", 200)
                if status >= 400:
                    raise RuntimeError(f"HTTP {status}: {getattr(resp, 'text', '')[:200]}")
                body = resp.json()
                return body["choices"][0]["message"]["content"]
            except Exception as exc:  # noqa: BLE001 - every failure is retryable here
                last_error = exc
                logger.warning("live backend attempt %d failed: %s", attempt + 1, exc)
        raise BackendError(f"live backend failed after {1 + MAX_RETRIES} attempts: {last_error}")


class ScriptedBackend:
    """Deterministic backend that plays back canned replies.

    Replies can be a single shared queue or keyed per caller, so concurrent
    agents each consume their own script. Raises :class:`ScriptExhausted`
    when a queue runs dry.
    """

    name = "scripted"

    def __init__(self, script: Iterable[str] = ()):
        self._queue: deque[str] = deque(script)
        self._by_caller: dict[str, deque[str]] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_map(cls, scripts: dict[str, Iterable[str]]) -> "ScriptedBackend":
        backend = cls()
        backend._by_caller = {caller: deque(replies) for caller, replies in scripts.items()}
        return backend

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        """Load a script fixture: JSON list of replies, or map caller -> list."""
        data = json.loads(Path(path).read_text())
        if isinstance(data, list):
            return cls(data)
        return cls.from_map(data)

    def remaining(self, caller: str | None = None) -> int:
        if caller is not None:
            return len(self._by_caller.get(caller, ()))
        return len(self._queue) + sum(len(q) for q in self._by_caller.values())

    def complete(self, turns: Sequence[ChatTurn], params: SamplingParams, caller: str) -> str:
        with self._lock:
            queue = self._by_caller.get(caller)
            if queue is not None:
                if not queue:
                    raise ScriptExhausted(f"scripted backend has no next reply for caller {caller!r}")
                return queue.popleft()
            if not self._queue:
                raise ScriptExhausted(f"scripted backend queue exhausted (caller {caller!r})")
            return self._queue.popleft()


class ReplayBackend:
    """Replays a recorded transcript, verifying prompts match the recording."""

    name = "replay"

    def __init__(self, records: Sequence[dict], strict: bool = True):
        self._records = list(records)
        self._pos = 0
        self._strict = strict
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path, strict: bool = True) -> "ReplayBackend":
        return cls(load_transcript(path), strict=strict)

    def complete(self, turns: Sequence[ChatTurn], params: SamplingParams, caller: str) -> str:
        with self._lock:
            if self._pos >= len(self._records):
                raise ScriptExhausted("replay transcript exhausted")
            record = self._records[self._pos]
            self._pos += 1
        if self._strict:
            recorded = record["turns"]
            live = [t.as_dict() for t in turns]
            if recorded != live:
                raise BackendError(
                    f"replay divergence at seq {record.get('seq')}: "
                    f"prompt does not match the recording"
                )
        return record["reply"]


@dataclass
class TranscriptRecord:
    seq: int
    backend: str
    params: dict
    turns: list[dict]
    reply: str
    caller: str
    ts: float

    def as_dict(self) -> dict:
        return {
            "seq": self.seq,
            "backend": self.backend,
            "params": self.params,
            "turns": self.turns,
            "reply": self.reply,
            "caller": self.caller,
            "ts": self.ts,
        }


def load_transcript(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


class Gateway:
    """Uniform completion interface with transcript recording.

    All writes to the transcript are serialized; backends themselves may be
    called concurrently.
    """

    def __init__(
        self,
        backend: Backend,
        transcript_path: str | Path | None = None,
        default_params: SamplingParams | None = None,
    ):
        self.backend = backend
        self.default_params = default_params or SamplingParams()
        self.records: list[TranscriptRecord] = []
        self._transcript_path = Path(transcript_path) if transcript_path else None
        self._lock = threading.Lock()
        self._seq = 0
        if self._transcript_path:
            self._transcript_path.parent.mkdir(parents=True, exist_ok=True)
            # truncate any stale transcript from a previous run
            self._transcript_path.write_text("")

    @property
    def call_count(self) -> int:
        return len(self.records)

    def complete(
        self,
        turns: Sequence[ChatTurn],
        params: SamplingParams | None = None,
        caller: str = "main",
    ) -> ChatTurn:
        if not turns:
            raise ValueError("turns must be non-empty")
        if turns[0].role not in (Role.SYSTEM, Role.USER):
            raise ValueError("first turn must be a system or user turn")
        params = params or self.default_params
        reply = self.backend.complete(turns, params, caller)
        if not reply:
            raise BackendError(f"backend {self.backend.name!r} returned an empty assistant turn")
        self._record(turns, params, reply, caller)
        return ChatTurn.assistant(reply)

    T = TypeVar("T")

    def complete_structured(
        self,
        turns: Sequence[ChatTurn],
        parse: Callable[[str], "Gateway.T"],
        params: SamplingParams | None = None,
        caller: str = "main",
        error_hint: str = "Your previous reply could not be parsed.",
    ) -> "Gateway.T":
        """Complete and parse; on a parse failure, re-ask exactly once.

        The re-ask appends the failed reply plus an error-explaining user turn.
        A second failure raises :class:`StructuredOutputError` carrying the
        raw text so callers can apply their own fallback.
        """
        reply = self.complete(turns, params, caller)
        try:
            return parse(reply.content)
        except ParseError as first_error:
            retry_turns = list(turns) + [
                reply,
                ChatTurn.user(f"{error_hint} Error: {first_error}. Reply again in the exact required format."),
            ]
            second = self.complete(retry_turns, params, caller)
            try:
                return parse(second.content)
            except ParseError as second_error:
                raise StructuredOutputError(
                    f"unparseable model output after one re-ask: {second_error}",
                    raw_text=second.content,
                ) from second_error

    def _record(self, turns: Sequence[ChatTurn], params: SamplingParams, reply: str, caller: str) -> None:
        with self._lock:
            record = TranscriptRecord(
                seq=self._seq,
                backend=self.backend.name,
                params=params.as_dict(),
                turns=[t.as_dict() for t in turns],
                reply=reply,
                caller=caller,
                ts=time.time(),
            )
            self._seq += 1
            self.records.append(record)
            if self._transcript_path:
                with open(self._transcript_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record.as_dict(), ensure_ascii=False) + "\n")

    def records_for(self, caller: str) -> list[TranscriptRecord]:
        return [r for r in self.records if r.caller == caller]
