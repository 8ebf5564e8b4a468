"""Comparison modes sharing the main-agent loop: master-slave and RAG.

Master-slave replaces the broadcast with direct invocation of a named helper;
RAG stuffs the top-5 retrieved file previews into the initial prompt and
restricts help to the search agent. Grammar, budget, and sandbox are the
same as the blackboard mode, so only the help mechanism differs.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .blackboard import HelperReply, ResponseKind
from .file_agent import FileAgent, render_file_plan
from .gateway import Gateway
from .lake import LakeManifest
from .main_agent import (
    ActionKind,
    ProgramRunner,
    TaskResult,
    build_system_prompt,
    cap_observation,
    run_task,
)
from .preview import PreviewStore
from .search_agent import SearchAgent, render_web_findings

logger = logging.getLogger(__name__)

RAG_TOP_K = 5
EMBEDDING_DIM = 256


class EmbedderError(RuntimeError):
    """A single text could not be embedded."""


# ---------------------------------------------------------------------------
# master-slave
# ---------------------------------------------------------------------------


@dataclass
class AgentDirectory:
    """Static listing of helper identities and capabilities for direct invocation."""

    entries: list[tuple[str, str]] = field(default_factory=list)

    @classmethod
    def for_helpers(cls, file_agents: Sequence[FileAgent], search_agent: SearchAgent | None) -> "AgentDirectory":
        entries = [
            (
                agent.agent_id,
                f"file agent for cluster {agent.cluster.label!r} "
                f"({len(agent.cluster.member_file_ids)} files)",
            )
            for agent in file_agents
        ]
        if search_agent is not None:
            entries.append((search_agent.agent_id, "web-search agent for general knowledge"))
        return cls(entries=entries)

    def render(self) -> str:
        return "\n".join(f"- {agent_id}: {description}" for agent_id, description in self.entries)


def render_reply(agent_id: str, reply: HelperReply) -> str:
    if reply.declined:
        reason = reply.diagnostic or "no reason given"
        return f"[{agent_id}] could not help: {reason}"
    payload = reply.payload or {}
    if reply.kind is ResponseKind.FILE_PLAN:
        body = render_file_plan(payload)
    elif reply.kind is ResponseKind.WEB_FINDINGS:
        body = render_web_findings(payload)
    else:
        body = str(payload)
    return f"[{agent_id}] ({reply.kind.value if reply.kind else 'response'})\n{body}"


class MasterSlaveChannel:
    """Direct invocation: the named helper must respond; nobody else sees it."""

    help_kind = ActionKind.INVOKE_AGENT

    def __init__(self, directory: AgentDirectory, helpers: Sequence[object]):
        self.directory = directory
        self._helpers = {h.agent_id: h for h in helpers}
        self.invocations: list[tuple[str, str]] = []

    def observe_help(self, payload: str, agent_id: str | None, task_id: str, step: int) -> str:
        if agent_id is None or agent_id not in self._helpers:
            known = ", ".join(sorted(self._helpers))
            return f"Unknown agent id {agent_id!r}. Known agents: {known}."
        self.invocations.append((agent_id, payload))
        reply = self._helpers[agent_id].respond_directly(payload)
        return cap_observation(render_reply(agent_id, reply))


MASTER_SLAVE_MENU = (
    "- planning: break the problem into sub-problems and outline a plan.\n"
    "- reasoning: reason about one aspect of the problem or of earlier observations.\n"
    "- execute_code: run a python snippet against the data lake (cwd is the "
    "lake root); you will observe its stdout or error output.\n"
    "- invoke_agent: assign a task to one specific helper agent. The payload "
    "must start with a line 'AGENT: <agent id>' followed by the instruction. "
    "The named agent must respond.\n"
    "- answer: give the final, complete python program that prints the "
    "answer. This ends the session.\n\n"
    "Available agents:\n{directory}"
)


def run_master_slave(
    query: str,
    task_id: str,
    gateway: Gateway,
    directory: AgentDirectory,
    helpers: Sequence[object],
    executor: ProgramRunner,
    budget: int,
    lake_summary: str,
) -> TaskResult:
    """Run the loop with direct agent invocation instead of broadcasts."""
    channel = MasterSlaveChannel(directory, helpers)
    prompt = build_system_prompt(
        query,
        lake_summary,
        budget,
        menu=MASTER_SLAVE_MENU.format(directory=directory.render()),
        tags="planning, reasoning, execute_code, invoke_agent, answer",
    )
    return run_task(query, task_id, gateway, channel, executor, budget, prompt)


# ---------------------------------------------------------------------------
# RAG
# ---------------------------------------------------------------------------


class Embedder(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray:
        """A 1-D embedding vector; raise :class:`EmbedderError` on failure."""
        ...


class HashingEmbedder:
    """Deterministic feature-hashed character n-gram embedder (no network)."""

    def __init__(self, dimension: int = EMBEDDING_DIM, ngram: int = 3):
        self.dimension = dimension
        self.ngram = ngram

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float32)
        lowered = text.lower()
        for i in range(max(len(lowered) - self.ngram + 1, 1)):
            gram = lowered[i : i + self.ngram].encode("utf-8", "replace")
            digest = hashlib.md5(gram).digest()
            index = int.from_bytes(digest[:4], "big") % self.dimension
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            vec[index] += sign
        norm = float(np.linalg.norm(vec))
        if norm > 0:
            vec /= norm
        return vec


class HttpEmbedder:
    """OpenAI-compatible /embeddings endpoint."""

    def __init__(self, base_url: str, api_key: str | None = None, model: str = "default", dimension: int = 1024):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model, "input": text},
                headers=headers,
                timeout=60,
            )
            resp.raise_for_status()
            vec = np.asarray(resp.json()["data"][0]["embedding"], dtype=np.float32)
        except Exception as exc:  # noqa: BLE001
            raise EmbedderError(str(exc)) from exc
        norm = float(np.linalg.norm(vec))
        return vec / norm if norm > 0 else vec


@dataclass
class RetrievalIndex:
    file_ids: list[str]
    vectors: np.ndarray  # shape (count, dimension), rows L2-normalized
    name_only: list[str] = field(default_factory=list)  # files embedded from name only

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1]) if self.vectors.size else 0

    @property
    def count(self) -> int:
        return len(self.file_ids)

    def save(self, path: str | Path) -> None:
        header = {
            "dimension": self.dimension,
            "count": self.count,
            "file_ids": self.file_ids,
            "name_only": self.name_only,
        }
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
            fh.write(np.ascontiguousarray(self.vectors, dtype=np.float32).tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "RetrievalIndex":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode("utf-8"))
            raw = fh.read()
        vectors = np.frombuffer(raw, dtype=np.float32).reshape(header["count"], header["dimension"]).copy()
        return cls(file_ids=header["file_ids"], vectors=vectors, name_only=header.get("name_only", []))


def build_index(manifest: LakeManifest, previews: PreviewStore, embedder: Embedder) -> RetrievalIndex:
    """Embed each file from its name plus preview text, one entry per file.

    A per-file embedding failure degrades to a name-only embedding and is
    flagged in the index.
    """
    vectors = np.zeros((len(manifest), embedder.dimension), dtype=np.float32)
    name_only: list[str] = []
    for row, f in enumerate(manifest):
        preview = previews.get(f).rendered_text if not f.unreadable else ""
        try:
            vectors[row] = embedder.embed(f"{f.path}\n{preview}")
        except EmbedderError as exc:
            logger.warning("embedding failed for %s (%s); using name only", f.path, exc)
            name_only.append(f.file_id)
            vectors[row] = embedder.embed(f.path)
    return RetrievalIndex(file_ids=list(manifest.file_ids), vectors=vectors, name_only=name_only)


def top_k(index: RetrievalIndex, query_vector: np.ndarray, k: int = RAG_TOP_K) -> list[str]:
    """Top-k file ids by cosine similarity; ties break in manifest order."""
    if index.count == 0:
        return []
    scores = index.vectors @ query_vector.astype(np.float32)
    order = np.argsort(-scores, kind="stable")
    return [index.file_ids[i] for i in order[: min(k, index.count)]]


class SearchOnlyChannel:
    """RAG's restricted help action: direct requests to the search agent only."""

    help_kind = ActionKind.REQUEST_HELP

    def __init__(self, search_agent: SearchAgent | None):
        self.search_agent = search_agent

    def observe_help(self, payload: str, agent_id: str | None, task_id: str, step: int) -> str:
        if self.search_agent is None:
            return "No search agent is available in this run."
        reply = self.search_agent.respond_directly(payload)
        return cap_observation(render_reply(self.search_agent.agent_id, reply))


RAG_MENU = (
    "- planning: break the problem into sub-problems and outline a plan.\n"
    "- reasoning: reason about one aspect of the problem or of earlier observations.\n"
    "- execute_code: run a python snippet against the data lake (cwd is the "
    "lake root); you will observe its stdout or error output.\n"
    "- request_help: ask the web-search agent for general knowledge from the "
    "web. It does not handle questions about local files.\n"
    "- answer: give the final, complete python program that prints the "
    "answer. This ends the session."
)


def rag_context(manifest: LakeManifest, previews: PreviewStore, index: RetrievalIndex, query: str, embedder: Embedder) -> str:
    """The retrieved-files block placed in the RAG initial prompt."""
    chosen = top_k(index, embedder.embed(query), RAG_TOP_K)
    blocks = []
    for file_id in chosen:
        f = manifest.by_id(file_id)
        blocks.append(f"=== {f.path} ===\n{previews.get(f).rendered_text}")
    return "Retrieved files (address and preview):\n\n" + "\n\n".join(blocks)


def run_rag(
    query: str,
    task_id: str,
    gateway: Gateway,
    manifest: LakeManifest,
    previews: PreviewStore,
    index: RetrievalIndex,
    embedder: Embedder,
    search_agent: SearchAgent | None,
    executor: ProgramRunner,
    budget: int,
) -> TaskResult:
    """Run the loop with top-k retrieved previews in the initial prompt."""
    channel = SearchOnlyChannel(search_agent)
    prompt = build_system_prompt(
        query,
        rag_context(manifest, previews, index, query, embedder),
        budget,
        menu=RAG_MENU,
    )
    return run_task(query, task_id, gateway, channel, executor, budget, prompt)
