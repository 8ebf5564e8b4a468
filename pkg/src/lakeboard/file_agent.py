"""File agents: one autonomous helper per cluster of lake files.

Offline, an agent inspects a representative subset of its cluster and writes
a structural analysis. Online, it watches the blackboard and volunteers a
file plan when a request matches what it holds. An agent only ever names
files from its own cluster, and its prompts are built exclusively from the
request, its own analysis, and its own previews.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

from .blackboard import HelperReply, Request
from .clustering import ClusterAssignment
from .gateway import ChatTurn, Gateway, GatewayError, ParseError, StructuredOutputError
from .lake import LakeFile, LakeManifest
from .preview import PreviewStore

logger = logging.getLogger(__name__)

MAX_INSPECT = 10
PLAN_SAMPLE_ROWS = 5

_FENCE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)

ANALYST_ROLE = (
    "You are a data-file specialist responsible for one group of files in a "
    "data lake. You study how your files are structured so you can later "
    "tell a coordinating agent which of them answer a given need."
)

SELECT_TEMPLATE = (
    "{role}\n\n"
    "Your group is labeled {label!r} and contains these files:\n{file_list}\n\n"
    "Pick up to {max_inspect} files to inspect in detail. When several file "
    "names clearly indicate the same kind of data over different periods, a "
    "small representative sample is enough.\n"
    "Reply with a single fenced json list of the chosen file names, e.g.\n"
    "```json\n[\"first.csv\", \"second.csv\"]\n```"
)

ANALYZE_TEMPLATE = (
    "{role}\n\n"
    "Your group is labeled {label!r} and contains these files:\n{file_list}\n\n"
    "Here are previews of the files you chose to inspect:\n\n{previews}\n\n"
    "Write a concise structural analysis of this group: what each file "
    "contains, how the files relate, what loading or preprocessing steps "
    "they need, and anything unusual to watch for."
)

CONSIDER_TEMPLATE = (
    "{role}\n\n"
    "Your earlier analysis of your file group {label!r}:\n{analysis}\n\n"
    "A request has been posted on the shared board:\n---\n{request}\n---\n\n"
    "Decide whether files in YOUR group can contribute to this request. "
    "Answer on the first line with exactly YES or NO.\n"
    "If YES, continue with exactly these sections:\n"
    "FILES: <comma-separated file paths from your group>\n"
    "LOAD:\n<python snippet showing how to load them>\n"
    "PREPROCESSING:\n<required preprocessing or caveats>"
)

DIRECT_TEMPLATE = (
    "{role}\n\n"
    "Your earlier analysis of your file group {label!r}:\n{analysis}\n\n"
    "You have been directly assigned this instruction and must respond:\n"
    "---\n{request}\n---\n\n"
    "Reply with exactly these sections:\n"
    "FILES: <comma-separated file paths from your group>\n"
    "LOAD:\n<python snippet showing how to load them>\n"
    "PREPROCESSING:\n<required preprocessing or caveats>"
)


@dataclass
class ClusterAnalysis:
    cluster_id: str
    inspected_file_ids: list[str]
    analysis_text: str
    created_at: float

    def as_dict(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "inspected_file_ids": self.inspected_file_ids,
            "analysis_text": self.analysis_text,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClusterAnalysis":
        return cls(
            cluster_id=data["cluster_id"],
            inspected_file_ids=list(data["inspected_file_ids"]),
            analysis_text=data["analysis_text"],
            created_at=data["created_at"],
        )


@dataclass
class FilePlan:
    relevant_file_ids: list[str] = field(default_factory=list)
    load_instructions: str = ""
    preprocessing_notes: str = ""
    sample_excerpts: str = ""

    def as_payload(self, manifest: LakeManifest) -> dict:
        return {
            "relevant_file_ids": self.relevant_file_ids,
            "relevant_paths": [manifest.by_id(i).path for i in self.relevant_file_ids],
            "load_instructions": self.load_instructions,
            "preprocessing_notes": self.preprocessing_notes,
            "sample_excerpts": self.sample_excerpts,
        }


def render_file_plan(payload: dict) -> str:
    """Flatten a file-plan payload into observation text for the main agent."""
    parts = ["relevant files: " + ", ".join(payload.get("relevant_paths", []))]
    if payload.get("load_instructions"):
        parts.append("how to load:\n" + payload["load_instructions"])
    if payload.get("preprocessing_notes"):
        parts.append("preprocessing:\n" + payload["preprocessing_notes"])
    if payload.get("sample_excerpts"):
        parts.append("samples:\n" + payload["sample_excerpts"])
    return "\n".join(parts)


def _parse_name_list(text: str) -> list[str]:
    match = _FENCE.search(text)
    if not match:
        raise ParseError("no fenced json list found")
    try:
        data = json.loads(match.group(1))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid json: {exc}") from exc
    if not isinstance(data, list):
        raise ParseError("expected a json list of file names")
    return [str(item) for item in data]


_SECTION_HEADERS = ("FILES:", "LOAD:", "PREPROCESSING:")


def _parse_plan_sections(text: str) -> dict[str, str]:
    sections: dict[str, list[str]] = {}
    current: str | None = None
    for line in text.splitlines():
        stripped = line.strip()
        header = next((h for h in _SECTION_HEADERS if stripped.upper().startswith(h)), None)
        if header:
            current = header
            remainder = stripped[len(header) :].strip()
            sections[current] = [remainder] if remainder else []
        elif current:
            sections[current].append(line)
    return {key: "\n".join(lines).strip() for key, lines in sections.items()}


class FileAgent:
    """Helper agent owning one cluster of the data lake."""

    def __init__(
        self,
        cluster: ClusterAssignment,
        manifest: LakeManifest,
        gateway: Gateway,
        previews: PreviewStore,
        max_inspect: int = MAX_INSPECT,
        cache_dir: str | Path | None = None,
    ):
        self.cluster = cluster
        self.manifest = manifest
        self.gateway = gateway
        self.previews = previews
        self.max_inspect = max_inspect
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.agent_id = f"file:{cluster.cluster_id}"
        self.analysis: ClusterAnalysis | None = None

    # -- offline phase -----------------------------------------------------

    def _members(self) -> list[LakeFile]:
        return [self.manifest.by_id(i) for i in self.cluster.member_file_ids]

    def _file_list(self) -> str:
        return "\n".join(f"- {f.path}" for f in self._members())

    def _cluster_content_key(self) -> str:
        h = hashlib.sha256()
        for f in sorted(self._members(), key=lambda f: f.file_id):
            h.update(f.file_id.encode())
            h.update(self.previews.file_hash(f).encode())
        return h.hexdigest()

    def offline_analyze(self) -> ClusterAnalysis:
        """Two-step analysis: choose files to inspect, then study their previews.

        Cached by cluster content hash, so an unchanged cluster costs zero
        model calls on re-run.
        """
        if not self.cluster.member_file_ids:
            raise ValueError(f"cluster {self.cluster.cluster_id} is empty")
        cache_file = None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            cache_file = self.cache_dir / f"analysis-{self._cluster_content_key()}.json"
            if cache_file.exists():
                self.analysis = ClusterAnalysis.from_dict(json.loads(cache_file.read_text()))
                return self.analysis

        inspected = self._select_files()
        previews = "\n\n".join(
            f"=== {f.path} ===\n{self.previews.get(f).rendered_text}" for f in inspected
        )
        reply = self.gateway.complete(
            [
                ChatTurn.user(
                    ANALYZE_TEMPLATE.format(
                        role=ANALYST_ROLE,
                        label=self.cluster.label,
                        file_list=self._file_list(),
                        previews=previews,
                    )
                )
            ],
            caller=self.agent_id,
        )
        self.analysis = ClusterAnalysis(
            cluster_id=self.cluster.cluster_id,
            inspected_file_ids=[f.file_id for f in inspected],
            analysis_text=reply.content,
            created_at=time.time(),
        )
        if cache_file:
            cache_file.write_text(json.dumps(self.analysis.as_dict()))
        return self.analysis

    def _select_files(self) -> list[LakeFile]:
        members = self._members()
        if len(members) <= 1:
            return members
        try:
            names = self.gateway.complete_structured(
                [
                    ChatTurn.user(
                        SELECT_TEMPLATE.format(
                            role=ANALYST_ROLE,
                            label=self.cluster.label,
                            file_list=self._file_list(),
                            max_inspect=self.max_inspect,
                        )
                    )
                ],
                parse=_parse_name_list,
                caller=self.agent_id,
                error_hint="The file selection could not be parsed.",
            )
        except StructuredOutputError:
            logger.warning("%s: unparseable selection, inspecting first %d files", self.agent_id, self.max_inspect)
            return members[: self.max_inspect]
        chosen = self._resolve_names(names)
        if not chosen:
            chosen = members
        return chosen[: self.max_inspect]

    def _resolve_names(self, names: list[str]) -> list[LakeFile]:
        members = self._members()
        by_path = {f.path: f for f in members}
        by_name: dict[str, LakeFile] = {}
        for f in members:
            by_name.setdefault(f.basename, f)
        resolved: list[LakeFile] = []
        for name in names:
            f = by_path.get(name) or by_name.get(name.rsplit("/", 1)[-1])
            if f is None:
                logger.info("%s: ignoring file outside own cluster: %s", self.agent_id, name)
            elif f not in resolved:
                resolved.append(f)
        return resolved

    # -- online phase ------------------------------------------------------

    def consider(self, request: Request) -> HelperReply:
        """Volunteer a file plan when the request matches this cluster, else decline."""
        if self.analysis is None:
            return HelperReply.decline("cluster not analyzed yet")
        try:
            reply = self.gateway.complete(
                [
                    ChatTurn.user(
                        CONSIDER_TEMPLATE.format(
                            role=ANALYST_ROLE,
                            label=self.cluster.label,
                            analysis=self.analysis.analysis_text,
                            request=request.body,
                        )
                    )
                ],
                caller=self.agent_id,
            )
        except GatewayError as exc:
            return HelperReply.decline(f"model failure: {exc}")
        verdict, _, rest = reply.content.strip().partition("\n")
        verdict = verdict.strip().upper().rstrip(".")
        if verdict == "NO":
            return HelperReply.decline("agent declined")
        if verdict != "YES":
            return HelperReply.decline(f"unparseable verdict line: {verdict[:40]!r}")
        return self._plan_reply(rest)

    def respond_directly(self, instruction: str) -> HelperReply:
        """Produce a plan for a directly assigned instruction (no volunteering)."""
        if self.analysis is None:
            return HelperReply.decline("cluster not analyzed yet")
        try:
            reply = self.gateway.complete(
                [
                    ChatTurn.user(
                        DIRECT_TEMPLATE.format(
                            role=ANALYST_ROLE,
                            label=self.cluster.label,
                            analysis=self.analysis.analysis_text,
                            request=instruction,
                        )
                    )
                ],
                caller=self.agent_id,
            )
        except GatewayError as exc:
            return HelperReply.decline(f"model failure: {exc}")
        return self._plan_reply(reply.content)

    def _plan_reply(self, text: str) -> HelperReply:
        sections = _parse_plan_sections(text)
        names = [n.strip() for n in sections.get("FILES:", "").split(",") if n.strip()]
        owned = self._resolve_names(names)
        dropped = len(names) - len(owned)
        plan = FilePlan(
            relevant_file_ids=[f.file_id for f in owned],
            load_instructions=sections.get("LOAD:", ""),
            preprocessing_notes=sections.get("PREPROCESSING:", ""),
            sample_excerpts=self._samples(owned),
        )
        reply = HelperReply.file_plan(plan.as_payload(self.manifest))
        if dropped:
            reply.diagnostic = f"dropped {dropped} file name(s) outside this agent's cluster"
        return reply

    def _samples(self, files: list[LakeFile]) -> str:
        parts = []
        for f in files:
            parts.append(f"=== {f.path} ===\n{self.previews.sample_rows(f, PLAN_SAMPLE_ROWS)}")
        return "\n\n".join(parts)
