"""Name-only partitioning of the lake into clusters of related files.

The model sees file names, never file bytes. Whatever it returns is coerced
into a true partition: files it omits (or that fail to match) land in a
synthetic ``unclustered`` category. Without a model, a deterministic
one-cluster-per-extension fallback is used and flagged.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from .gateway import ChatTurn, Gateway, GatewayError, ParseError, StructuredOutputError
from .lake import LakeManifest

logger = logging.getLogger(__name__)

UNCLUSTERED_LABEL = "unclustered"

CLUSTERING_SYSTEM = (
    "You organize files in a data lake. Group the files into clusters of "
    "related files based only on their names, and give each cluster a short "
    "human-readable category label. Every file should belong to exactly one "
    "cluster. Choose however many clusters fit the data."
)

CLUSTERING_INSTRUCTIONS = (
    "Reply with a single fenced json block of the form:\n"
    "```json\n"
    '{"clusters": [{"label": "<category name>", "files": ["<file name>", ...]}, ...]}\n'
    "```\n"
    "Use the file names exactly as given."
)

_FENCE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)


@dataclass
class ClusterAssignment:
    cluster_id: str
    label: str
    member_file_ids: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "label": self.label,
            "member_file_ids": list(self.member_file_ids),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClusterAssignment":
        return cls(data["cluster_id"], data["label"], list(data["member_file_ids"]))


def clustering_prompt(manifest: LakeManifest) -> list[ChatTurn]:
    names = "\n".join(f"- {f.path}" for f in manifest)
    return [
        ChatTurn.system(CLUSTERING_SYSTEM),
        ChatTurn.user(f"Files:\n{names}\n\n{CLUSTERING_INSTRUCTIONS}"),
    ]


def parse_grouping(text: str) -> list[tuple[str, list[str]]]:
    """Parse the fenced grouping reply into ``[(label, [file names])]``."""
    match = _FENCE.search(text)
    if not match:
        raise ParseError("no fenced json block found")
    try:
        data = json.loads(match.group(1))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid json: {exc}") from exc
    clusters = data.get("clusters") if isinstance(data, dict) else None
    if not isinstance(clusters, list):
        raise ParseError('expected an object with a "clusters" list')
    groups = []
    for item in clusters:
        if not isinstance(item, dict) or "label" not in item or "files" not in item:
            raise ParseError("each cluster needs a label and a files list")
        groups.append((str(item["label"]), [str(name) for name in item["files"]]))
    return groups


def _partition_from_grouping(
    manifest: LakeManifest, groups: list[tuple[str, list[str]]]
) -> list[ClusterAssignment]:
    by_path = {f.path: f.file_id for f in manifest}
    by_name: dict[str, list[str]] = {}
    for f in manifest:
        by_name.setdefault(f.basename, []).append(f.file_id)

    assigned: set[str] = set()
    clusters: list[ClusterAssignment] = []
    for index, (label, names) in enumerate(groups):
        members = []
        for name in names:
            candidates = [by_path[name]] if name in by_path else by_name.get(name, [])
            for file_id in candidates:
                if file_id not in assigned:
                    assigned.add(file_id)
                    members.append(file_id)
        if members:
            clusters.append(ClusterAssignment(f"c{index:03d}", label, members))

    leftovers = [f.file_id for f in manifest if f.file_id not in assigned]
    if leftovers:
        logger.info("sweeping %d unassigned files into %r", len(leftovers), UNCLUSTERED_LABEL)
        clusters.append(ClusterAssignment(f"c{len(groups):03d}", UNCLUSTERED_LABEL, leftovers))
    return clusters


def fallback_partition(manifest: LakeManifest) -> list[ClusterAssignment]:
    """One cluster per file extension; deterministic, used when no model is available."""
    by_ext: dict[str, list[str]] = {}
    for f in manifest:
        ext = f.path.rsplit(".", 1)[-1].lower() if "." in f.basename else "(none)"
        by_ext.setdefault(ext, []).append(f.file_id)
    return [
        ClusterAssignment(f"c{i:03d}", f"{ext} files (fallback)", members)
        for i, (ext, members) in enumerate(sorted(by_ext.items()))
    ]


def cluster_lake(manifest: LakeManifest, gateway: Gateway | None) -> list[ClusterAssignment]:
    """Partition the manifest into clusters via name-only model grouping.

    The result is always a partition of the manifest, also under the
    extension fallback taken when the model is unavailable.
    """
    if len(manifest) == 0:
        raise ValueError("cannot cluster an empty manifest")
    clusters: list[ClusterAssignment] | None = None
    if gateway is not None:
        try:
            groups = gateway.complete_structured(
                clustering_prompt(manifest),
                parse=parse_grouping,
                caller="clustering",
                error_hint="The grouping could not be parsed.",
            )
            clusters = _partition_from_grouping(manifest, groups)
        except StructuredOutputError:
            logger.warning("grouping unparseable after re-ask; using extension fallback")
        except GatewayError as exc:
            logger.warning("model unavailable for clustering (%s); using extension fallback", exc)
    if clusters is None:
        clusters = fallback_partition(manifest)
    apply_assignments(manifest, clusters)
    return clusters


def apply_assignments(manifest: LakeManifest, clusters: list[ClusterAssignment]) -> None:
    by_id = {f.file_id: f for f in manifest}
    for cluster in clusters:
        for file_id in cluster.member_file_ids:
            by_id[file_id].cluster_id = cluster.cluster_id


def verify_partition(manifest: LakeManifest, clusters: list[ClusterAssignment]) -> None:
    """Raise if the clusters are not a partition of the manifest."""
    seen: set[str] = set()
    for cluster in clusters:
        if not cluster.member_file_ids:
            raise ValueError(f"cluster {cluster.cluster_id} is empty")
        overlap = seen.intersection(cluster.member_file_ids)
        if overlap:
            raise ValueError(f"files in more than one cluster: {sorted(overlap)}")
        seen.update(cluster.member_file_ids)
    missing = set(manifest.file_ids) - seen
    if missing:
        raise ValueError(f"files missing from all clusters: {sorted(missing)}")
    extra = seen - set(manifest.file_ids)
    if extra:
        raise ValueError(f"clusters reference unknown files: {sorted(extra)}")


def save_clusters(clusters: list[ClusterAssignment], path: str | Path) -> None:
    Path(path).write_text(json.dumps([c.as_dict() for c in clusters], indent=2) + "\n")


def load_clusters(path: str | Path) -> list[ClusterAssignment]:
    return [ClusterAssignment.from_dict(d) for d in json.loads(Path(path).read_text())]
