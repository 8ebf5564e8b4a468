"""Blackboard multi-agent system for data-science tasks over data lakes.

A main agent solves a query through a bounded act-observe loop; instead of
tasking specific helpers it posts requests on a shared blackboard, and file
agents (one per cluster of lake files) plus a web-search agent volunteer
responses on a response board only the main agent reads. The final artifact
is a program, scored both on its output and on whether it discovered the
right source files.
"""

__version__ = "0.1.0"

from .blackboard import Blackboard, HelperReply, Request, ResponseEntry
from .evaluation import DiscoveryScore, EvalReport, TaskSpec, score_discovery
from .gateway import ChatTurn, Gateway, SamplingParams, ScriptedBackend
from .lake import LakeManifest, ingest_manifest
from .main_agent import ActionKind, TaskResult, run_task
from .sandbox import CandidateProgram, ExecutionResult, execute, extract_file_references

__all__ = [
    "ActionKind",
    "Blackboard",
    "CandidateProgram",
    "ChatTurn",
    "DiscoveryScore",
    "EvalReport",
    "ExecutionResult",
    "Gateway",
    "HelperReply",
    "LakeManifest",
    "Request",
    "ResponseEntry",
    "SamplingParams",
    "ScriptedBackend",
    "TaskResult",
    "TaskSpec",
    "execute",
    "extract_file_references",
    "ingest_manifest",
    "run_task",
    "score_discovery",
    "__version__",
]
