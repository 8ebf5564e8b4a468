"""The main agent: a bounded reason-act-observe loop ending in a program.

One rigid action grammar is shared by every mode; the modes differ only in
how the help action is routed (broadcast, direct invocation, or search-only),
which keeps comparisons between them controlled.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol

from .blackboard import ResponseEntry, ResponseKind
from .file_agent import render_file_plan
from .gateway import ChatTurn, Gateway, GatewayError, ParseError
from .sandbox import CandidateProgram, ProgramRunner
from .search_agent import render_web_findings

logger = logging.getLogger(__name__)

OBSERVATION_CHAR_CAP = 16_384
TRUNCATION_BANNER = "\n[observation truncated]"

PLAN_ACK = "Plan acknowledged. Proceed with your next action."
REASONING_ACK = "Reasoning acknowledged. Continue."
NO_RESPONSES_SENTINEL = "No helper agents responded to this request."

_FENCE = re.compile(r"```(?:python)?\s*\n(.*?)```", re.DOTALL)
_ACTION_LINE = re.compile(r"^\s*ACTION:\s*([A-Za-z_]+)\s*$", re.MULTILINE | re.IGNORECASE)


class ActionKind(str, Enum):
    PLANNING = "Planning"
    REASONING = "Reasoning"
    EXECUTE_CODE = "ExecuteCode"
    REQUEST_HELP = "RequestHelp"
    INVOKE_AGENT = "InvokeAgent"
    ANSWER = "Answer"


_TAGS = {
    "planning": ActionKind.PLANNING,
    "reasoning": ActionKind.REASONING,
    "execute_code": ActionKind.EXECUTE_CODE,
    "request_help": ActionKind.REQUEST_HELP,
    "invoke_agent": ActionKind.INVOKE_AGENT,
    "answer": ActionKind.ANSWER,
}


class TerminationReason(str, Enum):
    ANSWER = "Answer"
    BUDGET_EXHAUSTED = "BudgetExhausted"
    FATAL = "Fatal"


class UnparseableAction(ParseError):
    """The assistant text does not contain a recognizable action."""


@dataclass
class ParsedAction:
    kind: ActionKind
    payload: str
    agent_id: str | None = None
    diagnostics: list[str] = field(default_factory=list)


@dataclass
class ActionRecord:
    step: int
    kind: ActionKind
    payload: str
    observation: str

    def as_dict(self) -> dict:
        return {
            "step": self.step,
            "kind": self.kind.value,
            "payload": self.payload,
            "observation": self.observation,
        }


@dataclass
class TaskResult:
    task_id: str
    program: CandidateProgram | None
    history: list[ActionRecord]
    terminated_by: TerminationReason
    fallback_program: CandidateProgram | None = None

    @property
    def executable_program(self) -> CandidateProgram | None:
        """The answered program, or the promoted last code block if the budget ran out."""
        return self.program or self.fallback_program


def parse_action(assistant_text: str) -> ParsedAction:
    """Parse one tagged action from assistant text.

    When several ACTION tags appear, the first wins and a diagnostic is
    recorded. Raises :class:`UnparseableAction` when no tag (or no usable
    payload for code-bearing actions) is found.
    """
    if not assistant_text.strip():
        raise UnparseableAction("empty assistant text")
    matches = list(_ACTION_LINE.finditer(assistant_text))
    known = [(m, _TAGS.get(m.group(1).lower())) for m in matches]
    known = [(m, kind) for m, kind in known if kind is not None]
    if not known:
        raise UnparseableAction(
            "no ACTION tag found; expected a line 'ACTION: <planning|reasoning|"
            "execute_code|request_help|invoke_agent|answer>'"
        )
    diagnostics = []
    if len(known) > 1:
        diagnostics.append(f"{len(known)} action tags present; first one wins")
        logger.warning("multiple action tags in one reply; using the first")
    match, kind = known[0]
    payload = assistant_text[match.end() :].strip()

    agent_id = None
    if kind is ActionKind.INVOKE_AGENT:
        lines = payload.splitlines()
        if not lines or not lines[0].strip().upper().startswith("AGENT:"):
            raise UnparseableAction("invoke_agent requires an 'AGENT: <id>' line")
        agent_id = lines[0].split(":", 1)[1].strip()
        payload = "\n".join(lines[1:]).strip()

    if kind in (ActionKind.EXECUTE_CODE, ActionKind.ANSWER):
        fence = _FENCE.search(payload)
        if fence:
            payload = fence.group(1).strip("\n")
        else:
            diagnostics.append("no fenced code block; using raw payload")
        if not payload.strip():
            raise UnparseableAction(f"{kind.value} action carries no code")

    if kind is ActionKind.REQUEST_HELP and not payload.strip():
        raise UnparseableAction("request_help action carries an empty request body")

    return ParsedAction(kind=kind, payload=payload, agent_id=agent_id, diagnostics=diagnostics)


def render_entries(entries: list[ResponseEntry]) -> str:
    """Flatten gathered response-board entries into one observation."""
    if not entries:
        return NO_RESPONSES_SENTINEL
    blocks = []
    for e in entries:
        payload = e.payload or {}
        if e.kind is ResponseKind.FILE_PLAN:
            body = render_file_plan(payload)
        elif e.kind is ResponseKind.WEB_FINDINGS:
            body = render_web_findings(payload)
        else:
            body = str(payload)
        blocks.append(f"[{e.agent_id}] ({e.kind.value if e.kind else 'response'})\n{body}")
    return "\n\n".join(blocks)


class HelpChannel(Protocol):
    """How a mode turns the help action into an observation."""

    help_kind: ActionKind

    def observe_help(self, payload: str, agent_id: str | None, task_id: str, step: int) -> str:
        ...


def cap_observation(text: str, cap: int = OBSERVATION_CHAR_CAP) -> str:
    if len(text) <= cap:
        return text
    return text[: cap - len(TRUNCATION_BANNER)] + TRUNCATION_BANNER


GRAMMAR_BLOCK = (
    "At every step, reply with exactly one action in this format:\n\n"
    "ACTION: <tag>\n"
    "<payload>\n\n"
    "Valid tags: {tags}.\n"
    "For execute_code and answer, the payload must contain a fenced "
    "```python code block."
)

BLACKBOARD_MENU = (
    "- planning: break the problem into sub-problems and outline a plan.\n"
    "- reasoning: reason about one aspect of the problem or of earlier observations.\n"
    "- execute_code: run a python snippet against the data lake (cwd is the "
    "lake root); you will observe its stdout or error output.\n"
    "- request_help: describe the data or information you need. The request "
    "is posted on a shared board; helper agents that hold relevant files or "
    "web access decide on their own whether to reply. Do not address any "
    "specific agent.\n"
    "- answer: give the final, complete python program that prints the "
    "answer. This ends the session."
)

SYSTEM_TEMPLATE = (
    "You are the coordinating data-science agent. Your job is to answer the "
    "question below by producing a final python program that loads what it "
    "needs from the data lake and prints the answer.\n\n"
    "{grammar}\n\n"
    "Available actions:\n{menu}\n\n"
    "You have a budget of {budget} actions in total.\n\n"
    "Question: {query}\n\n"
    "{lake_summary}"
)

KICKOFF = "Take your first action."


def build_system_prompt(
    query: str,
    lake_summary: str,
    budget: int,
    menu: str = BLACKBOARD_MENU,
    tags: str = "planning, reasoning, execute_code, request_help, answer",
) -> str:
    return SYSTEM_TEMPLATE.format(
        grammar=GRAMMAR_BLOCK.format(tags=tags),
        menu=menu,
        budget=budget,
        query=query,
        lake_summary=lake_summary,
    )


def run_task(
    query: str,
    task_id: str,
    gateway: Gateway,
    channel: HelpChannel,
    executor: ProgramRunner,
    budget: int,
    system_prompt: str,
    caller: str = "main",
) -> TaskResult:
    """Run the bounded act-observe loop for one query.

    At most ``budget`` actions are executed. An answer terminates the loop;
    if the budget runs out first, the last executed code block (if any) is
    promoted to ``fallback_program`` so scoring still has something to run.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    turns: list[ChatTurn] = [ChatTurn.system(system_prompt), ChatTurn.user(KICKOFF)]
    history: list[ActionRecord] = []
    last_code: str | None = None

    for step in range(budget):
        try:
            action, turns = _next_action(gateway, turns, caller)
        except GatewayError as exc:
            logger.error("fatal gateway failure at step %d: %s", step, exc)
            return TaskResult(task_id, None, history, TerminationReason.FATAL)

        if action.kind is ActionKind.ANSWER:
            program = CandidateProgram(source_text=action.payload)
            history.append(ActionRecord(step, ActionKind.ANSWER, action.payload, ""))
            return TaskResult(task_id, program, history, TerminationReason.ANSWER)

        observation = _observe(action, channel, executor, task_id, step)
        observation = cap_observation(observation)
        history.append(ActionRecord(step, action.kind, action.payload, observation))
        turns.append(ChatTurn.user(f"Observation:\n{observation}"))
        if action.kind is ActionKind.EXECUTE_CODE:
            last_code = action.payload

    fallback = None
    if last_code:
        fallback = CandidateProgram(source_text=last_code)
        logger.info("budget exhausted; promoting last code block to fallback program")
    return TaskResult(task_id, None, history, TerminationReason.BUDGET_EXHAUSTED, fallback)


def _next_action(
    gateway: Gateway, turns: list[ChatTurn], caller: str
) -> tuple[ParsedAction, list[ChatTurn]]:
    """Complete and parse one action, re-asking once on an unparseable reply.

    The re-ask exchange stays in the conversation so the history remains
    append-only. A second failure is recorded as a reasoning step wrapping
    the raw text rather than aborting the run.
    """
    reply = gateway.complete(turns, caller=caller)
    try:
        action = parse_action(reply.content)
        turns = turns + [reply]
        return action, turns
    except UnparseableAction as exc:
        turns = turns + [
            reply,
            ChatTurn.user(
                f"Your reply could not be parsed: {exc}. "
                "Reply again with exactly one action in the required format."
            ),
        ]
    second = gateway.complete(turns, caller=caller)
    turns = turns + [second]
    try:
        return parse_action(second.content), turns
    except UnparseableAction:
        logger.warning("still unparseable after re-ask; recording as a reasoning step")
        action = ParsedAction(
            kind=ActionKind.REASONING,
            payload=second.content,
            diagnostics=["unparseable action recorded as reasoning"],
        )
        return action, turns


def _observe(
    action: ParsedAction,
    channel: HelpChannel,
    executor: ProgramRunner,
    task_id: str,
    step: int,
) -> str:
    if action.kind is ActionKind.PLANNING:
        return PLAN_ACK
    if action.kind is ActionKind.REASONING:
        return REASONING_ACK
    if action.kind is ActionKind.EXECUTE_CODE:
        return executor.run_source(action.payload).observation()
    if action.kind in (ActionKind.REQUEST_HELP, ActionKind.INVOKE_AGENT):
        if action.kind is not channel.help_kind:
            return (
                f"The {action.kind.value} action is not available in this mode; "
                f"use {channel.help_kind.value} instead."
            )
        try:
            return channel.observe_help(action.payload, action.agent_id, task_id, step)
        except Exception as exc:  # noqa: BLE001 - help failures become observations
            logger.warning("help action failed: %s", exc)
            return f"The help request failed: {exc}"
    raise AssertionError(f"unhandled action kind {action.kind}")
