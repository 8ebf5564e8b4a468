"""Web-search helper agent: gated to general knowledge, bounded to 3 rounds.

The agent refuses anything touching local files or datasets. When it accepts,
it iterates: generate queries, pull the top results per query, extract page
text, and judge sufficiency; at most three rounds, then a best-effort answer
flagged as partial.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from html.parser import HTMLParser
from pathlib import Path
from typing import Protocol, Sequence
from urllib.parse import urlparse

from .blackboard import HelperReply, Request
from .gateway import ChatTurn, Gateway, GatewayError, ParseError, StructuredOutputError

logger = logging.getLogger(__name__)

MAX_ROUNDS = 3
RESULTS_PER_QUERY = 3
MAX_QUERIES_PER_ROUND = 4
PAGE_CHAR_CAP = 8_000
FETCH_TIMEOUT = 15.0

_FENCE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)

SEARCH_ROLE = (
    "You are a web-research specialist. You only handle requests for general "
    "knowledge that can be answered from the public web. You never handle "
    "requests about local files, datasets, or their contents."
)

GATE_TEMPLATE = (
    "{role}\n\n"
    "A request has been posted on the shared board:\n---\n{request}\n---\n\n"
    "Can you address it with general web research? Requests that concern "
    "local files or datasets are not yours to answer. Reply with exactly YES "
    "or NO on the first line, then a one-line reason."
)

QUERIES_TEMPLATE = (
    "{role}\n\n"
    "Request:\n---\n{request}\n---\n{context}"
    "Propose up to {max_queries} web search queries to gather the missing "
    "information. Reply with a single fenced json list of query strings."
)

SUFFICIENCY_TEMPLATE = (
    "{role}\n\n"
    "Request:\n---\n{request}\n---\n\n"
    "Extracted page contents so far:\n\n{pages}\n\n"
    "Is this sufficient to answer the request? Reply with exactly SUFFICIENT "
    "or INSUFFICIENT on the first line, then a one-line rationale."
)

SYNTHESIZE_TEMPLATE = (
    "{role}\n\n"
    "Request:\n---\n{request}\n---\n\n"
    "Extracted page contents:\n\n{pages}\n\n"
    "Write a direct, self-contained answer to the request based on these "
    "pages. After the answer, add a line 'CITATIONS:' followed by one fetched "
    "URL per line that you actually used."
)


class Verdict(str, Enum):
    SUFFICIENT = "Sufficient"
    INSUFFICIENT = "Insufficient"


@dataclass(frozen=True)
class SearchResult:
    title: str
    url: str
    snippet: str


@dataclass
class FetchedPage:
    url: str
    extracted_text: str
    fetch_status: str  # "ok", "blocked:<host>", or "error:<reason>"


@dataclass
class SearchRound:
    round: int
    queries: list[str]
    fetched: list[FetchedPage] = field(default_factory=list)
    verdict: Verdict = Verdict.INSUFFICIENT

    def as_dict(self) -> dict:
        return {
            "round": self.round,
            "queries": self.queries,
            "fetched": [
                {"url": p.url, "fetch_status": p.fetch_status, "chars": len(p.extracted_text)}
                for p in self.fetched
            ],
            "verdict": self.verdict.value,
        }


@dataclass
class WebFindings:
    answer_text: str
    citations: list[str]
    partial: bool = False
    rounds: list[SearchRound] = field(default_factory=list)

    def as_payload(self) -> dict:
        return {
            "answer_text": self.answer_text,
            "citations": self.citations,
            "partial": self.partial,
            "rounds": [r.as_dict() for r in self.rounds],
        }


def render_web_findings(payload: dict) -> str:
    lines = [payload.get("answer_text", "")]
    if payload.get("partial"):
        lines.append("(note: search budget exhausted; this answer may be incomplete)")
    citations = payload.get("citations") or []
    if citations:
        lines.append("sources: " + ", ".join(citations))
    return "\n".join(lines)


class SearchProvider(Protocol):
    def search(self, query: str) -> list[SearchResult]:
        """Ranked results for one query; the caller keeps only the top k."""
        ...


class ScriptedSearchProvider:
    """Serves canned results from a mapping, for tests and replays."""

    def __init__(self, results: dict[str, list[SearchResult]]):
        self._results = results

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedSearchProvider":
        data = json.loads(Path(path).read_text())
        return cls(
            {
                query: [SearchResult(r["title"], r["url"], r.get("snippet", "")) for r in items]
                for query, items in data.items()
            }
        )

    def search(self, query: str) -> list[SearchResult]:
        return list(self._results.get(query, []))


class HttpSearchProvider:
    """Minimal HTTP provider: GET endpoint?q=..., JSON list of result objects."""

    def __init__(self, endpoint: str, api_key: str | None = None, timeout: float = 15.0):
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout

    def search(self, query: str) -> list[SearchResult]:
        import requests

        params = {"q": query}
        if self.api_key:
            params["key"] = self.api_key
        resp = requests.get(self.endpoint, params=params, timeout=self.timeout)
        resp.raise_for_status()
        return [
            SearchResult(item.get("title", ""), item["url"], item.get("snippet", ""))
            for item in resp.json()
        ]


class PageFetcher(Protocol):
    def fetch(self, url: str) -> str:
        """Return raw page markup; raise on failure."""
        ...


class ScriptedPageFetcher:
    def __init__(self, pages: dict[str, str]):
        self._pages = pages

    def fetch(self, url: str) -> str:
        if url not in self._pages:
            raise KeyError(f"no scripted page for {url}")
        return self._pages[url]


class LivePageFetcher:
    def __init__(self, timeout: float = FETCH_TIMEOUT):
        self.timeout = timeout

    def fetch(self, url: str) -> str:
        import requests

        resp = requests.get(url, timeout=self.timeout)
        resp.raise_for_status()
        return resp.text


class _TextExtractor(HTMLParser):
    _SKIP = {"script", "style", "noscript"}

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self._chunks: list[str] = []
        self._skip_depth = 0

    def handle_starttag(self, tag, attrs):
        if tag in self._SKIP:
            self._skip_depth += 1

    def handle_endtag(self, tag):
        if tag in self._SKIP and self._skip_depth:
            self._skip_depth -= 1

    def handle_data(self, data):
        if not self._skip_depth and data.strip():
            self._chunks.append(data.strip())


def extract_text(markup: str, cap: int = PAGE_CHAR_CAP) -> str:
    """Strip markup to plain text, capped per page."""
    parser = _TextExtractor()
    try:
        parser.feed(markup)
        parser.close()
    except Exception:  # noqa: BLE001 - treat unparseable markup as plain text
        return re.sub(r"\s+", " ", markup).strip()[:cap]
    text = " ".join(parser._chunks)
    return re.sub(r"\s+", " ", text).strip()[:cap]


def host_blocked(url: str, excluded_domains: Sequence[str]) -> bool:
    host = (urlparse(url).hostname or "").lower()
    for suffix in excluded_domains:
        suffix = suffix.lower().lstrip(".")
        if host == suffix or host.endswith("." + suffix):
            return True
    return False


def _parse_query_list(text: str) -> list[str]:
    match = _FENCE.search(text)
    if not match:
        raise ParseError("no fenced json list found")
    try:
        data = json.loads(match.group(1))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid json: {exc}") from exc
    if not isinstance(data, list) or not all(isinstance(q, str) for q in data):
        raise ParseError("expected a json list of query strings")
    return data


class SearchAgent:
    """Capability-gated helper answering general-knowledge requests from the web."""

    agent_id = "search"

    def __init__(
        self,
        gateway: Gateway,
        provider: SearchProvider,
        fetcher: PageFetcher,
        excluded_domains: Sequence[str] = (),
        max_rounds: int = MAX_ROUNDS,
        results_per_query: int = RESULTS_PER_QUERY,
        max_queries: int = MAX_QUERIES_PER_ROUND,
        parallel_fetch: bool = True,
    ):
        self.gateway = gateway
        self.provider = provider
        self.fetcher = fetcher
        self.excluded_domains = list(excluded_domains)
        self.max_rounds = max_rounds
        self.results_per_query = results_per_query
        self.max_queries = max_queries
        self.parallel_fetch = parallel_fetch
        self.last_rounds: list[SearchRound] = []

    # -- gate ----------------------------------------------------------------

    def gate(self, request: Request) -> bool:
        """Accept only general web-knowledge requests; decline file access."""
        if not request.body.strip():
            return False
        try:
            reply = self.gateway.complete(
                [ChatTurn.user(GATE_TEMPLATE.format(role=SEARCH_ROLE, request=request.body))],
                caller=self.agent_id,
            )
        except GatewayError as exc:
            logger.warning("search gate failed: %s", exc)
            return False
        verdict = reply.content.strip().splitlines()[0].strip().upper().rstrip(".")
        return verdict == "YES"

    def consider(self, request: Request) -> HelperReply:
        if not self.gate(request):
            return HelperReply.decline("outside search-agent capability")
        return self._run_loop(request.body)

    def respond_directly(self, instruction: str) -> HelperReply:
        """Handle a directly assigned instruction; the capability gate still applies."""
        fake = Request(request_id="direct", task_id="direct", body=instruction, step_index=0)
        if not self.gate(fake):
            return HelperReply.decline("outside search-agent capability")
        return self._run_loop(instruction)

    # -- search loop -----------------------------------------------------------

    def _run_loop(self, request_body: str) -> HelperReply:
        rounds: list[SearchRound] = []
        pages: list[FetchedPage] = []
        self.last_rounds = rounds
        try:
            for round_no in range(1, self.max_rounds + 1):
                queries = self._generate_queries(request_body, rounds)
                current = SearchRound(round=round_no, queries=queries)
                rounds.append(current)
                current.fetched = self._fetch_round(queries)
                pages.extend(current.fetched)
                good = [p for p in pages if p.fetch_status == "ok"]
                if good and self._sufficient(request_body, good):
                    current.verdict = Verdict.SUFFICIENT
                    findings = self._synthesize(request_body, good, partial=False, rounds=rounds)
                    return HelperReply.web_findings(findings.as_payload())
            good = [p for p in pages if p.fetch_status == "ok"]
            if not good:
                return HelperReply.decline("no pages could be retrieved")
            findings = self._synthesize(request_body, good, partial=True, rounds=rounds)
            return HelperReply.web_findings(findings.as_payload())
        except GatewayError as exc:
            return HelperReply.decline(f"model failure during search: {exc}")
        except Exception as exc:  # noqa: BLE001 - provider outages become declines
            logger.warning("search loop failed: %s", exc)
            return HelperReply.decline(f"search provider failure: {exc}")

    def _generate_queries(self, request_body: str, rounds: list[SearchRound]) -> list[str]:
        context = ""
        if rounds:
            tried = ", ".join(q for r in rounds for q in r.queries)
            context = (
                f"\nEarlier queries ({tried}) did not surface enough information; "
                "propose different or more specific ones.\n\n"
            )
        else:
            context = "\n"
        try:
            queries = self.gateway.complete_structured(
                [
                    ChatTurn.user(
                        QUERIES_TEMPLATE.format(
                            role=SEARCH_ROLE,
                            request=request_body,
                            context=context,
                            max_queries=self.max_queries,
                        )
                    )
                ],
                parse=_parse_query_list,
                caller=self.agent_id,
                error_hint="The query list could not be parsed.",
            )
        except StructuredOutputError:
            queries = [request_body.strip()[:200]]
        queries = [q for q in queries if q.strip()]
        return queries[: self.max_queries]

    def _fetch_round(self, queries: list[str]) -> list[FetchedPage]:
        urls: list[str] = []
        seen: set[str] = set()
        for query in queries:
            for result in self.provider.search(query)[: self.results_per_query]:
                if result.url not in seen:
                    seen.add(result.url)
                    urls.append(result.url)
        allowed = []
        for url in urls:
            if host_blocked(url, self.excluded_domains):
                logger.info("skipping excluded-domain url: %s", url)
            else:
                allowed.append(url)
        if not allowed:
            return []
        if self.parallel_fetch and len(allowed) > 1:
            with ThreadPoolExecutor(max_workers=min(8, len(allowed))) as pool:
                return list(pool.map(self._fetch_one, allowed))
        return [self._fetch_one(url) for url in allowed]

    def _fetch_one(self, url: str) -> FetchedPage:
        try:
            markup = self.fetcher.fetch(url)
        except Exception as exc:  # noqa: BLE001 - per-url failures are recorded, not raised
            return FetchedPage(url=url, extracted_text="", fetch_status=f"error:{exc}")
        return FetchedPage(url=url, extracted_text=extract_text(markup), fetch_status="ok")

    def _pages_block(self, pages: list[FetchedPage]) -> str:
        return "\n\n".join(f"=== {p.url} ===\n{p.extracted_text}" for p in pages)

    def _sufficient(self, request_body: str, pages: list[FetchedPage]) -> bool:
        reply = self.gateway.complete(
            [
                ChatTurn.user(
                    SUFFICIENCY_TEMPLATE.format(
                        role=SEARCH_ROLE, request=request_body, pages=self._pages_block(pages)
                    )
                )
            ],
            caller=self.agent_id,
        )
        lines = reply.content.strip().splitlines()
        verdict = lines[0].strip().upper().rstrip(".")
        rationale = lines[1].strip() if len(lines) > 1 else ""
        logger.info("sufficiency verdict: %s (%s)", verdict, rationale)
        return verdict == "SUFFICIENT"

    def _synthesize(
        self,
        request_body: str,
        pages: list[FetchedPage],
        partial: bool,
        rounds: list[SearchRound],
    ) -> WebFindings:
        reply = self.gateway.complete(
            [
                ChatTurn.user(
                    SYNTHESIZE_TEMPLATE.format(
                        role=SEARCH_ROLE, request=request_body, pages=self._pages_block(pages)
                    )
                )
            ],
            caller=self.agent_id,
        )
        answer, citations = self._split_citations(reply.content, pages)
        return WebFindings(answer_text=answer, citations=citations, partial=partial, rounds=rounds)

    @staticmethod
    def _split_citations(text: str, pages: list[FetchedPage]) -> tuple[str, list[str]]:
        fetched_urls = [p.url for p in pages]
        head, sep, tail = text.partition("CITATIONS:")
        if not sep:
            return text.strip(), fetched_urls
        cited = [line.strip() for line in tail.splitlines() if line.strip()]
        # citations must be a subset of what was actually fetched
        cited = [url for url in cited if url in fetched_urls]
        return head.strip(), cited or fetched_urls
