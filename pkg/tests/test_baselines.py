from __future__ import annotations

import numpy as np
import pytest
from conftest import StubHelper, make_gateway
from fixture_formats import write_csv

from lakeboard.baselines import (
    AgentDirectory,
    HashingEmbedder,
    MasterSlaveChannel,
    RetrievalIndex,
    SearchOnlyChannel,
    build_index,
    rag_context,
    run_master_slave,
    run_rag,
    top_k,
)
from lakeboard.blackboard import HelperReply
from lakeboard.lake import ingest_manifest
from lakeboard.main_agent import ActionKind, TerminationReason
from lakeboard.preview import PreviewStore
from lakeboard.sandbox import ProgramRunner


def _plan(paths):
    return HelperReply.file_plan(
        {"relevant_file_ids": list(paths), "relevant_paths": list(paths), "load_instructions": "pd.read_csv"}
    )


def _directory(helpers):
    return AgentDirectory(entries=[(h.agent_id, f"stub {h.agent_id}") for h in helpers])


def test_invoke_named_agent_only(tmp_path):
    a = StubHelper("file:c000", _plan(["a.csv"]))
    b = StubHelper("file:c001", _plan(["b.csv"]))
    script = [
        "ACTION: invoke_agent\nAGENT: file:c001\nfetch the b table",
        "ACTION: answer\n```python\nprint(1)\n```",
    ]
    gateway = make_gateway({"main": script})
    result = run_master_slave(
        "q", "t", gateway, _directory([a, b]), [a, b], ProgramRunner(tmp_path), 10, "summary"
    )
    assert result.terminated_by is TerminationReason.ANSWER
    assert a.seen == []  # unnamed helper never sees the instruction
    assert b.seen == ["fetch the b table"]
    assert "b.csv" in result.history[0].observation


def test_invoke_unknown_agent_consumes_step(tmp_path):
    a = StubHelper("file:c000", _plan(["a.csv"]))
    script = [
        "ACTION: invoke_agent\nAGENT: file:c999\nhello?",
        "ACTION: answer\n```python\nprint(1)\n```",
    ]
    gateway = make_gateway({"main": script})
    result = run_master_slave("q", "t", gateway, _directory([a]), [a], ProgramRunner(tmp_path), 10, "s")
    assert result.terminated_by is TerminationReason.ANSWER
    assert "Unknown agent id" in result.history[0].observation
    assert len(result.history) == 2
    assert a.seen == []


def test_request_help_unavailable_in_master_slave(tmp_path):
    a = StubHelper("file:c000", _plan(["a.csv"]))
    script = [
        "ACTION: request_help\nbroadcast please",
        "ACTION: answer\n```python\nprint(1)\n```",
    ]
    gateway = make_gateway({"main": script})
    result = run_master_slave("q", "t", gateway, _directory([a]), [a], ProgramRunner(tmp_path), 10, "s")
    assert "not available in this mode" in result.history[0].observation
    assert a.seen == []


def test_directory_lists_all_helpers(tmp_path):
    a = StubHelper("file:c000", _plan(["a.csv"]))
    b = StubHelper("search", HelperReply.web_findings({"answer_text": "x", "citations": []}))
    directory = _directory([a, b])
    rendered = directory.render()
    assert "file:c000" in rendered and "search" in rendered
    script = ["ACTION: answer\n```python\nprint(1)\n```"]
    gateway = make_gateway({"main": script})
    run_master_slave("q", "t", gateway, directory, [a, b], ProgramRunner(tmp_path), 10, "s")
    system_prompt = gateway.records[0].turns[0]["content"]
    assert "file:c000" in system_prompt and "search" in system_prompt


# ---------------------------------------------------------------------------
# embedder + index
# ---------------------------------------------------------------------------


def test_hashing_embedder_deterministic_and_normalized():
    emb = HashingEmbedder()
    v1 = emb.embed("wildfire acres burned by year")
    v2 = emb.embed("wildfire acres burned by year")
    assert np.array_equal(v1, v2)
    assert v1.shape == (256,)
    assert np.isclose(np.linalg.norm(v1), 1.0)
    assert not np.array_equal(v1, emb.embed("completely different text"))


def test_build_index_one_entry_per_file(tmp_path, mini_manifest):
    previews = PreviewStore(mini_manifest, cache_dir=tmp_path / "cache")
    index = build_index(mini_manifest, previews, HashingEmbedder())
    assert index.count == len(mini_manifest)
    assert index.dimension == 256
    assert index.file_ids == mini_manifest.file_ids


def test_empty_manifest_empty_index(tmp_path):
    (tmp_path / "lake").mkdir()
    manifest = ingest_manifest(tmp_path / "lake")
    previews = PreviewStore(manifest, cache_dir=tmp_path / "cache")
    index = build_index(manifest, previews, HashingEmbedder())
    assert index.count == 0
    assert top_k(index, HashingEmbedder().embed("anything")) == []


def test_index_identical_bytes_across_builds(tmp_path, mini_manifest):
    previews = PreviewStore(mini_manifest, cache_dir=tmp_path / "cache")
    p1, p2 = tmp_path / "i1.bin", tmp_path / "i2.bin"
    build_index(mini_manifest, previews, HashingEmbedder()).save(p1)
    build_index(mini_manifest, previews, HashingEmbedder()).save(p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_index_roundtrip(tmp_path, mini_manifest):
    previews = PreviewStore(mini_manifest, cache_dir=tmp_path / "cache")
    index = build_index(mini_manifest, previews, HashingEmbedder())
    index.save(tmp_path / "index.bin")
    loaded = RetrievalIndex.load(tmp_path / "index.bin")
    assert loaded.file_ids == index.file_ids
    assert np.array_equal(loaded.vectors, index.vectors)


def test_embedding_failure_falls_back_to_name(tmp_path, mini_manifest):
    class FlakyEmbedder(HashingEmbedder):
        def embed(self, text):
            if "scores" in text and "\n" in text:  # fail only on the preview-bearing text
                from lakeboard.baselines import EmbedderError

                raise EmbedderError("boom")
            return super().embed(text)

    previews = PreviewStore(mini_manifest, cache_dir=tmp_path / "cache")
    index = build_index(mini_manifest, previews, FlakyEmbedder())
    assert index.count == len(mini_manifest)
    assert index.name_only == [mini_manifest.by_path("data/scores.csv").file_id]


def test_self_similarity_ranks_first(tmp_path, mini_manifest):
    previews = PreviewStore(mini_manifest, cache_dir=tmp_path / "cache")
    emb = HashingEmbedder()
    index = build_index(mini_manifest, previews, emb)
    f = mini_manifest.by_path("data/scores.csv")
    query = f"{f.path}\n{previews.get(f).rendered_text}"
    assert top_k(index, emb.embed(query), k=1) == [f.file_id]


def test_similarity_tie_breaks_in_manifest_order(tmp_path):
    root = tmp_path / "lake"
    root.mkdir()
    # identical content, so identical preview text; only names could differ,
    # and we make the names hash-equivalent by swapping in identical text too
    write_csv(root / "copy_a.csv", ["x"], [[1]])
    write_csv(root / "copy_b.csv", ["x"], [[1]])
    manifest = ingest_manifest(root)

    class NameBlindEmbedder(HashingEmbedder):
        def embed(self, text):
            return super().embed(text.split("\n", 1)[-1])  # drop the name line

    previews = PreviewStore(manifest, cache_dir=tmp_path / "cache")
    emb = NameBlindEmbedder()
    index = build_index(manifest, previews, emb)
    scores = index.vectors @ emb.embed(previews.get(manifest.files[0]).rendered_text)
    assert np.isclose(scores[0], scores[1])
    assert top_k(index, emb.embed(previews.get(manifest.files[0]).rendered_text), k=2) == manifest.file_ids


# ---------------------------------------------------------------------------
# rag run
# ---------------------------------------------------------------------------


def _rag_fixture(tmp_path, n_files, script):
    root = tmp_path / "lake"
    root.mkdir()
    for i in range(n_files):
        write_csv(root / f"t{i}.csv", ["x"], [[i]])
    manifest = ingest_manifest(root)
    previews = PreviewStore(manifest, cache_dir=tmp_path / "cache")
    emb = HashingEmbedder()
    index = build_index(manifest, previews, emb)
    gateway = make_gateway({"main": script})
    result = run_rag(
        "which table holds x?", "t", gateway, manifest, previews, index, emb,
        None, ProgramRunner(tmp_path / "work"), 10,
    )
    return result, gateway, manifest


@pytest.mark.parametrize("n_files,expected", [(8, 5), (3, 3)])
def test_rag_prompt_contains_min_k_previews(tmp_path, n_files, expected):
    result, gateway, manifest = _rag_fixture(
        tmp_path, n_files, ["ACTION: answer\n```python\nprint(1)\n```"]
    )
    assert result.terminated_by is TerminationReason.ANSWER
    system_prompt = gateway.records[0].turns[0]["content"]
    assert system_prompt.count("=== ") == expected


def test_rag_help_goes_to_search_agent_only(tmp_path):
    class FakeSearch:
        agent_id = "search"

        def __init__(self):
            self.instructions = []

        def respond_directly(self, instruction):
            self.instructions.append(instruction)
            return HelperReply.web_findings({"answer_text": "PDSI is a drought index.", "citations": []})

    search = FakeSearch()
    root = tmp_path / "lake"
    root.mkdir()
    write_csv(root / "a.csv", ["x"], [[1]])
    manifest = ingest_manifest(root)
    previews = PreviewStore(manifest, cache_dir=tmp_path / "cache")
    emb = HashingEmbedder()
    index = build_index(manifest, previews, emb)
    script = [
        "ACTION: request_help\nwhat is the PDSI?",
        "ACTION: answer\n```python\nprint(1)\n```",
    ]
    gateway = make_gateway({"main": script})
    result = run_rag("q", "t", gateway, manifest, previews, index, emb, search,
                     ProgramRunner(tmp_path / "work"), 10)
    assert search.instructions == ["what is the PDSI?"]
    assert "PDSI is a drought index." in result.history[0].observation


def test_search_only_channel_without_agent():
    channel = SearchOnlyChannel(None)
    assert "No search agent" in channel.observe_help("q", None, "t", 0)


# ---------------------------------------------------------------------------
# mode isolation
# ---------------------------------------------------------------------------


def test_mode_isolation_in_histories(tmp_path):
    a = StubHelper("file:c000", _plan(["a.csv"]))
    ms_script = [
        "ACTION: invoke_agent\nAGENT: file:c000\ngo",
        "ACTION: answer\n```python\nprint(1)\n```",
    ]
    gateway = make_gateway({"main": ms_script})
    ms = run_master_slave("q", "t", gateway, _directory([a]), [a], ProgramRunner(tmp_path / "w1"), 10, "s")
    assert all(r.kind is not ActionKind.REQUEST_HELP for r in ms.history)
    assert any(r.kind is ActionKind.INVOKE_AGENT for r in ms.history)
