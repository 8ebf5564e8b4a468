from __future__ import annotations

import json

from conftest import make_gateway
from fixture_formats import write_csv

from lakeboard.blackboard import Blackboard, ResponseKind
from lakeboard.clustering import ClusterAssignment
from lakeboard.file_agent import FileAgent
from lakeboard.lake import ingest_manifest
from lakeboard.preview import PreviewStore


def _selection(names):
    return "```json\n" + json.dumps(names) + "\n```"


def _yes_plan(files: str, load: str = "pd.read_csv(...)", prep: str = "none needed") -> str:
    return f"YES\nFILES: {files}\nLOAD:\n{load}\nPREPROCESSING:\n{prep}"


def _make_agent(manifest, cluster_members, script, tmp_path, label="tables", **kwargs):
    cluster = ClusterAssignment("c000", label, cluster_members)
    gw = make_gateway(script)
    previews = PreviewStore(manifest, cache_dir=tmp_path / "previews")
    agent = FileAgent(cluster, manifest, gw, previews, **kwargs)
    return agent, gw


def test_offline_two_step_analysis(mini_manifest, tmp_path):
    agent, gw = _make_agent(
        mini_manifest,
        mini_manifest.file_ids,
        [_selection(["data/ages.csv", "notes.txt"]), "Two tables keyed by patient_id plus a note."],
        tmp_path,
    )
    analysis = agent.offline_analyze()
    assert gw.call_count == 2
    assert analysis.inspected_file_ids == [
        mini_manifest.by_path("data/ages.csv").file_id,
        mini_manifest.by_path("notes.txt").file_id,
    ]
    assert "patient_id" in analysis.analysis_text
    # step 2's prompt carries the previews of the chosen files
    analyze_prompt = gw.records[1].turns[0]["content"]
    assert "=== data/ages.csv ===" in analyze_prompt
    assert "=== data/scores.csv ===" not in analyze_prompt


def test_representative_sample_of_yearly_files(tmp_path):
    root = tmp_path / "lake"
    root.mkdir()
    for year in range(1990, 2020):
        write_csv(root / f"rain_{year}.csv", ["month", "mm"], [[1, year % 7]])
    manifest = ingest_manifest(root)
    agent, gw = _make_agent(
        manifest,
        manifest.file_ids,
        [_selection(["rain_1990.csv", "rain_2005.csv", "rain_2019.csv"]), "Same schema per year."],
        tmp_path,
        label="yearly rainfall",
    )
    analysis = agent.offline_analyze()
    assert len(analysis.inspected_file_ids) == 3
    assert gw.call_count == 2


def test_selection_capped_at_max_inspect(tmp_path):
    root = tmp_path / "lake"
    root.mkdir()
    for i in range(15):
        write_csv(root / f"t{i:02d}.csv", ["x"], [[i]])
    manifest = ingest_manifest(root)
    agent, gw = _make_agent(
        manifest,
        manifest.file_ids,
        [_selection([f.path for f in manifest]), "Wide selection."],
        tmp_path,
        max_inspect=10,
    )
    analysis = agent.offline_analyze()
    assert len(analysis.inspected_file_ids) == 10


def test_singleton_cluster_skips_selection_call(mini_manifest, tmp_path):
    only = mini_manifest.by_path("notes.txt").file_id
    agent, gw = _make_agent(mini_manifest, [only], ["A note file."], tmp_path)
    analysis = agent.offline_analyze()
    assert analysis.inspected_file_ids == [only]
    assert gw.call_count == 1  # no selection round-trip for a single file


def test_analysis_cached_zero_calls_on_rerun(mini_manifest, tmp_path):
    script = [_selection(["data/ages.csv"]), "Analysis text."]
    cache = tmp_path / "analyses"
    agent, gw = _make_agent(mini_manifest, mini_manifest.file_ids, script, tmp_path, cache_dir=cache)
    agent.offline_analyze()
    assert gw.call_count == 2

    agent2, gw2 = _make_agent(mini_manifest, mini_manifest.file_ids, [], tmp_path, cache_dir=cache)
    analysis = agent2.offline_analyze()
    assert gw2.call_count == 0
    assert analysis.analysis_text == "Analysis text."


def test_unparseable_selection_falls_back(mini_manifest, tmp_path):
    agent, gw = _make_agent(
        mini_manifest,
        mini_manifest.file_ids,
        ["no list", "still no list", "Recovered analysis."],
        tmp_path,
    )
    analysis = agent.offline_analyze()
    assert analysis.analysis_text == "Recovered analysis."
    assert len(analysis.inspected_file_ids) == 3  # all members (< max_inspect)


def test_consider_before_analyze_declines(mini_manifest, tmp_path):
    agent, _ = _make_agent(mini_manifest, mini_manifest.file_ids, [], tmp_path)
    board = Blackboard(budget=10)
    request = board.post_request("t", "need age data", 0)
    reply = agent.consider(request)
    assert reply.declined
    assert "not analyzed" in reply.diagnostic


def test_consider_yes_produces_plan_with_samples(mini_manifest, tmp_path):
    agent, gw = _make_agent(
        mini_manifest,
        mini_manifest.file_ids,
        [
            _selection(["data/ages.csv"]),
            "Cohort tables keyed by patient_id.",
            _yes_plan("data/ages.csv, data/scores.csv", "pd.read_csv('data/ages.csv')", "merge on patient_id"),
        ],
        tmp_path,
    )
    agent.offline_analyze()
    board = Blackboard(budget=10)
    request = board.post_request("t", "need CSV with columns Age, APP-Z score", 0)
    reply = agent.consider(request)
    assert not reply.declined
    assert reply.kind is ResponseKind.FILE_PLAN
    payload = reply.payload
    assert payload["relevant_paths"] == ["data/ages.csv", "data/scores.csv"]
    assert "pd.read_csv" in payload["load_instructions"]
    assert "merge on patient_id" in payload["preprocessing_notes"]
    assert "=== data/ages.csv ===" in payload["sample_excerpts"]
    assert "rows: showing 5 of" in payload["sample_excerpts"]
    # the consider prompt is built from the request and own analysis only
    consider_prompt = gw.records[-1].turns[0]["content"]
    assert "need CSV with columns Age" in consider_prompt
    assert "Cohort tables keyed by patient_id." in consider_prompt


def test_consider_no_declines(mini_manifest, tmp_path):
    agent, _ = _make_agent(
        mini_manifest,
        mini_manifest.file_ids,
        [_selection(["data/ages.csv"]), "analysis", "NO\nThis is about web knowledge."],
        tmp_path,
    )
    agent.offline_analyze()
    board = Blackboard(budget=10)
    request = board.post_request("t", "explain the Palmer Drought Severity Index", 0)
    reply = agent.consider(request)
    assert reply.declined


def test_unparseable_verdict_declines(mini_manifest, tmp_path):
    agent, _ = _make_agent(
        mini_manifest,
        mini_manifest.file_ids,
        [_selection(["data/ages.csv"]), "analysis", "MAYBE, who knows"],
        tmp_path,
    )
    agent.offline_analyze()
    board = Blackboard(budget=10)
    reply = agent.consider(board.post_request("t", "need data", 0))
    assert reply.declined
    assert "verdict" in reply.diagnostic


def test_ownership_filter_drops_foreign_files(mini_manifest, tmp_path):
    own = [mini_manifest.by_path("data/ages.csv").file_id]
    agent, _ = _make_agent(
        mini_manifest,
        own,
        ["analysis of ages only", _yes_plan("data/ages.csv, data/scores.csv, /etc/passwd")],
        tmp_path,
    )
    agent.offline_analyze()
    board = Blackboard(budget=10)
    reply = agent.consider(board.post_request("t", "need ages and scores", 0))
    assert not reply.declined
    assert reply.payload["relevant_file_ids"] == own
    assert "outside this agent's cluster" in reply.diagnostic


def test_ground_truth_spanning_three_clusters_union_covered(tmp_path):
    root = tmp_path / "lake"
    root.mkdir()
    names = ["demo.csv", "labs.csv", "meds.csv", "misc.csv"]
    for name in names:
        write_csv(root / name, ["patient_id", name.split(".")[0]], [["p0", 1]])
    manifest = ingest_manifest(root)
    by_path = {f.path: f.file_id for f in manifest}
    clusters = [
        ClusterAssignment("c000", "demographics", [by_path["demo.csv"]]),
        ClusterAssignment("c001", "labs", [by_path["labs.csv"]]),
        ClusterAssignment("c002", "medications", [by_path["meds.csv"]]),
        ClusterAssignment("c003", "misc", [by_path["misc.csv"]]),
    ]
    previews = PreviewStore(manifest, cache_dir=tmp_path / "previews")
    scripts = {
        "file:c000": ["demo analysis", _yes_plan("demo.csv")],
        "file:c001": ["labs analysis", _yes_plan("labs.csv")],
        "file:c002": ["meds analysis", _yes_plan("meds.csv")],
        "file:c003": ["misc analysis", "NO\nnothing relevant here"],
    }
    gw = make_gateway(scripts)
    agents = [FileAgent(c, manifest, gw, previews) for c in clusters]
    for agent in agents:
        agent.offline_analyze()

    board = Blackboard(budget=10)
    request = board.post_request("t", "need demographics, lab results and medication history", 0)
    entries = board.broadcast_and_gather(request, agents)
    assert len(entries) == 3
    union = {fid for e in entries for fid in e.payload["relevant_file_ids"]}
    ground_truth = {by_path["demo.csv"], by_path["labs.csv"], by_path["meds.csv"]}
    assert union == ground_truth


def test_respond_directly_forces_plan(mini_manifest, tmp_path):
    agent, _ = _make_agent(
        mini_manifest,
        mini_manifest.file_ids,
        [_selection(["data/ages.csv"]), "analysis", _yes_plan("data/ages.csv").replace("YES\n", "")],
        tmp_path,
    )
    agent.offline_analyze()
    reply = agent.respond_directly("load the age table")
    assert not reply.declined
    assert reply.payload["relevant_paths"] == ["data/ages.csv"]
