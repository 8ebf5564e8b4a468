from __future__ import annotations

import json
from itertools import combinations

import pytest
from conftest import make_gateway
from hypothesis import given
from hypothesis import strategies as st

from lakeboard.evaluation import (
    DiscoveryScore,
    EmptyTruth,
    JudgeUnavailable,
    LlmJudge,
    TaskRow,
    TaskSpec,
    aggregate,
    exact_output_match,
    load_task_manifest,
    score_discovery,
    score_generation,
)
from lakeboard.sandbox import ExecutionResult, ExitStatus


def oracle_discovery(predicted, truth):
    """Brute-force counting oracle: membership loops only, no set algebra."""
    hits = 0
    for p in predicted:
        for t in truth:
            if p == t:
                hits += 1
                break
    recall = hits / len(truth)
    precision = hits / len(predicted) if len(predicted) > 0 else 0.0
    if precision + recall == 0:
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return recall, precision, f1


def test_exact_match_scores_one():
    score = score_discovery({"a", "b"}, {"a", "b"})
    assert (score.recall, score.precision, score.f1) == (1.0, 1.0, 1.0)


def test_superset_prediction_frozen_values():
    # oracle-computed: hits=2, recall=1, precision=2/3, f1=0.8
    score = score_discovery({"a", "b", "c"}, {"a", "b"})
    assert score.recall == 1.0
    assert score.precision == pytest.approx(0.6667, abs=1e-4)
    assert score.f1 == pytest.approx(0.8)


def test_empty_prediction_scores_zero():
    score = score_discovery(set(), {"a"})
    assert (score.recall, score.precision, score.f1) == (0.0, 0.0, 0.0)


def test_empty_truth_rejected():
    with pytest.raises(EmptyTruth):
        score_discovery({"a"}, set())


def test_matches_oracle_on_six_element_universe():
    universe = list("abcdef")
    subsets = [set(c) for r in range(7) for c in combinations(universe, r)]
    cases = 0
    for predicted in subsets:
        for truth in subsets:
            if not truth:
                continue
            expected = oracle_discovery(sorted(predicted), sorted(truth))
            got = score_discovery(predicted, truth)
            assert (got.recall, got.precision, got.f1) == expected
            cases += 1
    assert cases == 64 * 63


@given(
    predicted=st.sets(st.integers(min_value=0, max_value=20)),
    truth=st.sets(st.integers(min_value=0, max_value=20), min_size=1),
)
def test_discovery_properties(predicted, truth):
    score = score_discovery({str(x) for x in predicted}, {str(x) for x in truth})
    assert 0.0 <= score.recall <= 1.0
    assert 0.0 <= score.precision <= 1.0
    assert 0.0 <= score.f1 <= 1.0
    if score.precision + score.recall > 0:
        assert score.f1 == pytest.approx(
            2 * score.precision * score.recall / (score.precision + score.recall)
        )
    else:
        assert score.f1 == 0.0
    if predicted == truth:
        assert score.f1 == 1.0


# ---------------------------------------------------------------------------
# generation scoring
# ---------------------------------------------------------------------------


def _ok(stdout: str) -> ExecutionResult:
    return ExecutionResult(ExitStatus.OK, stdout, "", 0.1)


def _spec(checker="ExactScript", reference="60") -> TaskSpec:
    return TaskSpec(
        task_id="t",
        query_text="what is the mean age?",
        lake_root="/tmp/lake",
        ground_truth_file_ids=["f0000"],
        reference_answer=reference,
        checker=checker,
    )


def test_exact_script_match_scores_one():
    assert score_generation(_ok("60"), _spec()) == 1.0
    assert score_generation(_ok("60\n"), _spec()) == 1.0
    assert score_generation(_ok("59"), _spec()) == 0.0


def test_numeric_tolerance():
    assert exact_output_match("60.0000001", "60") is True
    assert exact_output_match("60.1", "60") is False
    assert exact_output_match("sixty", "60") is False


def test_timeout_scores_zero():
    result = ExecutionResult(ExitStatus.TIMEOUT, "", "", 120.0)
    assert score_generation(result, _spec()) == 0.0


def test_missing_execution_scores_zero():
    assert score_generation(None, _spec()) == 0.0


def test_scripted_judge_pair():
    spec = _spec(checker="LlmJudge")
    judge_yes = LlmJudge(make_gateway({"judge": ["1"]}))
    judge_no = LlmJudge(make_gateway({"judge": ["0"]}))
    assert score_generation(_ok("60"), spec, judge_yes) == 1.0
    assert score_generation(_ok("74"), spec, judge_no) == 0.0


def test_judge_unavailable_marks_unscored():
    spec = _spec(checker="LlmJudge")
    judge = LlmJudge(make_gateway({"judge": ["not a verdict"]}))
    assert score_generation(_ok("60"), spec, judge) is None
    assert score_generation(_ok("60"), spec, judge=None) is None


def test_judge_nonbinary_raises_internally():
    judge = LlmJudge(make_gateway({"judge": ["maybe"]}))
    with pytest.raises(JudgeUnavailable):
        judge.judge("q", "60", "60")


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


def _row(task_id, dataset, gen, f1=0.5) -> TaskRow:
    return TaskRow(
        task_id=task_id,
        dataset=dataset,
        generation_score=gen,
        discovery=DiscoveryScore(recall=f1, precision=f1, f1=f1),
        terminated_by="Answer",
    )


def test_macro_mean_of_two_datasets():
    report = aggregate([_row("a", "ds1", 0.2), _row("b", "ds2", 0.4)])
    assert report.overall["generation"] == pytest.approx(0.3)


def test_single_dataset_macro_equals_dataset_mean():
    report = aggregate([_row("a", "ds1", 0.25), _row("b", "ds1", 0.75)])
    assert report.per_dataset["ds1"]["generation"] == pytest.approx(0.5)
    assert report.overall["generation"] == pytest.approx(0.5)


def test_unweighted_macro_ignores_dataset_sizes():
    rows = [_row(f"a{i}", "big", 0.0) for i in range(9)] + [_row("b", "small", 1.0)]
    report = aggregate(rows)
    assert report.overall["generation"] == pytest.approx(0.5)


def test_paper_layout_three_datasets_six_domains():
    domains = ["archaeology", "astronomy", "biomedical", "environment", "legal", "wildfire"]
    rows = [_row(f"k{i}", f"kramabench/{d}", 0.5) for i, d in enumerate(domains)]
    rows += [_row("d1", "ds-bench", 0.4), _row("d2", "da-code", 0.1)]
    report = aggregate(rows)
    assert len(report.per_dataset) == 8
    table = report.render_table()
    for d in domains:
        assert f"kramabench/{d}" in table
    assert "macro average" in table


def test_unscored_excluded_with_count():
    rows = [_row("a", "ds", 1.0), _row("b", "ds", None), _row("c", "ds", 0.0)]
    report = aggregate(rows)
    assert report.unscored == 1
    assert report.per_dataset["ds"]["generation"] == pytest.approx(0.5)
    assert "unscored" in report.render_table()


def test_aggregates_recomputable_from_rows():
    rows = [_row("a", "x", 0.2, f1=0.4), _row("b", "x", 0.6, f1=0.8), _row("c", "y", 1.0, f1=0.1)]
    report = aggregate(rows)
    again = aggregate(report.per_task)
    assert again.per_dataset == report.per_dataset
    assert again.overall == report.overall


def test_f1_column_is_mean_of_task_f1():
    rows = [_row("a", "ds", 1.0, f1=1.0), _row("b", "ds", 1.0, f1=0.0)]
    report = aggregate(rows)
    # mean of per-task F1, not harmonic mean of aggregated P/R
    assert report.per_dataset["ds"]["f1"] == pytest.approx(0.5)
    assert "mean F1" in report.render_table()


def test_report_json_roundtrip(tmp_path):
    report = aggregate([_row("a", "ds", 0.5)], meta={"mode": "blackboard"})
    report.save(tmp_path / "report.json")
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["overall"]["generation"] == 0.5
    assert data["meta"]["mode"] == "blackboard"


def test_empty_aggregate_rejected():
    with pytest.raises(ValueError):
        aggregate([])


# ---------------------------------------------------------------------------
# task manifests
# ---------------------------------------------------------------------------


def test_load_task_manifest(tmp_path):
    manifest = {
        "tasks": [
            {
                "task_id": "t1",
                "query_text": "mean age?",
                "lake_root": "lakes/biomed",
                "ground_truth_file_ids": ["mmc1.xlsx"],
                "reference_answer": "60",
                "checker": "ExactScript",
                "dataset": "biomed",
            }
        ]
    }
    path = tmp_path / "tasks.json"
    path.write_text(json.dumps(manifest))
    specs = load_task_manifest(path)
    assert len(specs) == 1
    assert specs[0].task_id == "t1"
    assert specs[0].checker == "ExactScript"


def test_duplicate_task_ids_rejected(tmp_path):
    manifest = {
        "tasks": [
            {"task_id": "t", "query_text": "q", "lake_root": "l", "reference_answer": "1"},
            {"task_id": "t", "query_text": "q2", "lake_root": "l", "reference_answer": "2"},
        ]
    }
    path = tmp_path / "tasks.json"
    path.write_text(json.dumps(manifest))
    with pytest.raises(ValueError):
        load_task_manifest(path)


def test_unknown_checker_rejected():
    with pytest.raises(ValueError):
        TaskSpec(
            task_id="t",
            query_text="q",
            lake_root="l",
            ground_truth_file_ids=[],
            reference_answer="1",
            checker="VibeCheck",
        )
