import random

import pytest

from evigraph.evalharness import (
    EvalQuestion,
    IncompleteMatrix,
    MissingGoldAndManual,
    ScoreRecord,
    aggregate,
    format_pct,
    format_report,
    format_score,
    load_manual_scores,
    load_questions,
    load_score_records,
    score_response,
)

from conftest import PAPER_SCORES_PATH, QUESTIONS_PATH


def test_load_question_bank():
    questions = load_questions(QUESTIONS_PATH)
    assert len(questions) == 10
    assert [q.level for q in questions].count(1) == 3
    assert [q.level for q in questions].count(3) == 2
    assert sum(q.multi_doc for q in questions) == 4


def test_question_level_range():
    with pytest.raises(ValueError):
        EvalQuestion(id="Q1", level=7, text="x")
    EvalQuestion(id="Q2", level=5, text="reserved level is accepted")


def test_score_record_validation():
    with pytest.raises(ValueError):
        ScoreRecord("Q1", "vanilla", 11, False, "None", False, 10)
    with pytest.raises(ValueError):
        ScoreRecord("Q1", "other", 5, False, "None", False, 10)
    with pytest.raises(ValueError):
        ScoreRecord("Q1", "vanilla", 5, False, "Great", False, 10)


def test_score_response_grounded_answer(agent, corpus_records):
    q = EvalQuestion(id="Q001", level=1, text="how many weeks was the home-based telerehabilitation program evaluated?", gold="12 weeks")
    result = agent.answer(q.text)
    record = score_response(result.response, result.trace, q, corpus_records)
    assert record.accuracy == 10
    assert record.retrieval_success is True
    assert record.evidence_quality == "Strong"
    assert record.hallucination is False
    assert record.word_count == result.response.word_count


def test_score_response_no_evidence_answer(agent, corpus_records):
    q = EvalQuestion(id="QX", level=2, text="statin dosing schedule in cardiology", gold="atorvastatin")
    result = agent.answer(q.text)
    record = score_response(result.response, result.trace, q, corpus_records)
    assert record.retrieval_success is False
    assert record.evidence_quality == "None"
    assert record.accuracy == 0
    assert record.hallucination is False


def test_score_response_detects_foreign_citation(agent, corpus_records):
    q = EvalQuestion(id="QY", level=1, text="how does aerobic exercise improve memory in dementia?", gold="bdnf")
    result = agent.answer(q.text)
    record = score_response(result.response, result.trace, q, corpus_records)
    assert record.hallucination is False
    result.response.citations.append("GHOST99")
    tampered = score_response(result.response, result.trace, q, corpus_records)
    assert tampered.hallucination is True
    # Monotone: adding another unresolvable citation cannot clear the flag.
    result.response.citations.append("GHOST100")
    assert score_response(result.response, result.trace, q, corpus_records).hallucination is True


def test_score_response_manual_entry_path(agent, corpus_records, tmp_path):
    q = EvalQuestion(id="QZ", level=4, text="how does aerobic exercise improve memory in dementia?", gold=None)
    result = agent.answer(q.text)
    with pytest.raises(MissingGoldAndManual):
        score_response(result.response, result.trace, q, corpus_records)
    manual_file = tmp_path / "manual.csv"
    manual_file.write_text("question_id,system,accuracy\nQZ,causal_agent,7\n")
    manual = load_manual_scores(manual_file)
    record = score_response(result.response, result.trace, q, corpus_records, manual=manual)
    assert record.accuracy == 7


def test_aggregate_reproduces_published_tables():
    questions = load_questions(QUESTIONS_PATH)
    records = load_score_records(PAPER_SCORES_PATH)
    report = aggregate(records, questions)

    assert report.systems["vanilla"].total == 34
    assert report.systems["causal_agent"].total == 95
    assert report.systems["rag_only"].total == 94
    assert format_pct(report.systems["vanilla"].overall_pct) == "34%"
    assert format_pct(report.systems["causal_agent"].overall_pct) == "95%"
    assert format_pct(report.systems["rag_only"].overall_pct) == "94%"
    assert report.systems["vanilla"].retrieval_rate_pct == 0.0
    assert report.systems["causal_agent"].retrieval_rate_pct == 100.0
    assert report.systems["rag_only"].retrieval_rate_pct == 100.0
    assert report.systems["vanilla"].failures == 5
    assert report.systems["vanilla"].perfects == 1
    assert report.systems["causal_agent"].perfects == 7
    assert report.systems["rag_only"].perfects == 7
    assert report.systems["vanilla"].hallucinations == 1
    assert report.systems["causal_agent"].hallucinations == 0

    by_level = {row.level: row for row in report.levels}
    assert format_score(by_level[1].baseline_mean) == "3.3"
    assert format_pct(by_level[1].baseline_pct) == "33%"
    assert format_score(by_level[1].rag_mean) == "10.0"
    assert format_score(by_level[3].baseline_mean) == "0.0"
    assert format_score(by_level[3].rag_mean) == "8.5"
    assert format_score(by_level[4].baseline_mean) == "4.5"
    assert format_score(by_level[4].rag_mean) == "8.75"
    assert format_pct(by_level[4].rag_pct) == "87.5%"
    assert format_score(report.overall.rag_mean) == "9.45"


def test_aggregate_total_identity_for_ten_questions():
    questions = [EvalQuestion(id=f"Q{i}", level=1, text="t") for i in range(10)]
    records = [
        ScoreRecord(f"Q{i}", "causal_agent", 10, True, "Strong", False, 100)
        for i in range(10)
    ]
    report = aggregate(records, questions)
    summary = report.systems["causal_agent"]
    assert summary.total == 100
    assert summary.overall_pct == 100.0
    assert summary.total / 100 == summary.overall_pct / 100  # total/100 == percent/100


def test_aggregate_rejects_incomplete_matrix():
    questions = [EvalQuestion(id="Q1", level=1, text="t"), EvalQuestion(id="Q2", level=1, text="t")]
    records = [ScoreRecord("Q1", "vanilla", 5, False, "None", False, 10)]
    with pytest.raises(IncompleteMatrix) as exc:
        aggregate(records, questions)
    assert ("Q2", "vanilla") in exc.value.missing


def test_aggregate_is_permutation_invariant():
    questions = load_questions(QUESTIONS_PATH)
    records = load_score_records(PAPER_SCORES_PATH)
    base = aggregate(records, questions).to_dict()
    rng = random.Random(3)
    for _ in range(5):
        shuffled = list(records)
        rng.shuffle(shuffled)
        assert aggregate(shuffled, questions).to_dict() == base


def test_format_rules():
    assert format_score(10 / 3) == "3.3"
    assert format_score(5.0) == "5.0"
    assert format_score(8.75) == "8.75"
    assert format_score(8.5) == "8.5"
    assert format_score(10.0) == "10.0"
    assert format_score(9.45) == "9.45"
    assert format_pct(100.0 / 3) == "33%"
    assert format_pct(87.5) == "87.5%"
    assert format_pct(100.0) == "100%"
    assert format_pct(94.5) == "94.5%"


def test_format_report_contains_published_rows():
    questions = load_questions(QUESTIONS_PATH)
    records = load_score_records(PAPER_SCORES_PATH)
    table = format_report(aggregate(records, questions))
    assert "Total Score (out of 100)" in table
    assert "34" in table and "95" in table and "94" in table
    assert "8.75/10 (87.5%)" in table
    assert "3.3/10 (33%)" in table
