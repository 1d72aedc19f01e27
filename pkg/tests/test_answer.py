"""Tests for answer generation and judging."""

import json

import pytest
from fastapi.testclient import TestClient

from followup_kg.answer import (
    answer_question,
    generate_answer,
    generate_closed_book_answer,
    generate_golden_answer,
    judge_exact,
    judge_llm,
    number_passages,
    parse_verdict,
    render_answer_prompt,
    write_answer_records,
)
from followup_kg.llm_client import JUDGE_DECODE
from followup_kg.prompts import parse_template
from followup_kg.schemas import GoldenRecord, Passage, Verdict
from followup_kg.stub_endpoint import ScriptedResponder, create_stub_app

from .helpers import stub_client


@pytest.fixture
def answering():
    responder = ScriptedResponder({"Predicted answer: Paris": "Correct.", "Eiffel": "Paris"}, default="unknown")
    app, endpoint = create_stub_app(responder)
    with TestClient(app) as client:
        yield endpoint, stub_client(client)


def test_generated_answer_is_completion_text(answering, small_corpus):
    """The answer is the model's reply; passages are numbered in the prompt."""
    endpoint, client = answering
    answer = generate_answer(client, "Where is the Eiffel Tower?", [small_corpus.get("d0"), small_corpus.get("d1")])
    assert answer == "Paris"
    user = endpoint.chat_calls()[0]["messages"][-1]["content"]
    assert "[1] The Eiffel Tower is located in Paris." in user
    assert "[2] Paris is the capital of France." in user
    assert endpoint.chat_calls()[0]["temperature"] == 0.0


def test_empty_context_is_rejected(answering):
    _, client = answering
    with pytest.raises(ValueError):
        generate_answer(client, "q", [])


def test_closed_book_and_golden_answers(answering, small_corpus):
    """Closed-book sends no passages; golden context uses the record's chain."""
    endpoint, client = answering
    assert generate_closed_book_answer(client, "What is this?") == "unknown"
    assert "[1]" not in endpoint.chat_calls()[-1]["messages"][-1]["content"]
    record = GoldenRecord(
        id="q", question="Which city has the Eiffel Tower?", answer="Paris", golden_ids=["d0"], question_type="single"
    )
    assert generate_golden_answer(client, record, small_corpus) == "Paris"


def test_number_passages_respects_budget():
    """Later passages drop first; an oversized first passage is cut."""
    passages = [Passage(id="a", title="A", text="x" * 10), Passage(id="b", text="y" * 10)]
    assert number_passages(passages, 100) == "[1] A: xxxxxxxxxx\n[2] yyyyyyyyyy"
    assert number_passages(passages, 20) == "[1] A: xxxxxxxxxx"
    assert number_passages(passages, 6) == "[1] A:"


def test_prompt_stays_within_budget():
    """System plus user never exceed the character budget."""
    passages = [Passage(id=str(i), text="word " * 200) for i in range(20)]
    system, user = render_answer_prompt("Which one?", passages, char_budget=2000)
    assert len(system) + len(user) <= 2000
    with pytest.raises(ValueError):
        render_answer_prompt("?" * 5000, passages, char_budget=2000)


@pytest.mark.parametrize(
    "raw, verdict",
    [
        ("correct", Verdict.CORRECT),
        ("Correct.", Verdict.CORRECT),
        ("YES", Verdict.CORRECT),
        ("incorrect", Verdict.INCORRECT),
        ("", Verdict.INCORRECT),
        ("I think it is correct", Verdict.INCORRECT),
    ],
)
def test_parse_verdict(raw, verdict):
    assert parse_verdict(raw) is verdict


def test_llm_judge_uses_judge_prompt(answering):
    endpoint, client = answering
    assert judge_llm(client, "Where?", "Paris", "Paris, France") is Verdict.CORRECT
    assert judge_llm(client, "Where?", "Rome", "Paris") is Verdict.INCORRECT
    assert endpoint.chat_calls()[-1]["max_tokens"] == JUDGE_DECODE.max_tokens


@pytest.mark.parametrize(
    "predicted, gold, verdict",
    [
        ("Paris", "paris", Verdict.CORRECT),
        ("  The  Beatles! ", "the beatles", Verdict.CORRECT),
        ("1889", "1889.", Verdict.CORRECT),
        ("Rome", "Paris", Verdict.INCORRECT),
        ("Arthur’s", "arthurs", Verdict.CORRECT),
        ("“Paris”", "Paris", Verdict.CORRECT),
        ("«Rome»", "rome", Verdict.CORRECT),
    ],
)
def test_exact_judge(predicted, gold, verdict):
    assert judge_exact(predicted, gold) is verdict


def test_answer_records_round_trip_to_jsonl(answering, small_corpus, tmp_path):
    """Records carry retrieved ids, answer, gold and verdict."""
    _, client = answering
    record = answer_question(client, "q1", "Where is the Eiffel Tower?", [small_corpus.get("d0")], gold="paris")
    assert record.verdict is Verdict.CORRECT
    assert record.retrieved_ids == ["d0"]
    path = tmp_path / "answers.jsonl"
    assert write_answer_records([record], path) == 1
    row = json.loads(path.read_text(encoding="utf-8"))
    assert row["answer"] == "Paris" and row["verdict"] == "correct"


def test_empty_context_fails_closed(answering):
    """Nothing retrieved means no model call and an incorrect verdict."""
    endpoint, client = answering
    record = answer_question(client, "q2", "Where is it?", [], gold="Paris")
    assert record.answer == "" and record.retrieved_ids == []
    assert record.verdict is Verdict.INCORRECT
    assert answer_question(client, "q3", "Where is it?", []).verdict is None
    assert endpoint.chat_calls() == []


def test_answer_question_uses_given_templates_and_budget(answering, small_corpus):
    """Override templates reach the model and the prompt stays within the budget."""
    endpoint, client = answering
    template = parse_template("answer", "Custom sys\n---\nQ={question} P={passages}")
    judge_template = parse_template("judge", "Custom judge\n---\nPredicted answer: {predicted} vs {gold}")
    record = answer_question(
        client,
        "q1",
        "Where is the Eiffel Tower?",
        [small_corpus.get("d0")],
        gold="paris",
        judge=client,
        char_budget=60,
        template=template,
        judge_template=judge_template,
    )
    assert record.answer == "Paris"
    assert record.verdict is Verdict.CORRECT
    answer_call, judge_call = endpoint.chat_calls()
    assert answer_call["messages"][0]["content"] == "Custom sys"
    assert answer_call["messages"][-1]["content"] == "Q=Where is the Eiffel Tower? P=[1] The Eiffel Towe"
    assert sum(len(m["content"]) for m in answer_call["messages"]) <= 60
    assert judge_call["messages"][0]["content"] == "Custom judge"
    assert judge_call["messages"][-1]["content"] == "Predicted answer: Paris vs paris"
