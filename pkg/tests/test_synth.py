"""Tests for the synthetic corpus generator and the Follow-upQA pipeline."""

import json
from collections import Counter

import pytest
from fastapi.testclient import TestClient

from followup_kg.errors import SynthError
from followup_kg.schemas import QuestionType
from followup_kg.stub_endpoint import ScriptedResponder, create_stub_app
from followup_kg.synth import (
    STOP_TARGET,
    SynthSpec,
    apportion,
    build_followupqa,
    generate_synthetic,
    load_bundle,
    load_samples,
    save_bundle,
    shared_token_count,
    split_dataset,
    to_hotpot_records,
    write_splits,
)

from .helpers import stub_client

SMALL = SynthSpec(
    seed=0,
    counts={QuestionType.BRIDGE: 2, QuestionType.COMPARISON: 1, QuestionType.SINGLE: 1},
    distractors_per_question=5,
)


def test_small_bundle_has_expected_size():
    """2 bridge, 1 comparison, 1 single with 5 distractors each is 27 passages."""
    bundle = generate_synthetic(SMALL)
    assert len(bundle.corpus) == 27
    assert Counter(r.question_type for r in bundle.records) == {
        QuestionType.BRIDGE: 2,
        QuestionType.COMPARISON: 1,
        QuestionType.SINGLE: 1,
    }
    assert [r.id for r in bundle.records] == ["q0000", "q0001", "q0002", "q0003"]
    assert bundle.corpus.ids() == [f"p{i:05d}" for i in range(27)]


def test_golden_ids_resolve_and_answers_appear_in_evidence():
    """Every chain points into the corpus and its last passage states the answer."""
    bundle = generate_synthetic(SynthSpec(seed=3, n_questions=40))
    for record in bundle.records:
        texts = [bundle.corpus.get(pid).text for pid in record.golden_ids]
        if record.question_type is QuestionType.COMPARISON:
            assert record.answer in record.question
            assert record.answer in " ".join(texts)
        else:
            assert record.answer in texts[-1]
        assert bundle.knowledge.chains[record.question] == record.golden_ids


def test_bridge_passages_share_tokens():
    """Consecutive bridge passages share at least the configured token count."""
    bundle = generate_synthetic(SynthSpec(seed=1, n_questions=60))
    bridges = [row for row in bundle.report if row.question_type is QuestionType.BRIDGE]
    assert bridges
    for row in bridges:
        assert row.linked
        assert all(n >= 3 for n in row.shared_tokens)
    for record in bundle.records:
        if record.question_type is QuestionType.BRIDGE:
            first, second = (bundle.corpus.get(pid).text for pid in record.golden_ids)
            assert shared_token_count(first, second) >= 3


def test_default_mix_follows_proportions():
    """200 questions split 119/52/29 by largest remainder."""
    counts = SynthSpec(n_questions=200).type_counts()
    assert counts == {QuestionType.BRIDGE: 119, QuestionType.COMPARISON: 52, QuestionType.SINGLE: 29}
    assert apportion(10, [0.5, 0.25, 0.25]) == [5, 3, 2]


def test_generation_is_deterministic(tmp_path):
    """The same spec writes byte-identical files; another seed does not."""
    save_bundle(generate_synthetic(SMALL), tmp_path / "a")
    save_bundle(generate_synthetic(SMALL), tmp_path / "b")
    save_bundle(generate_synthetic(SMALL.model_copy(update={"seed": 1})), tmp_path / "c")
    for name in ("corpus.jsonl", "questions.jsonl", "report.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "corpus.jsonl").read_bytes() != (tmp_path / "c" / "corpus.jsonl").read_bytes()


def test_bundle_reloads(tmp_path):
    bundle = generate_synthetic(SMALL)
    save_bundle(bundle, tmp_path)
    loaded = load_bundle(tmp_path)
    assert loaded.corpus == bundle.corpus
    assert loaded.records == bundle.records
    assert loaded.report == bundle.report


def test_invalid_specs_are_rejected():
    """Proportions must sum to one; the name pool must not run dry."""
    with pytest.raises(ValueError):
        SynthSpec(proportions={QuestionType.BRIDGE: 0.5, QuestionType.SINGLE: 0.2})
    with pytest.raises(SynthError):
        generate_synthetic(SynthSpec(n_questions=10, entity_vocab_size=5))


def test_oracle_followupqa_targets():
    """Bridge targets the second hop, comparison the dropped passage, single NA."""
    bundle = generate_synthetic(SMALL)
    records = to_hotpot_records(bundle)
    result = build_followupqa(records, mode="oracle", seed=0)
    assert result.skipped == 0
    assert len(result.samples) == len(records)
    by_id = {r.id: r for r in records}
    for sample in result.samples:
        record = by_id[sample.source_id]
        texts = [p.text for p in record.supporting]
        if record.type is QuestionType.SINGLE:
            assert sample.target == STOP_TARGET and sample.is_stop
        elif record.type is QuestionType.BRIDGE:
            assert (sample.given, sample.target) == (texts[0], texts[1])
        else:
            assert {sample.given, sample.target} == set(texts)


def test_followupqa_budget_and_seed():
    """The budget samples records without replacement, reproducibly."""
    records = to_hotpot_records(generate_synthetic(SynthSpec(seed=2, n_questions=30)))
    first = build_followupqa(records, seed=4, budget=10)
    again = build_followupqa(records, seed=4, budget=10)
    assert len(first.samples) == 10
    assert first.samples == again.samples
    assert len({s.source_id for s in first.samples}) == 10


def test_llm_followupqa_skips_na_answers():
    """The dataset model writes multi-hop targets; an NA reply skips the record."""
    records = to_hotpot_records(generate_synthetic(SMALL))
    bridge_question = next(r.question for r in records if r.type is QuestionType.BRIDGE)
    app, endpoint = create_stub_app(ScriptedResponder({bridge_question: "Follow-up question: Who runs it?"}))
    with TestClient(app) as client:
        result = build_followupqa(records, mode="llm", client=stub_client(client), workers=2)
    targets = {s.source_id: s.target for s in result.samples}
    bridge_id = next(r.id for r in records if r.question == bridge_question)
    assert targets[bridge_id] == "Who runs it?"
    single_id = next(r.id for r in records if r.type is QuestionType.SINGLE)
    assert targets[single_id] == STOP_TARGET
    assert result.skipped == 2
    assert len(endpoint.chat_calls()) == 3


def test_llm_mode_needs_client():
    with pytest.raises(ValueError):
        build_followupqa([], mode="llm")


def test_split_dataset_partitions_samples():
    """100 items split 90/5/5; same seed, same split; nothing lost or duplicated."""
    items = list(range(100))
    train, val, test = split_dataset(items, seed=9)
    assert (len(train), len(val), len(test)) == (90, 5, 5)
    assert sorted(train + val + test) == items
    assert split_dataset(items, seed=9) == (train, val, test)
    with pytest.raises(SynthError):
        split_dataset([])
    with pytest.raises(ValueError):
        split_dataset(items, ratios=(0.5, 0.5, 0.5))


def test_write_splits(tmp_path):
    records = to_hotpot_records(generate_synthetic(SynthSpec(seed=5, n_questions=20)))
    samples = build_followupqa(records).samples
    sizes = write_splits(samples, tmp_path, seed=1)
    assert sizes == {"train": 18, "val": 1, "test": 1}
    assert json.loads((tmp_path / "splits.json").read_text(encoding="utf-8")) == sizes
    assert len(load_samples(tmp_path / "train.jsonl")) == 18
