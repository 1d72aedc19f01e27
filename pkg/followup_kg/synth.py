"""
Synthetic multi-hop corpora and the follow-up question dataset pipeline.

Synthetic questions come in three shapes:

- bridge: "What is the <attribute> of the <kind> that <E> <verb>?" answered by
  a hop-1 passage naming the bridge entity B and a hop-2 passage giving B's
  attribute. Both passages mention the kind and B, so they share at least
  ``min_shared_tokens`` tokens. Half of the hop-2 passages use a passive
  wording ("The museum B was founded by A.") that shares little with the
  question, so only the link from the hop-1 passage leads to them.
- comparison: "Which <kind> <was founded first>, <X> or <Y>?" answered by two
  parallel year passages.
- single: "What is the <attribute> of the <kind> <X>?" answered by one passage.

Entity names are pseudo-words drawn without replacement, so every name
appears only in the passages built for it.
"""

import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple, TypeVar, Union

from pydantic import BaseModel, Field, model_validator

from .agent import OracleKnowledge, parse_decision
from .corpus import Corpus, load_corpus, save_corpus
from .errors import SynthError
from .lexical import tokenize
from .llm_client import DATASET_DECODE, ChatClient, ChatRequest
from .prompts import PromptTemplate, load_prompt
from .schemas import FollowUpSample, GoldenRecord, Passage, QuestionType

logger = logging.getLogger(__name__)

T = TypeVar("T")

DEFAULT_PROPORTIONS = {
    QuestionType.BRIDGE: 0.595,
    QuestionType.COMPARISON: 0.26,
    QuestionType.SINGLE: 0.145,
}
DEFAULT_SPLIT = (0.90, 0.05, 0.05)
STOP_TARGET = "NA"

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


class Attribute(NamedTuple):
    noun: str
    value_kind: str  # "name" or "year"
    passive: str
    compare_phrase: Optional[str] = None


# Ordered so that any prefix of length >= 2 has a year and a name attribute.
ATTRIBUTES: Tuple[Attribute, ...] = (
    Attribute("founding year", "year", "was founded in", "was founded first"),
    Attribute("founder", "name", "was founded by"),
    Attribute("opening year", "year", "opened in", "opened first"),
    Attribute("director", "name", "is directed by"),
    Attribute("patron", "name", "is backed by"),
    Attribute("debut year", "year", "debuted in", "debuted first"),
    Attribute("chief curator", "name", "is curated by"),
)
KINDS = ("museum", "company", "band", "school", "magazine", "studio", "festival", "library", "theater", "orchestra")
VERBS = ("acquired", "sponsored", "owns", "manages", "funds", "supports", "advises", "visited")
TEMPLATE_WORDS = ("what", "is", "the", "of", "that", "which", "or")

YEAR_RANGE = (1800, 2020)
# Tokens per bridge-subject name; other names have two.
ENTITY_WIDTH = 4
# Share of hop-2 passages worded without the attribute noun the question uses.
PASSIVE_BRIDGE_RATE = 0.5


def _reserved_words() -> set:
    words = set(TEMPLATE_WORDS) | set(KINDS) | set(VERBS)
    for attribute in ATTRIBUTES:
        words.update(tokenize(attribute.noun))
        words.update(tokenize(attribute.passive))
        words.update(tokenize(attribute.compare_phrase or ""))
    return words


class SynthSpec(BaseModel):
    """Parameters of one synthetic bundle."""

    seed: int = Field(0, description="Seed for every random choice")
    n_questions: int = Field(200, ge=1, description="Total questions when counts is not given")
    counts: Optional[Dict[QuestionType, int]] = Field(None, description="Exact questions per type")
    proportions: Dict[QuestionType, float] = Field(default_factory=lambda: dict(DEFAULT_PROPORTIONS))
    distractors_per_question: int = Field(5, ge=0)
    entity_vocab_size: int = Field(20000, ge=1, description="Distinct pseudo-words available for names")
    attribute_vocab_size: int = Field(len(ATTRIBUTES), ge=2, le=len(ATTRIBUTES))
    min_shared_tokens: int = Field(3, ge=1, description="Tokens consecutive bridge passages must share")

    @model_validator(mode="after")
    def _check_mix(self) -> "SynthSpec":
        total = sum(self.proportions.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"proportions must sum to 1, got {total}")
        if any(p < 0 for p in self.proportions.values()):
            raise ValueError("proportions must be non-negative")
        if self.counts is not None and any(c < 0 for c in self.counts.values()):
            raise ValueError("counts must be non-negative")
        return self

    def type_counts(self) -> Dict[QuestionType, int]:
        if self.counts is not None:
            return {t: self.counts.get(t, 0) for t in QuestionType}
        weights = [self.proportions.get(t, 0.0) for t in QuestionType]
        return dict(zip(QuestionType, apportion(self.n_questions, weights)))


class ChainReport(BaseModel):
    question_id: str
    question_type: QuestionType
    shared_tokens: List[int] = Field(default_factory=list, description="Per consecutive golden pair")
    linked: bool


class SynthBundle(NamedTuple):
    corpus: Corpus
    records: List[GoldenRecord]
    knowledge: OracleKnowledge
    report: List[ChainReport]


def apportion(total: int, weights: Sequence[float]) -> List[int]:
    """Split ``total`` by ``weights`` with the largest-remainder method; ties favor earlier slots."""
    weight_sum = sum(weights)
    if weight_sum <= 0:
        raise ValueError("weights must have a positive sum")
    quotas = [total * w / weight_sum for w in weights]
    counts = [int(q) for q in quotas]
    leftover = total - sum(counts)
    by_remainder = sorted(range(len(weights)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in by_remainder[:leftover]:
        counts[i] += 1
    return counts


class _Names:
    """Pseudo-word pool; every drawn word is used once."""

    def __init__(self, rng: random.Random, size: int):
        reserved = _reserved_words()
        capacity = (len(_CONSONANTS) * len(_VOWELS)) ** 3
        if size > capacity:
            raise SynthError(f"entity_vocab_size {size} exceeds the {capacity} available pseudo-words")
        seen = set()
        words: List[str] = []
        while len(words) < size:
            word = "".join(rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(3))
            if word not in seen and word not in reserved:
                seen.add(word)
                words.append(word)
        self._words: Iterator[str] = iter(words)
        self.size = size

    def name(self, n_tokens: int) -> str:
        try:
            return " ".join(next(self._words).capitalize() for _ in range(n_tokens))
        except StopIteration:
            raise SynthError(
                f"entity vocabulary of {self.size} pseudo-words exhausted; raise entity_vocab_size"
            ) from None


class _Draft(NamedTuple):
    title: str
    text: str


def _attribute_text(attribute: Attribute, kind: str, subject: str, value: str) -> str:
    return f"The {attribute.noun} of the {kind} {subject} is {value}."


def _passive_text(attribute: Attribute, kind: str, subject: str, value: str) -> str:
    return f"The {kind} {subject} {attribute.passive} {value}."


def _hop1_text(entity: str, verb: str, kind: str, bridge: str) -> str:
    return f"{entity} {verb} the {kind} {bridge}."


class _Builder:
    def __init__(self, spec: SynthSpec):
        self.spec = spec
        self.rng = random.Random(spec.seed)
        self.names = _Names(self.rng, spec.entity_vocab_size)
        self.attributes = ATTRIBUTES[: spec.attribute_vocab_size]
        self.year_attributes = [a for a in self.attributes if a.value_kind == "year"]
        self.drafts: List[_Draft] = []

    def add(self, title: str, text: str) -> int:
        self.drafts.append(_Draft(title, text))
        return len(self.drafts) - 1

    def value(self, attribute: Attribute, exclude: Sequence[str] = ()) -> str:
        if attribute.value_kind == "name":
            return self.names.name(2)
        while True:
            year = str(self.rng.randint(*YEAR_RANGE))
            if year not in exclude:
                return year

    def hard_negative(self, attribute: Attribute, kind: str, exclude: Sequence[str]) -> None:
        subject = self.names.name(2)
        self.add(subject, _attribute_text(attribute, kind, subject, self.value(attribute, exclude)))

    def bridge_width(self) -> int:
        return max(2, self.spec.min_shared_tokens - 2)

    def bridge(self) -> Tuple[str, str, List[int]]:
        attribute = self.rng.choice(self.attributes)
        kind = self.rng.choice(KINDS)
        verb = self.rng.choice(VERBS)
        entity = self.names.name(ENTITY_WIDTH)
        bridge = self.names.name(self.bridge_width())
        answer = self.value(attribute)
        hop2 = _passive_text if self.rng.random() < PASSIVE_BRIDGE_RATE else _attribute_text
        first = self.add(entity, _hop1_text(entity, verb, kind, bridge))
        second = self.add(bridge, hop2(attribute, kind, bridge, answer))
        question = f"What is the {attribute.noun} of the {kind} that {entity} {verb}?"

        for i in range(self.spec.distractors_per_question):
            if i == 0:
                other_verb = self.rng.choice([v for v in VERBS if v != verb])
                other_kind = self.rng.choice([k for k in KINDS if k != kind])
                self.add(entity, _hop1_text(entity, other_verb, other_kind, self.names.name(self.bridge_width())))
            elif i % 2 == 1:
                self.hard_negative(attribute, kind, exclude=[answer])
            else:
                stranger = self.names.name(ENTITY_WIDTH)
                self.add(stranger, _hop1_text(stranger, verb, kind, self.names.name(self.bridge_width())))
        return question, answer, [first, second]

    def comparison(self) -> Tuple[str, str, List[int]]:
        attribute = self.rng.choice(self.year_attributes)
        kind = self.rng.choice(KINDS)
        first_name, second_name = self.names.name(2), self.names.name(2)
        first_year = self.value(attribute)
        second_year = self.value(attribute, exclude=[first_year])
        first = self.add(first_name, _attribute_text(attribute, kind, first_name, first_year))
        second = self.add(second_name, _attribute_text(attribute, kind, second_name, second_year))
        answer = first_name if int(first_year) < int(second_year) else second_name
        question = f"Which {kind} {attribute.compare_phrase}, {first_name} or {second_name}?"
        for _ in range(self.spec.distractors_per_question):
            self.hard_negative(attribute, kind, exclude=[first_year, second_year])
        return question, answer, [first, second]

    def single(self) -> Tuple[str, str, List[int]]:
        attribute = self.rng.choice(self.attributes)
        kind = self.rng.choice(KINDS)
        subject = self.names.name(2)
        answer = self.value(attribute)
        only = self.add(subject, _attribute_text(attribute, kind, subject, answer))
        question = f"What is the {attribute.noun} of the {kind} {subject}?"
        for _ in range(self.spec.distractors_per_question):
            self.hard_negative(attribute, kind, exclude=[answer])
        return question, answer, [only]


def shared_token_count(a: str, b: str) -> int:
    return len(set(tokenize(a)) & set(tokenize(b)))


def generate_synthetic(spec: SynthSpec) -> SynthBundle:
    """
    Build a corpus, golden records, oracle knowledge and a construction report.

    Every choice flows from ``spec.seed``; the same spec always yields the same bundle.

    Raises:
        SynthError: The pseudo-word pool ran out before every name was drawn
    """
    builder = _Builder(spec)
    counts = spec.type_counts()
    types = [t for t in QuestionType for _ in range(counts[t])]
    builder.rng.shuffle(types)
    makers = {
        QuestionType.BRIDGE: builder.bridge,
        QuestionType.COMPARISON: builder.comparison,
        QuestionType.SINGLE: builder.single,
    }
    drafted = [(question_type, *makers[question_type]()) for question_type in types]

    order = list(range(len(builder.drafts)))
    builder.rng.shuffle(order)
    ids = [""] * len(order)
    passages = []
    for ordinal, slot in enumerate(order):
        ids[slot] = f"p{ordinal:05d}"
        draft = builder.drafts[slot]
        passages.append(Passage(id=ids[slot], title=draft.title, text=draft.text))
    corpus = Corpus(passages)

    records: List[GoldenRecord] = []
    report: List[ChainReport] = []
    for i, (question_type, question, answer, slots) in enumerate(drafted):
        record = GoldenRecord(
            id=f"q{i:04d}",
            question=question,
            answer=answer,
            golden_ids=[ids[s] for s in slots],
            question_type=question_type,
        )
        records.append(record)
        texts = [builder.drafts[s].text for s in slots]
        shared = [shared_token_count(a, b) for a, b in zip(texts, texts[1:])]
        report.append(
            ChainReport(
                question_id=record.id,
                question_type=question_type,
                shared_tokens=shared,
                linked=all(n >= spec.min_shared_tokens for n in shared),
            )
        )

    logger.info(
        "Generated %d questions (%s) over %d passages",
        len(records),
        ", ".join(f"{t.value}={counts[t]}" for t in QuestionType),
        len(corpus),
    )
    return SynthBundle(corpus, records, OracleKnowledge.from_records(records), report)


def _write_jsonl(path: Path, models: Sequence[BaseModel]) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for model in models:
            f.write(model.model_dump_json() + "\n")


def _read_jsonl(path: Path, model: type) -> list:
    rows = []
    with path.open(encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rows.append(model.model_validate_json(line))
    return rows


def save_bundle(bundle: SynthBundle, out_dir: Union[str, Path]) -> None:
    """Write corpus.jsonl, questions.jsonl and report.jsonl under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_corpus(bundle.corpus, out / "corpus.jsonl")
    _write_jsonl(out / "questions.jsonl", bundle.records)
    _write_jsonl(out / "report.jsonl", bundle.report)
    logger.info("Saved synthetic bundle to %s", out)


def load_golden_records(path: Union[str, Path]) -> List[GoldenRecord]:
    return _read_jsonl(Path(path), GoldenRecord)


def load_bundle(out_dir: Union[str, Path]) -> SynthBundle:
    out = Path(out_dir)
    corpus = load_corpus(out / "corpus.jsonl")
    records = load_golden_records(out / "questions.jsonl")
    report_path = out / "report.jsonl"
    report = _read_jsonl(report_path, ChainReport) if report_path.exists() else []
    return SynthBundle(corpus, records, OracleKnowledge.from_records(records), report)


# -- Follow-upQA construction ----------------------------------------------


class SupportingPassage(BaseModel):
    title: str = ""
    text: str


class HotpotRecord(BaseModel):
    """HotpotQA-shaped question with its supporting passages in reasoning order."""

    id: str
    question: str
    answer: str
    type: QuestionType
    supporting: List[SupportingPassage]


def to_hotpot_records(bundle: SynthBundle) -> List[HotpotRecord]:
    corpus = bundle.corpus
    return [
        HotpotRecord(
            id=record.id,
            question=record.question,
            answer=record.answer,
            type=record.question_type,
            supporting=[
                SupportingPassage(title=corpus.get(pid).title, text=corpus.get(pid).text) for pid in record.golden_ids
            ],
        )
        for record in bundle.records
    ]


def load_hotpot_records(path: Union[str, Path]) -> List[HotpotRecord]:
    return _read_jsonl(Path(path), HotpotRecord)


def save_samples(samples: Sequence[FollowUpSample], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_jsonl(path, samples)


def load_samples(path: Union[str, Path]) -> List[FollowUpSample]:
    return _read_jsonl(Path(path), FollowUpSample)


class FollowUpQAResult(NamedTuple):
    samples: List[FollowUpSample]
    skipped: int


def _check_record(record: HotpotRecord) -> None:
    n = len(record.supporting)
    if record.type is QuestionType.SINGLE and n != 1:
        raise SynthError(f"record {record.id}: single-hop records need exactly 1 supporting passage, got {n}")
    if record.type is not QuestionType.SINGLE and n < 2:
        raise SynthError(f"record {record.id}: {record.type.value} records need >= 2 supporting passages, got {n}")


def build_followupqa(
    records: Sequence[HotpotRecord],
    mode: str = "oracle",
    client: Optional[ChatClient] = None,
    seed: int = 0,
    budget: Optional[int] = None,
    template: Optional[PromptTemplate] = None,
    workers: int = 1,
) -> FollowUpQAResult:
    """
    Turn multi-hop records into (question, given passage, follow-up) samples.

    Bridge records keep their first passage; comparison records drop one of
    their two passages at random; single-hop records get the target "NA".
    In ``oracle`` mode the target is the missing passage's text, in ``llm``
    mode the dataset model writes it.

    Args:
        records: Input records, supporting passages in reasoning order
        mode: "oracle" or "llm"
        client: Chat client for the dataset model (llm mode)
        seed: Seed for record sampling and passage dropping
        budget: Maximum records to use, sampled without replacement
        template: Dataset prompt; the bundled one by default
        workers: Concurrent dataset-model calls

    Returns:
        The samples in sampling order and the number of records skipped
        because the dataset model failed or answered "NA"
    """
    if mode not in ("oracle", "llm"):
        raise ValueError(f"mode must be 'oracle' or 'llm', got {mode!r}")
    if mode == "llm" and client is None:
        raise ValueError("llm mode needs a dataset client")
    for record in records:
        _check_record(record)

    rng = random.Random(seed)
    order = list(range(len(records)))
    rng.shuffle(order)
    if budget is not None:
        order = order[:budget]

    plans: List[Tuple[HotpotRecord, SupportingPassage, Optional[SupportingPassage]]] = []
    for index in order:
        record = records[index]
        if record.type is QuestionType.SINGLE:
            plans.append((record, record.supporting[0], None))
        elif record.type is QuestionType.BRIDGE:
            plans.append((record, record.supporting[0], record.supporting[1]))
        else:
            dropped = rng.randrange(2)
            plans.append((record, record.supporting[1 - dropped], record.supporting[dropped]))

    dataset_prompt = template or load_prompt("dataset")

    def target_for(plan: Tuple[HotpotRecord, SupportingPassage, Optional[SupportingPassage]]) -> Optional[str]:
        record, given, missing = plan
        if missing is None:
            return STOP_TARGET
        if mode == "oracle":
            return missing.text
        system, user = dataset_prompt.render(question=record.question, given=given.text)
        try:
            text = client.complete(ChatRequest.build(client.model, user, system=system, decode=DATASET_DECODE)).text
        except Exception as e:
            logger.warning("Dataset model failed on %s: %s", record.id, e)
            return None
        decision = parse_decision(text)
        if decision.is_stop:
            logger.warning("Dataset model answered NA for multi-hop record %s; skipped", record.id)
            return None
        return decision.question

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        targets = list(pool.map(target_for, plans))

    samples = [
        FollowUpSample(
            question=record.question,
            given=given.text,
            target=target,
            question_type=record.type,
            source_id=record.id,
        )
        for (record, given, _), target in zip(plans, targets)
        if target is not None
    ]
    skipped = len(plans) - len(samples)
    logger.info("Built %d follow-up samples (%d skipped)", len(samples), skipped)
    return FollowUpQAResult(samples, skipped)


def split_dataset(
    samples: Sequence[T],
    ratios: Sequence[float] = DEFAULT_SPLIT,
    seed: int = 0,
) -> Tuple[List[T], List[T], List[T]]:
    """Seeded shuffle, then contiguous train/validation/test cuts."""
    if not samples:
        raise SynthError("cannot split an empty dataset")
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    shuffled = list(samples)
    random.Random(seed).shuffle(shuffled)
    n_train, n_val, _ = apportion(len(shuffled), ratios)
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_val],
        shuffled[n_train + n_val :],
    )


def write_splits(samples: Sequence[FollowUpSample], out_dir: Union[str, Path], seed: int = 0) -> Dict[str, int]:
    out = Path(out_dir)
    sizes = {}
    for name, part in zip(("train", "val", "test"), split_dataset(samples, seed=seed)):
        save_samples(part, out / f"{name}.jsonl")
        sizes[name] = len(part)
    (out / "splits.json").write_text(json.dumps(sizes, sort_keys=True) + "\n", encoding="utf-8")
    return sizes
