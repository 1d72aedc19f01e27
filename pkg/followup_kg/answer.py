"""Answer generation over retrieved context, and answer judging."""

import logging
import re
import unicodedata
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

from .corpus import Corpus
from .llm_client import ANSWER_DECODE, JUDGE_DECODE, ChatClient, ChatRequest, DecodeParams
from .prompts import PromptTemplate, load_prompt
from .schemas import AnswerRecord, GoldenRecord, Passage, Verdict

logger = logging.getLogger(__name__)

DEFAULT_PROMPT_CHAR_BUDGET = 12000
CORRECT_WORDS = frozenset({"correct", "yes"})

_SPACE_RE = re.compile(r"\s+")


def strip_punctuation(text: str) -> str:
    """Drop every Unicode punctuation character (general category P*)."""
    return "".join(ch for ch in text if not unicodedata.category(ch).startswith("P"))


def number_passages(passages: Sequence[Passage], char_budget: int) -> str:
    """
    Render ``[i] title: text`` blocks, earliest first, within ``char_budget``.

    Later passages are dropped once the budget is reached; a first passage
    longer than the whole budget is cut.
    """
    blocks: List[str] = []
    used = 0
    for i, passage in enumerate(passages, start=1):
        body = f"{passage.title}: {passage.text}" if passage.title else passage.text
        block = f"[{i}] {body}"
        cost = len(block) + (1 if blocks else 0)
        if used + cost > char_budget:
            if not blocks and char_budget > 0:
                blocks.append(block[:char_budget])
            break
        blocks.append(block)
        used += cost
    return "\n".join(blocks)


def render_answer_prompt(
    question: str,
    passages: Sequence[Passage],
    template: Optional[PromptTemplate] = None,
    char_budget: int = DEFAULT_PROMPT_CHAR_BUDGET,
) -> Tuple[str, str]:
    """Return the (system, user) pair sent for ``question`` with ``passages`` as context."""
    template = template or load_prompt("answer")
    room = char_budget - template.static_length(question=question)
    if room <= 0:
        raise ValueError(f"question alone exceeds the {char_budget}-character prompt budget")
    return template.render(question=question, passages=number_passages(passages, room))


def _ask(client: ChatClient, system: str, user: str, decode: DecodeParams) -> str:
    request = ChatRequest.build(client.model, user, system=system, decode=decode)
    return client.complete(request).text.strip()


def generate_answer(
    client: ChatClient,
    question: str,
    passages: Sequence[Passage],
    template: Optional[PromptTemplate] = None,
    char_budget: int = DEFAULT_PROMPT_CHAR_BUDGET,
    decode: DecodeParams = ANSWER_DECODE,
) -> str:
    """
    Answer ``question`` from ``passages``.

    Args:
        client: Chat client for the answering model
        question: User question
        passages: Retrieved passages in retrieval order
        template: Answer prompt; the bundled one by default
        char_budget: Maximum characters of system plus user prompt
        decode: Sampling parameters

    Returns:
        The completion text, stripped

    Raises:
        ValueError: ``passages`` is empty
    """
    if not passages:
        raise ValueError("generate_answer needs at least one passage")
    system, user = render_answer_prompt(question, passages, template, char_budget)
    return _ask(client, system, user, decode)


def generate_closed_book_answer(
    client: ChatClient,
    question: str,
    template: Optional[PromptTemplate] = None,
    decode: DecodeParams = ANSWER_DECODE,
) -> str:
    """Answer without any retrieved context."""
    system, user = (template or load_prompt("closed_book")).render(question=question)
    return _ask(client, system, user, decode)


def generate_golden_answer(
    client: ChatClient,
    record: GoldenRecord,
    corpus: Corpus,
    template: Optional[PromptTemplate] = None,
    char_budget: int = DEFAULT_PROMPT_CHAR_BUDGET,
) -> str:
    """Answer from the record's golden passages; the upper bound for any retriever."""
    passages = [corpus.get(pid) for pid in record.golden_ids]
    return generate_answer(client, record.question, passages, template, char_budget)


def parse_verdict(raw: str) -> Verdict:
    words = raw.strip().split()
    if not words:
        return Verdict.INCORRECT
    first = strip_punctuation(words[0]).lower()
    return Verdict.CORRECT if first in CORRECT_WORDS else Verdict.INCORRECT


def judge_llm(
    client: ChatClient,
    question: str,
    predicted: str,
    gold: str,
    template: Optional[PromptTemplate] = None,
) -> Verdict:
    """Ask the judge model whether ``predicted`` matches ``gold``; unparseable replies are incorrect."""
    system, user = (template or load_prompt("judge")).render(question=question, gold=gold, predicted=predicted)
    return parse_verdict(_ask(client, system, user, JUDGE_DECODE))


def normalize_answer(text: str) -> str:
    return _SPACE_RE.sub(" ", strip_punctuation(text.lower())).strip()


def judge_exact(predicted: str, gold: str) -> Verdict:
    """Offline judge: equal after lowercasing, stripping punctuation and collapsing whitespace."""
    return Verdict.CORRECT if normalize_answer(predicted) == normalize_answer(gold) else Verdict.INCORRECT


def answer_question(
    client: ChatClient,
    question_id: str,
    question: str,
    passages: Sequence[Passage],
    gold: Optional[str] = None,
    judge: Optional[ChatClient] = None,
    char_budget: int = DEFAULT_PROMPT_CHAR_BUDGET,
    template: Optional[PromptTemplate] = None,
    judge_template: Optional[PromptTemplate] = None,
) -> AnswerRecord:
    """
    Generate an answer and, when ``gold`` is known, judge it (LLM judge if given, else exact).

    With no passages nothing is generated: the answer is empty and, when
    ``gold`` is known, the verdict is incorrect, so such questions still
    count against accuracy.
    """
    if not passages:
        return AnswerRecord(
            question_id=question_id,
            question=question,
            retrieved_ids=[],
            answer="",
            gold_answer=gold,
            verdict=Verdict.INCORRECT if gold is not None else None,
        )
    answer = generate_answer(client, question, passages, template, char_budget)
    verdict = None
    if gold is not None:
        if judge is not None:
            verdict = judge_llm(judge, question, answer, gold, judge_template)
        else:
            verdict = judge_exact(answer, gold)
    return AnswerRecord(
        question_id=question_id,
        question=question,
        retrieved_ids=[p.id for p in passages],
        answer=answer,
        gold_answer=gold,
        verdict=verdict,
    )


def write_answer_records(records: Iterable[AnswerRecord], path: Union[str, Path]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(record.model_dump_json() + "\n")
            count += 1
    logger.info("Wrote %d answer records to %s", count, path)
    return count
