"""Retrieval and follow-up-question evaluation."""

import itertools
import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field
from tqdm import tqdm

from .agent import LLMAgent, TraversalAgent, decide
from .answer import DEFAULT_PROMPT_CHAR_BUDGET, answer_question
from .embedding import CachedEmbeddingProvider, EmbeddingProvider
from .graph import KnowledgeGraph
from .lexical import SCORE_DECIMALS, Bm25Model, TfidfModel, tokenize
from .llm_client import ChatClient, DecodeParams
from .prompts import PromptTemplate
from .schemas import FollowUpSample, GoldenRecord, Passage, TraversalConfig, Verdict
from .traversal import bm25_retrieve_baseline, dense_retrieve_baseline, tfidf_retrieve_baseline, traverse

logger = logging.getLogger(__name__)

DEFAULT_EM_THRESHOLD = 0.9
HISTOGRAM_BINS = 10
BASELINES = ("tfidf", "bm25", "dense")
NO_ET_SUFFIX = "/no-et"


# -- metrics ---------------------------------------------------------------


def exact_match(
    retrieved_texts: Sequence[str],
    golden_texts: Sequence[str],
    provider: EmbeddingProvider,
    threshold: float = DEFAULT_EM_THRESHOLD,
) -> float:
    """
    Fraction of golden passages matched by some retrieved passage.

    A golden passage is matched when its best cosine against the retrieved
    passages reaches ``threshold``. One retrieved passage may match several
    golden ones.
    """
    return matched_golden(retrieved_texts, golden_texts, provider, threshold) / len(golden_texts)


def matched_golden(
    retrieved_texts: Sequence[str],
    golden_texts: Sequence[str],
    provider: EmbeddingProvider,
    threshold: float = DEFAULT_EM_THRESHOLD,
) -> int:
    if not golden_texts:
        raise ValueError("golden_texts must be non-empty")
    if not retrieved_texts:
        return 0
    golden = provider.embed_batch(list(golden_texts))
    retrieved = provider.embed_batch(list(retrieved_texts))
    best = np.round((golden @ retrieved.T).max(axis=1), SCORE_DECIMALS)
    return int(np.count_nonzero(best >= threshold))


def _f1(overlap: float, candidate_len: int, reference_len: int) -> float:
    if overlap == 0 or candidate_len == 0 or reference_len == 0:
        return 0.0
    precision = overlap / candidate_len
    recall = overlap / reference_len
    return 2 * precision * recall / (precision + recall)


def rouge1_f(candidate: str, reference: str) -> float:
    """Unigram-overlap F1 with clipped counts; no stemming or stopword removal."""
    cand, ref = tokenize(candidate), tokenize(reference)
    overlap = sum((Counter(cand) & Counter(ref)).values())
    return _f1(overlap, len(cand), len(ref))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    previous = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b, start=1):
            current.append(previous[j - 1] + 1 if x == y else max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def rougeL_f(candidate: str, reference: str) -> float:
    """F1 from the longest common token subsequence."""
    cand, ref = tokenize(candidate), tokenize(reference)
    return _f1(lcs_length(cand, ref), len(cand), len(ref))


def _mean(values: Sequence[float]) -> Optional[float]:
    return sum(values) / len(values) if values else None


def histogram(values: Sequence[float], bins: int = HISTOGRAM_BINS) -> Dict[str, List[float]]:
    counts, edges = np.histogram(np.asarray(values, dtype=np.float64), bins=bins, range=(0.0, 1.0))
    return {"edges": edges.tolist(), "counts": counts.tolist()}


# -- follow-up benchmark ---------------------------------------------------


class BenchmarkRow(BaseModel):
    index: int
    question: str
    target: str
    generated: Optional[str] = Field(None, description='Agent follow-up, or "NA" when it stopped')
    gold_is_stop: bool
    stop_correct: Optional[bool] = Field(None, description="Only for NA golds")
    rouge1: Optional[float] = None
    rougeL: Optional[float] = None
    cosine: Optional[float] = None
    error: Optional[str] = None


class BenchmarkReport(BaseModel):
    agent: str
    rows: List[BenchmarkRow]
    n_scored: int
    n_stop_golds: int
    n_errors: int
    mean_rouge1: Optional[float] = None
    mean_rougeL: Optional[float] = None
    mean_cosine: Optional[float] = None
    stop_accuracy: Optional[float] = None
    decode: Optional[DecodeParams] = None

    def histograms(self, bins: int = HISTOGRAM_BINS) -> Dict[str, Dict[str, List[float]]]:
        scored = [r for r in self.rows if r.error is None and not r.gold_is_stop]
        return {
            "rouge1": histogram([r.rouge1 for r in scored], bins),
            "rougeL": histogram([r.rougeL for r in scored], bins),
            "cosine": histogram([r.cosine for r in scored], bins),
        }

    def write(self, out_dir: Union[str, Path]) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_jsonl(out / "rows.jsonl", self.rows)
        summary = self.model_dump(exclude={"rows"}, mode="json")
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        (out / "histograms.json").write_text(json.dumps(self.histograms(), indent=2) + "\n", encoding="utf-8")


def _score_sample(agent: TraversalAgent, provider: EmbeddingProvider, index: int, sample: FollowUpSample) -> BenchmarkRow:
    row = BenchmarkRow(index=index, question=sample.question, target=sample.target, gold_is_stop=sample.is_stop)
    try:
        decision = decide(agent, sample.question, [Passage(id="given", text=sample.given)])
    except Exception as e:
        logger.warning("Agent failed on sample %d: %s", index, e)
        row.error = str(e) or type(e).__name__
        return row
    row.generated = "NA" if decision.is_stop else decision.question
    if sample.is_stop:
        row.stop_correct = decision.is_stop
    elif decision.is_stop:
        row.rouge1 = row.rougeL = row.cosine = 0.0
    else:
        row.rouge1 = rouge1_f(decision.question, sample.target)
        row.rougeL = rougeL_f(decision.question, sample.target)
        vectors = provider.embed_batch([decision.question, sample.target])
        row.cosine = float(np.clip(vectors[0] @ vectors[1], -1.0, 1.0))
    return row


def benchmark_agent(
    agent: TraversalAgent,
    samples: Sequence[FollowUpSample],
    provider: EmbeddingProvider,
    workers: int = 1,
    progress: bool = False,
) -> BenchmarkReport:
    """
    Score an agent's follow-up questions against gold ones.

    Follow-up golds are scored with ROUGE-1, ROUGE-L and embedding cosine
    (zero when the agent stopped instead); "NA" golds count toward stop
    accuracy. Samples the agent failed on are reported and left out of
    every mean.
    """
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        rows = list(
            tqdm(
                pool.map(lambda item: _score_sample(agent, provider, *item), enumerate(samples)),
                total=len(samples),
                desc=f"benchmark {agent.name}",
                disable=not progress,
            )
        )
    ok = [r for r in rows if r.error is None]
    scored = [r for r in ok if not r.gold_is_stop]
    stops = [r for r in ok if r.gold_is_stop]
    return BenchmarkReport(
        agent=agent.name,
        rows=rows,
        n_scored=len(scored),
        n_stop_golds=len(stops),
        n_errors=len(rows) - len(ok),
        mean_rouge1=_mean([r.rouge1 for r in scored]),
        mean_rougeL=_mean([r.rougeL for r in scored]),
        mean_cosine=_mean([r.cosine for r in scored]),
        stop_accuracy=_mean([1.0 if r.stop_correct else 0.0 for r in stops]),
    )


def sweep_decode_params(
    client: ChatClient,
    samples: Sequence[FollowUpSample],
    provider: EmbeddingProvider,
    temperatures: Iterable[float] = (0.2, 0.6, 1.0),
    top_ps: Iterable[float] = (0.85, 1.0),
    max_tokens: Iterable[int] = (50,),
    template: Optional[PromptTemplate] = None,
    workers: int = 1,
) -> List[BenchmarkReport]:
    """Benchmark an LLM agent at every point of a decode-parameter grid."""
    reports = []
    for temperature, top_p, tokens in itertools.product(temperatures, top_ps, max_tokens):
        decode = DecodeParams(temperature=temperature, top_p=top_p, max_tokens=tokens)
        agent = LLMAgent(client, template=template, decode=decode)
        report = benchmark_agent(agent, samples, provider, workers=workers)
        report.decode = decode
        logger.info(
            "decode t=%.2f p=%.2f n=%d: rouge1=%s rougeL=%s cosine=%s",
            temperature,
            top_p,
            tokens,
            report.mean_rouge1,
            report.mean_rougeL,
            report.mean_cosine,
        )
        reports.append(report)
    return reports


# -- retrieval evaluation --------------------------------------------------


class EvalSettings(BaseModel):
    traversal: TraversalConfig = Field(default_factory=TraversalConfig)
    threshold: float = Field(DEFAULT_EM_THRESHOLD, gt=0.0, le=1.0, description="Cosine needed for a golden match")
    baselines: List[str] = Field(default_factory=list, description="Any of tfidf, bm25, dense")
    compare_early_termination: bool = Field(False, description='Add a "/no-et" arm per agent')
    workers: int = Field(1, ge=1)
    progress: bool = False
    answer_char_budget: int = Field(DEFAULT_PROMPT_CHAR_BUDGET, ge=1, description="Answer prompt budget in characters")


class EvalRow(BaseModel):
    method: str
    question_id: str
    question_type: str
    em: Optional[float] = None
    matched: int = 0
    golden: int
    retrieved: List[str] = Field(default_factory=list)
    iterations: int = 0
    nodes_visited: int = 0
    terminated_early: bool = False
    wall_time: float = 0.0
    answer: Optional[str] = None
    verdict: Optional[Verdict] = None
    error: Optional[str] = None


class EvalSummary(BaseModel):
    method: str
    n_questions: int
    n_errors: int
    mean_em: Optional[float] = None
    accuracy: Optional[float] = Field(None, description="Percent of judged answers that are correct")
    mean_iterations: Optional[float] = None
    mean_runtime: Optional[float] = None
    closed_early: int = 0


def summarize(method: str, rows: Sequence[EvalRow]) -> EvalSummary:
    ok = [r for r in rows if r.error is None]
    judged = [r for r in ok if r.verdict is not None]
    accuracy = None
    if judged:
        accuracy = 100.0 * sum(r.verdict is Verdict.CORRECT for r in judged) / len(judged)
    return EvalSummary(
        method=method,
        n_questions=len(rows),
        n_errors=len(rows) - len(ok),
        mean_em=_mean([r.em for r in ok]),
        accuracy=accuracy,
        mean_iterations=_mean([r.iterations for r in ok]),
        mean_runtime=_mean([r.wall_time for r in ok]),
        closed_early=sum(r.terminated_early for r in ok),
    )


class EvalReport(BaseModel):
    rows: List[EvalRow]
    summaries: List[EvalSummary]

    def methods(self) -> List[str]:
        return [s.method for s in self.summaries]

    def rows_for(self, method: str) -> List[EvalRow]:
        return [r for r in self.rows if r.method == method]

    def summary(self, method: str) -> EvalSummary:
        return next(s for s in self.summaries if s.method == method)

    def check_consistency(self) -> None:
        """Raise ValueError when a summary differs from recomputation over its rows."""
        for stored in self.summaries:
            recomputed = summarize(stored.method, self.rows_for(stored.method))
            if recomputed != stored:
                raise ValueError(f"summary for {stored.method!r} does not match its rows")

    def closed_early(self, method: str) -> List[str]:
        """Question ids the method's traversal stopped early on."""
        return [r.question_id for r in self.rows_for(method) if r.terminated_early]

    def write(self, out_dir: Union[str, Path]) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_jsonl(out / "rows.jsonl", self.rows)
        _write_jsonl(out / "summary.jsonl", self.summaries)
        masks = {m: self.closed_early(m) for m in self.methods()}
        (out / "closed_early.json").write_text(json.dumps(masks, indent=2) + "\n", encoding="utf-8")
        logger.info("Wrote evaluation report to %s", out)


def accuracy_on_subset(report: EvalReport, method: str, question_ids: Iterable[str]) -> Optional[float]:
    """Accuracy (percent) of ``method`` restricted to ``question_ids``; None if nothing there was judged."""
    wanted = set(question_ids)
    judged = [r for r in report.rows_for(method) if r.question_id in wanted and r.verdict is not None]
    if not judged:
        return None
    return 100.0 * sum(r.verdict is Verdict.CORRECT for r in judged) / len(judged)


def _write_jsonl(path: Path, records: Iterable[BaseModel]) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(record.model_dump_json() + "\n")


Retriever = Callable[[GoldenRecord], Tuple[List[str], dict]]


def run_eval(
    graph: KnowledgeGraph,
    tfidf: TfidfModel,
    agents: Dict[str, TraversalAgent],
    records: Sequence[GoldenRecord],
    ranker: EmbeddingProvider,
    em_provider: Optional[EmbeddingProvider] = None,
    settings: Optional[EvalSettings] = None,
    bm25: Optional[Bm25Model] = None,
    answer_client: Optional[ChatClient] = None,
    judge_client: Optional[ChatClient] = None,
    answer_template: Optional[PromptTemplate] = None,
    judge_template: Optional[PromptTemplate] = None,
) -> EvalReport:
    """
    Retrieve for every record with every method, then score.

    Args:
        graph: Knowledge graph over the evaluation corpus
        tfidf: TF-IDF model over the same corpus
        agents: Traversal agents by method name
        records: Questions with golden chains
        ranker: Provider ranking neighbors during traversal (and for the dense baseline)
        em_provider: Provider for cosine-matched EM; ``ranker`` if omitted
        settings: Traversal config, EM threshold, baselines and worker count
        bm25: Required when the bm25 baseline is requested
        answer_client: Generate an answer per question when given
        judge_client: Judge answers with an LLM; exact match otherwise
        answer_template: Answer prompt; the bundled one by default
        judge_template: Judge prompt; the bundled one by default

    Returns:
        Rows sorted by method then question id, with one summary per method
    """
    settings = settings or EvalSettings()
    corpus = graph.corpus
    for record in records:
        for pid in record.golden_ids:
            corpus.ordinal(pid)
    em = CachedEmbeddingProvider(em_provider or ranker)
    budget = settings.traversal.budget

    methods: Dict[str, Retriever] = {}

    def traversal_method(agent: TraversalAgent, config: TraversalConfig) -> Retriever:
        def retrieve(record: GoldenRecord) -> Tuple[List[str], dict]:
            result = traverse(graph, tfidf, agent, ranker, record.question, config, query_id=record.id)
            return result.retrieved, {
                "iterations": result.iterations,
                "nodes_visited": result.nodes_visited,
                "terminated_early": result.terminated_early,
                "wall_time": result.wall_time,
            }

        return retrieve

    for name, agent in agents.items():
        methods[name] = traversal_method(agent, settings.traversal)
        if settings.compare_early_termination:
            no_et = settings.traversal.model_copy(update={"early_termination": False})
            methods[name + NO_ET_SUFFIX] = traversal_method(agent, no_et)

    for baseline in settings.baselines:
        if baseline == "tfidf":
            methods["tfidf"] = lambda r: (tfidf_retrieve_baseline(tfidf, r.question, budget), {})
        elif baseline == "bm25":
            if bm25 is None:
                raise ValueError("the bm25 baseline needs a fitted BM25 model")
            methods["bm25"] = lambda r: (bm25_retrieve_baseline(bm25, r.question, budget), {})
        elif baseline == "dense":
            methods["dense"] = lambda r: (dense_retrieve_baseline(graph, ranker, r.question, budget), {})
        else:
            raise ValueError(f"unknown baseline {baseline!r}; choose from {', '.join(BASELINES)}")

    def run_one(task: Tuple[str, GoldenRecord]) -> EvalRow:
        method, record = task
        row = EvalRow(
            method=method,
            question_id=record.id,
            question_type=record.question_type.value,
            golden=len(record.golden_ids),
        )
        try:
            retrieved, stats = methods[method](record)
            row.retrieved = retrieved
            for key, value in stats.items():
                setattr(row, key, value)
            golden_texts = [corpus.get(pid).text for pid in record.golden_ids]
            retrieved_texts = [corpus.get(pid).text for pid in retrieved]
            row.matched = matched_golden(retrieved_texts, golden_texts, em, settings.threshold)
            row.em = row.matched / row.golden
            if answer_client is not None:
                answered = answer_question(
                    answer_client,
                    record.id,
                    record.question,
                    [corpus.get(pid) for pid in retrieved],
                    record.answer,
                    judge_client,
                    settings.answer_char_budget,
                    answer_template,
                    judge_template,
                )
                row.answer, row.verdict = answered.answer, answered.verdict
        except Exception as e:
            logger.warning("%s failed on %s: %s", method, record.id, e)
            row.error = str(e) or type(e).__name__
        return row

    tasks = [(method, record) for method in methods for record in records]
    with ThreadPoolExecutor(max_workers=settings.workers) as pool:
        rows = list(tqdm(pool.map(run_one, tasks), total=len(tasks), desc="eval", disable=not settings.progress))

    order = {method: i for i, method in enumerate(methods)}
    rows.sort(key=lambda r: (order[r.method], r.question_id))
    summaries = [summarize(method, [r for r in rows if r.method == method]) for method in methods]
    for summary in summaries:
        logger.info(
            "%s: EM=%s acc=%s iterations=%s errors=%d",
            summary.method,
            summary.mean_em,
            summary.accuracy,
            summary.mean_iterations,
            summary.n_errors,
        )
    return EvalReport(rows=rows, summaries=summaries)
