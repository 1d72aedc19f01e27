"""
Budgeted, agent-guided breadth-first traversal of the knowledge graph.

Seeds come from TF-IDF. Each seed is a one-node search path; paths are
processed first-in first-out. For every dequeued path the agent reads the
path's passages and either stops or asks a follow-up question, which is
embedded and matched against the unvisited neighbors of the path's newest
node. The ``top_k`` best neighbors extend the path, each costing one unit of
the passage budget K; seeds count toward K too.
"""

import logging
import time
from collections import deque
from typing import Deque, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .agent import TraversalAgent, decide
from .embedding import EmbeddingProvider
from .errors import TraversalError
from .graph import KnowledgeGraph
from .lexical import Bm25Model, TfidfModel, bm25_top_k, rank_descending, tfidf_top_k
from .schemas import AgentDecision, TraceStep, TraversalConfig, TraversalResult

logger = logging.getLogger(__name__)

SearchPath = List[int]


class Expansion(BaseModel):
    """What one ``expand_path`` call decided and selected."""

    decision: AgentDecision
    selected: List[int] = Field(default_factory=list, description="Chosen neighbor ordinals, best first")
    scores: List[float] = Field(default_factory=list, description="Cosine score of each selected neighbor")


def _node_vectors(graph: KnowledgeGraph, ranker: EmbeddingProvider, nodes: Sequence[int]) -> np.ndarray:
    # The graph's own X can stand in when the ranker is the graph's provider.
    if ranker.name == graph.provider_name and ranker.dimension == graph.dimension:
        return graph.embeddings[list(nodes)]
    return ranker.embed_batch([graph.corpus[i].text for i in nodes])


def rank_candidates(
    graph: KnowledgeGraph,
    ranker: EmbeddingProvider,
    question: str,
    candidates: Sequence[int],
    top_k: int,
) -> Tuple[List[int], List[float]]:
    """Top ``top_k`` candidates by cosine to ``question``, ties to the lower ordinal."""
    if not candidates:
        return [], []
    ordered = sorted(candidates)
    query_vector = ranker.embed(question)
    scores = _node_vectors(graph, ranker, ordered) @ query_vector
    best = rank_descending(scores, top_k)
    return [ordered[i] for i in best], [float(scores[i]) for i in best]


def expand_path(
    graph: KnowledgeGraph,
    ranker: EmbeddingProvider,
    agent: TraversalAgent,
    query: str,
    path: SearchPath,
    candidates: Sequence[int],
    top_k: int,
) -> Expansion:
    """
    Ask the agent about ``path`` and rank ``candidates`` against its follow-up.

    Args:
        graph: Knowledge graph the path lives in
        ranker: Provider embedding the follow-up and candidate texts
        agent: Traversal agent
        query: Original user question
        path: Node ordinals, seed first
        candidates: Unvisited neighbor ordinals of the newest path node
        top_k: Maximum neighbors to select

    Returns:
        The decision, plus the selected neighbors for a follow-up
    """
    passages = [graph.corpus[i] for i in path]
    decision = decide(agent, query, passages)
    if decision.is_stop:
        return Expansion(decision=decision)
    selected, scores = rank_candidates(graph, ranker, decision.question, candidates, top_k)
    return Expansion(decision=decision, selected=selected, scores=scores)


def traverse(
    graph: KnowledgeGraph,
    tfidf: TfidfModel,
    agent: TraversalAgent,
    ranker: EmbeddingProvider,
    query: str,
    config: Optional[TraversalConfig] = None,
    *,
    query_id: Optional[str] = None,
    trace: bool = False,
) -> TraversalResult:
    """
    Retrieve at most ``config.budget`` passages for ``query``.

    Args:
        graph: Knowledge graph over the same corpus as ``tfidf``
        tfidf: Fitted TF-IDF model used for seeding
        agent: Traversal agent asking follow-up questions
        ranker: Embedding provider for neighbor ranking
        query: User question
        config: Budget, seeding and hop limits
        query_id: Recorded on trace steps
        trace: Collect one TraceStep per agent decision

    Returns:
        Retrieved passage ids (seeds first) and traversal accounting

    Raises:
        TraversalError: The agent or a provider failed; ``partial`` holds
            the result accumulated up to the failure
    """
    config = config or TraversalConfig()
    if tfidf.ids != graph.corpus.ids():
        raise ValueError("the TF-IDF model and the graph were built over different corpora")
    corpus = graph.corpus
    started = time.perf_counter()

    seeds = [corpus.ordinal(pid) for pid, _ in tfidf_top_k(tfidf, query, config.n_seed)]
    visited = set(seeds)
    retrieved: List[int] = list(seeds)
    paths: List[SearchPath] = [[s] for s in seeds]
    queue: Deque[Tuple[SearchPath, Tuple[int, ...]]] = deque((path, graph.neighbors(path[0])) for path in paths)
    steps: List[TraceStep] = []
    k = len(seeds)
    iterations = 0
    terminated_early = False
    budget_exhausted = False

    def snapshot() -> TraversalResult:
        return TraversalResult(
            query=query,
            seeds=[corpus[i].id for i in seeds],
            retrieved=[corpus[i].id for i in retrieved[: config.budget]],
            paths=[list(p) for p in paths],
            iterations=iterations,
            nodes_visited=len(retrieved),
            terminated_early=terminated_early,
            budget_exhausted=budget_exhausted,
            wall_time=time.perf_counter() - started,
            trace=steps if trace else None,
        )

    try:
        while queue and not budget_exhausted:
            path, neighbor_ids = queue.popleft()
            candidates = [c for c in neighbor_ids if c not in visited]
            expansion = expand_path(graph, ranker, agent, query, path, candidates, config.top_k)
            iterations += 1
            added: List[int] = []

            if expansion.decision.is_stop:
                if config.early_termination:
                    terminated_early = True
            else:
                for node in expansion.selected:
                    k += 1
                    if k > config.budget:
                        budget_exhausted = True
                        break
                    visited.add(node)
                    retrieved.append(node)
                    added.append(node)
                    extended = path + [node]
                    paths.append(extended)
                    if len(extended) < 1 + config.max_hops:
                        queue.append((extended, graph.neighbors(node)))

            if trace:
                steps.append(
                    TraceStep(
                        query_id=query_id,
                        step=iterations,
                        path=list(path),
                        decision=expansion.decision.kind,
                        follow_up=expansion.decision.question,
                        selected=added,
                        k=min(k, config.budget),
                    )
                )
            logger.debug(
                "step %d path=%s decision=%s selected=%s k=%d",
                iterations,
                path,
                expansion.decision.kind.value,
                added,
                k,
            )
            if terminated_early:
                break
    except Exception as e:
        partial = snapshot()
        raise TraversalError(f"traversal aborted after {iterations} decisions: {e}", partial=partial) from e

    return snapshot()


def dense_retrieve_baseline(graph: KnowledgeGraph, ranker: EmbeddingProvider, query: str, k: int) -> List[str]:
    """Traversal-free dense retrieval: the ``k`` passages closest to ``query``."""
    if k < 1:
        raise ValueError(f"k must be a positive integer, got {k}")
    scores = _node_vectors(graph, ranker, range(len(graph))) @ ranker.embed(query)
    return [graph.corpus[i].id for i in rank_descending(scores, k)]


def tfidf_retrieve_baseline(tfidf: TfidfModel, query: str, k: int) -> List[str]:
    return [pid for pid, _ in tfidf_top_k(tfidf, query, k)]


def bm25_retrieve_baseline(bm25: Bm25Model, query: str, k: int) -> List[str]:
    return [pid for pid, _ in bm25_top_k(bm25, query, k)]
