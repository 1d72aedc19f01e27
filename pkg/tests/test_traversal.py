"""Tests for budgeted agent-guided traversal and the retrieval baselines."""

import pytest

from followup_kg.agent import AlwaysStopAgent, KeywordDiffAgent, TraversalAgent
from followup_kg.errors import TraversalError
from followup_kg.graph import build_graph
from followup_kg.lexical import fit_bm25, fit_tfidf
from followup_kg.schemas import AgentDecision, DecisionKind, TraversalConfig
from followup_kg.traversal import (
    bm25_retrieve_baseline,
    dense_retrieve_baseline,
    expand_path,
    tfidf_retrieve_baseline,
    traverse,
)

from .helpers import TableProvider, make_corpus

TEXTS = ["alpha seed passage", "bridge target one", "other neighbor two", "far away three", "far away four"]
VECTORS = [[1.0, 0.0, 0.0], [0.9, 0.436, 0.0], [0.8, 0.0, 0.6], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]


class ScriptedAgent(TraversalAgent):
    """Answers by the ids on the path; Stop for anything unscripted."""

    name = "scripted"

    def __init__(self, script, fail_on=None):
        self.script = script
        self.fail_on = fail_on
        self.paths = []

    def decide(self, query, path_passages):
        key = tuple(p.id for p in path_passages)
        self.paths.append(key)
        if key == self.fail_on:
            raise RuntimeError("model went away")
        text = self.script.get(key)
        return AgentDecision.follow_up(text) if text else AgentDecision.stop()


class FollowAlways(TraversalAgent):
    name = "follow"

    def decide(self, query, path_passages):
        return AgentDecision.follow_up("want two")


@pytest.fixture
def world():
    """Five passages with adjacency 0:{1,2} 1:{0,3} 2:{0,4} 3:{1} 4:{2}."""
    corpus = make_corpus(*TEXTS)
    table = dict(zip(TEXTS, VECTORS))
    table["want two"] = VECTORS[2]
    table["want one"] = VECTORS[1]
    provider = TableProvider(table)
    graph = build_graph(corpus, provider, k_edges=1)
    return graph, fit_tfidf(corpus), provider


def test_fixture_graph_shape(world):
    graph, _, _ = world
    assert [list(graph.neighbors(i)) for i in range(5)] == [[1, 2], [0, 3], [0, 4], [1], [2]]


def test_follow_up_selects_best_neighbor_then_stop_ends_search(world):
    """Seed, one hop to the neighbor matching the follow-up, then Stop."""
    graph, tfidf, provider = world
    agent = ScriptedAgent({("d0",): "want two"})
    config = TraversalConfig(budget=5, n_seed=1, top_k=1, max_hops=2)
    result = traverse(graph, tfidf, agent, provider, "alpha", config, trace=True)
    assert result.seeds == ["d0"]
    assert result.retrieved == ["d0", "d2"]
    assert result.paths == [[0], [0, 2]]
    assert result.iterations == 2
    assert result.terminated_early
    assert not result.budget_exhausted
    assert [step.decision for step in result.trace] == [DecisionKind.FOLLOW_UP, DecisionKind.STOP]
    assert result.trace[0].selected == [2]


def test_stop_without_early_termination_only_retires_path(world):
    """The same run without early termination drains the queue instead."""
    graph, tfidf, provider = world
    agent = ScriptedAgent({("d0",): "want two"})
    config = TraversalConfig(budget=5, n_seed=1, top_k=1, early_termination=False)
    result = traverse(graph, tfidf, agent, provider, "alpha", config)
    assert result.retrieved == ["d0", "d2"]
    assert not result.terminated_early
    assert result.iterations == 2


def test_visited_nodes_are_not_candidates(world):
    """From d2 the only unvisited neighbor is d4, whatever the follow-up asks."""
    graph, tfidf, provider = world
    agent = ScriptedAgent({("d0",): "want two", ("d0", "d2"): "want one"})
    config = TraversalConfig(budget=5, n_seed=1, top_k=2, max_hops=2)
    result = traverse(graph, tfidf, agent, provider, "alpha", config)
    assert result.retrieved == ["d0", "d2", "d1", "d4"]
    assert len(set(result.retrieved)) == len(result.retrieved)


def test_budget_equal_to_seed_count_retrieves_seeds_only(world):
    """With K == n_seed the first selection exhausts the budget."""
    graph, tfidf, provider = world
    result = traverse(graph, tfidf, FollowAlways(), provider, "alpha", TraversalConfig(budget=1, n_seed=1))
    assert result.retrieved == ["d0"]
    assert result.budget_exhausted
    assert result.iterations == 1


def test_budget_caps_retrieval(world):
    graph, tfidf, provider = world
    result = traverse(graph, tfidf, FollowAlways(), provider, "alpha", TraversalConfig(budget=2, n_seed=1, top_k=3))
    assert result.retrieved == ["d0", "d2"]
    assert result.budget_exhausted


def test_max_hops_limits_path_length(world):
    """One hop: expanded paths are never re-enqueued."""
    graph, tfidf, provider = world
    result = traverse(graph, tfidf, FollowAlways(), provider, "alpha", TraversalConfig(n_seed=1, top_k=1, max_hops=1))
    assert result.retrieved == ["d0", "d2"]
    assert result.iterations == 1
    assert max(len(p) for p in result.paths) == 2


def test_always_stop_returns_seeds(world):
    """A single-hop style question stops on the seeds."""
    graph, tfidf, provider = world
    result = traverse(graph, tfidf, AlwaysStopAgent(), provider, "far away", TraversalConfig(n_seed=2))
    assert result.retrieved == result.seeds
    assert len(result.seeds) == 2
    assert result.iterations == 1


def test_unmatched_query_retrieves_nothing(world):
    graph, tfidf, provider = world
    result = traverse(graph, tfidf, FollowAlways(), provider, "zebra", TraversalConfig())
    assert result.retrieved == []
    assert result.iterations == 0


def test_agent_failure_carries_partial_result(world):
    """Errors abort the traversal but keep what was retrieved so far."""
    graph, tfidf, provider = world
    agent = ScriptedAgent({("d0",): "want two"}, fail_on=("d0", "d2"))
    with pytest.raises(TraversalError) as excinfo:
        traverse(graph, tfidf, agent, provider, "alpha", TraversalConfig(n_seed=1, top_k=1))
    partial = excinfo.value.partial
    assert partial.retrieved == ["d0", "d2"]
    assert partial.iterations == 1
    assert isinstance(excinfo.value.__cause__, RuntimeError)


def test_corpus_mismatch_is_rejected(world):
    graph, _, provider = world
    other = fit_tfidf(make_corpus("alpha", "beta"))
    with pytest.raises(ValueError):
        traverse(graph, other, AlwaysStopAgent(), provider, "alpha")


def test_expand_path_ranks_candidates_by_cosine(world):
    """Both candidates come back best first with their cosine scores."""
    graph, _, provider = world
    expansion = expand_path(graph, provider, FollowAlways(), "alpha", [0], [1, 2], top_k=2)
    assert expansion.selected == [2, 1]
    assert expansion.scores[0] == pytest.approx(1.0)
    assert expansion.scores[1] == pytest.approx(0.72)
    stopped = expand_path(graph, provider, AlwaysStopAgent(), "alpha", [0], [1, 2], top_k=2)
    assert stopped.decision.is_stop and stopped.selected == []


def test_unknown_follow_up_vectors_tie_to_lowest_ordinal(world):
    """A zero query vector scores every candidate equally."""
    graph, _, provider = world
    agent = ScriptedAgent({("d0",): "unscripted words"})
    expansion = expand_path(graph, provider, agent, "alpha", [0], [2, 1], top_k=1)
    assert expansion.selected == [1]


def test_early_termination_retrieves_a_prefix(small_corpus, hash_provider):
    """Stopping early only cuts the non-terminating run short."""
    graph = build_graph(small_corpus, hash_provider, k_edges=2)
    tfidf = fit_tfidf(small_corpus)
    for query in ["Eiffel Tower capital", "Colosseum Italy", "highest capital mountain Rome"]:
        config = TraversalConfig(budget=4, n_seed=2, top_k=1)
        early = traverse(graph, tfidf, KeywordDiffAgent(), hash_provider, query, config)
        late = traverse(
            graph, tfidf, KeywordDiffAgent(), hash_provider, query, config.model_copy(update={"early_termination": False})
        )
        assert late.retrieved[: len(early.retrieved)] == early.retrieved
        assert early.iterations <= late.iterations
        assert len(late.retrieved) <= config.budget


def test_dense_baseline_ranks_whole_corpus(world):
    graph, _, provider = world
    assert dense_retrieve_baseline(graph, provider, "want two", 3) == ["d2", "d0", "d1"]
    with pytest.raises(ValueError):
        dense_retrieve_baseline(graph, provider, "want two", 0)


def test_lexical_baselines_return_ids(small_corpus):
    assert tfidf_retrieve_baseline(fit_tfidf(small_corpus), "Colosseum", 1) == ["d2"]
    assert bm25_retrieve_baseline(fit_bm25(small_corpus), "Colosseum", 1) == ["d2"]
