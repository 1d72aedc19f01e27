"""followup-kg: agent-guided retrieval over passage-level knowledge graphs."""

from .agent import (
    AlwaysStopAgent,
    KeywordDiffAgent,
    LLMAgent,
    OracleAgent,
    OracleKnowledge,
    TraversalAgent,
    agents,
    decide,
    parse_decision,
)
from .answer import generate_answer, judge_exact, judge_llm
from .corpus import Corpus, get_passage, load_corpus, save_corpus
from .embedding import CachedEmbeddingProvider, HashEmbeddingProvider, RemoteEmbeddingProvider, cosine, hash_embed
from .evaluation import benchmark_agent, exact_match, rouge1_f, rougeL_f, run_eval
from .graph import KnowledgeGraph, build_graph, load_graph, neighbors, save_graph
from .lexical import bm25_top_k, fit_bm25, fit_tfidf, tfidf_top_k, tokenize
from .llm_client import ChatClient, EndpointConfig, complete
from .schemas import AgentDecision, GoldenRecord, Passage, TraversalConfig, TraversalResult
from .synth import SynthSpec, build_followupqa, generate_synthetic, split_dataset
from .traversal import dense_retrieve_baseline, expand_path, traverse

__version__ = "0.1.0"
__all__ = [
    "AgentDecision",
    "AlwaysStopAgent",
    "CachedEmbeddingProvider",
    "ChatClient",
    "Corpus",
    "EndpointConfig",
    "GoldenRecord",
    "HashEmbeddingProvider",
    "KeywordDiffAgent",
    "KnowledgeGraph",
    "LLMAgent",
    "OracleAgent",
    "OracleKnowledge",
    "Passage",
    "RemoteEmbeddingProvider",
    "SynthSpec",
    "TraversalAgent",
    "TraversalConfig",
    "TraversalResult",
    "agents",
    "benchmark_agent",
    "bm25_top_k",
    "build_followupqa",
    "build_graph",
    "complete",
    "cosine",
    "decide",
    "dense_retrieve_baseline",
    "exact_match",
    "expand_path",
    "fit_bm25",
    "fit_tfidf",
    "generate_answer",
    "generate_synthetic",
    "get_passage",
    "hash_embed",
    "judge_exact",
    "judge_llm",
    "load_corpus",
    "load_graph",
    "neighbors",
    "parse_decision",
    "rouge1_f",
    "rougeL_f",
    "run_eval",
    "save_corpus",
    "save_graph",
    "split_dataset",
    "tfidf_top_k",
    "tokenize",
    "traverse",
]
