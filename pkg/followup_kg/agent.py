"""Traversal agents: given a query and the evidence on a path, ask a follow-up or stop."""

import logging
import re
from abc import ABC, abstractmethod
from typing import Dict, Iterable, List, Optional, Sequence

from pydantic import BaseModel, Field

from .corpus import Corpus
from .errors import AgentError, ConfigError
from .lexical import tokenize
from .llm_client import AGENT_DECODE, ChatClient, ChatRequest, DecodeParams
from .prompts import PromptTemplate, load_prompt
from .registry import FactoryRegistry
from .schemas import AgentDecision, GoldenRecord, Passage

logger = logging.getLogger(__name__)

DEFAULT_EVIDENCE_CHAR_BUDGET = 8000
STOP_TOKEN = "NA"

_QUOTES = "\"'`“”‘’"
_NA_RE = re.compile(r"^na(?:$|[\s\W_])", re.IGNORECASE)
_LABEL_RE = re.compile(r"^follow[- ]?up(?: question)?\s*:\s*", re.IGNORECASE)


class TraversalAgent(ABC):
    """Decides, from the evidence on one search path, what is still missing."""

    name: str = "agent"

    @abstractmethod
    def decide(self, query: str, path_passages: Sequence[Passage]) -> AgentDecision:
        """Return a follow-up question, or Stop when the evidence suffices."""


def decide(agent: TraversalAgent, query: str, path_passages: Sequence[Passage]) -> AgentDecision:
    if not path_passages:
        raise ValueError("path_passages must contain at least the seed passage")
    return agent.decide(query, path_passages)


def parse_decision(raw: str) -> AgentDecision:
    """
    Interpret raw model output.

    "NA" (any case, alone or followed by punctuation/whitespace) and empty
    output mean Stop; anything else is a follow-up question cut to its first line.
    """
    text = raw.strip().strip(_QUOTES).strip()
    text = _LABEL_RE.sub("", text).strip()
    if not text or _NA_RE.match(text):
        return AgentDecision.stop()
    first_line = text.splitlines()[0].strip().strip(_QUOTES).strip()
    if not first_line or _NA_RE.match(first_line):
        return AgentDecision.stop()
    return AgentDecision.follow_up(first_line)


def format_passage(passage: Passage) -> str:
    return f"{passage.title}: {passage.text}" if passage.title else passage.text


def concatenate_evidence(passages: Sequence[Passage], char_budget: int = DEFAULT_EVIDENCE_CHAR_BUDGET) -> str:
    """Join passages in path order, dropping the oldest ones that exceed ``char_budget``."""
    kept: List[str] = []
    used = 0
    for block in reversed([format_passage(p) for p in passages]):
        cost = len(block) + (1 if kept else 0)
        if used + cost > char_budget:
            if not kept:
                kept.append(block[:char_budget])
            break
        kept.append(block)
        used += cost
    return "\n".join(reversed(kept))


class LLMAgent(TraversalAgent):
    """Asks a chat model for the follow-up question."""

    def __init__(
        self,
        client: ChatClient,
        template: Optional[PromptTemplate] = None,
        decode: DecodeParams = AGENT_DECODE,
        evidence_char_budget: int = DEFAULT_EVIDENCE_CHAR_BUDGET,
        name: str = "llm",
    ):
        self.client = client
        self.template = template or load_prompt("followup")
        self.decode = decode
        self.evidence_char_budget = evidence_char_budget
        self.name = name

    def decide(self, query: str, path_passages: Sequence[Passage]) -> AgentDecision:
        given = concatenate_evidence(path_passages, self.evidence_char_budget)
        system, user = self.template.render(question=query, given=given)
        request = ChatRequest.build(self.client.model, user, system=system, decode=self.decode)
        response = self.client.complete(request)
        decision = parse_decision(response.text)
        logger.debug("LLM agent decision for %r: %s", query[:60], decision.question or STOP_TOKEN)
        return decision


class OracleKnowledge(BaseModel):
    """Golden reasoning chains keyed by question text."""

    chains: Dict[str, List[str]] = Field(default_factory=dict)

    @classmethod
    def from_records(cls, records: Iterable[GoldenRecord]) -> "OracleKnowledge":
        chains: Dict[str, List[str]] = {}
        for record in records:
            existing = chains.get(record.question)
            if existing is not None and existing != record.golden_ids:
                raise AgentError(f"question text {record.question!r} maps to two different chains")
            chains[record.question] = list(record.golden_ids)
        return cls(chains=chains)

    def validate_against(self, corpus: Corpus) -> None:
        for question, chain in self.chains.items():
            for passage_id in chain:
                if passage_id not in corpus:
                    raise AgentError(f"golden id {passage_id!r} for {question!r} is not in the corpus")


class OracleAgent(TraversalAgent):
    """Test agent that knows every golden chain and asks for the next missing passage verbatim."""

    def __init__(self, knowledge: OracleKnowledge, corpus: Corpus, name: str = "oracle"):
        knowledge.validate_against(corpus)
        self.knowledge = knowledge
        self.corpus = corpus
        self.name = name

    def decide(self, query: str, path_passages: Sequence[Passage]) -> AgentDecision:
        chain = self.knowledge.chains.get(query)
        if chain is None:
            raise AgentError(f"oracle has no golden chain for query {query!r}")
        on_path = {p.id for p in path_passages}
        missing = next((pid for pid in chain if pid not in on_path), None)
        if missing is None:
            return AgentDecision.stop()
        return AgentDecision.follow_up(self.corpus.get(missing).text)


class KeywordDiffAgent(TraversalAgent):
    """Asks for the query tokens the path has not mentioned yet."""

    name = "keyword"

    def decide(self, query: str, path_passages: Sequence[Passage]) -> AgentDecision:
        seen = set()
        for passage in path_passages:
            seen.update(tokenize(passage.title))
            seen.update(tokenize(passage.text))
        absent: List[str] = []
        for token in tokenize(query):
            if token not in seen and token not in absent:
                absent.append(token)
        if not absent:
            return AgentDecision.stop()
        return AgentDecision.follow_up(" ".join(absent))


class AlwaysStopAgent(TraversalAgent):
    """Stops immediately; traversal then returns the seeds only."""

    name = "stop"

    def decide(self, query: str, path_passages: Sequence[Passage]) -> AgentDecision:
        return AgentDecision.stop()


class AgentContext(BaseModel):
    """Everything an agent factory may need."""

    model_config = {"arbitrary_types_allowed": True}

    corpus: Optional[Corpus] = None
    knowledge: Optional[OracleKnowledge] = None
    client: Optional[ChatClient] = None
    decode: DecodeParams = AGENT_DECODE
    template: Optional[PromptTemplate] = None
    evidence_char_budget: int = DEFAULT_EVIDENCE_CHAR_BUDGET


agents = FactoryRegistry("agent")


@agents.register("llm", summary="chat model asks follow-up questions", needs_network=True)
def _make_llm(context: AgentContext) -> TraversalAgent:
    if context.client is None:
        raise ConfigError("the llm agent needs an agent_llm endpoint")
    return LLMAgent(context.client, context.template, context.decode, context.evidence_char_budget)


@agents.register("oracle", summary="golden-chain oracle (needs golden records)")
def _make_oracle(context: AgentContext) -> TraversalAgent:
    if context.knowledge is None or context.corpus is None:
        raise ConfigError("the oracle agent needs golden records and the corpus")
    return OracleAgent(context.knowledge, context.corpus)


@agents.register("keyword", summary="asks for query tokens missing from the path")
def _make_keyword(context: AgentContext) -> TraversalAgent:
    return KeywordDiffAgent()


@agents.register("stop", summary="always stops; seeds only")
def _make_stop(context: AgentContext) -> TraversalAgent:
    return AlwaysStopAgent()
