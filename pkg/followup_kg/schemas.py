"""Pydantic models shared across the retrieval engine."""

from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Passage(BaseModel):
    """A single retrievable passage; one node of the knowledge graph."""

    model_config = ConfigDict(frozen=True)

    id: str = Field(..., min_length=1, description="Caller-supplied unique identifier")
    title: str = Field("", description="Passage title, may be empty")
    text: str = Field(..., description="Passage body")

    @field_validator("text")
    @classmethod
    def _text_not_blank(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("text must be non-empty after trimming whitespace")
        return value


class QuestionType(str, Enum):
    """Reasoning shape of a question."""

    BRIDGE = "bridge"
    COMPARISON = "comparison"
    SINGLE = "single"


class GoldenRecord(BaseModel):
    """Ground truth for one question."""

    id: str = Field(..., description="Question identifier")
    question: str = Field(..., description="Question text")
    answer: str = Field(..., description="Gold answer")
    golden_ids: List[str] = Field(..., description="Golden passage ids in reasoning order")
    question_type: QuestionType = Field(..., description="bridge, comparison or single")

    @model_validator(mode="after")
    def _chain_length_matches_type(self) -> "GoldenRecord":
        if self.question_type is QuestionType.SINGLE and len(self.golden_ids) != 1:
            raise ValueError("single questions have exactly one golden passage")
        if self.question_type is not QuestionType.SINGLE and len(self.golden_ids) < 2:
            raise ValueError(f"{self.question_type.value} questions need >= 2 golden passages")
        return self


class DecisionKind(str, Enum):
    FOLLOW_UP = "follow_up"
    STOP = "stop"


class AgentDecision(BaseModel):
    """Output of a traversal agent: a follow-up question or the stop signal."""

    model_config = ConfigDict(frozen=True)

    kind: DecisionKind
    question: Optional[str] = None

    @model_validator(mode="after")
    def _question_iff_follow_up(self) -> "AgentDecision":
        if self.kind is DecisionKind.FOLLOW_UP:
            if self.question is None or not self.question.strip():
                raise ValueError("a follow-up decision needs a non-empty question")
        elif self.question is not None:
            raise ValueError("a stop decision carries no question")
        return self

    @classmethod
    def stop(cls) -> "AgentDecision":
        return cls(kind=DecisionKind.STOP)

    @classmethod
    def follow_up(cls, question: str) -> "AgentDecision":
        return cls(kind=DecisionKind.FOLLOW_UP, question=question)

    @property
    def is_stop(self) -> bool:
        return self.kind is DecisionKind.STOP


class FollowUpSample(BaseModel):
    """One Follow-upQA training/benchmark sample."""

    question: str = Field(..., description="Input question")
    given: str = Field(..., description="Given supporting passage text")
    target: str = Field(..., description='Gold follow-up question or the literal "NA"')
    question_type: Optional[QuestionType] = Field(None, description="Source question type")
    source_id: Optional[str] = Field(None, description="Id of the source record")

    @property
    def is_stop(self) -> bool:
        return self.target == "NA"


class TraversalConfig(BaseModel):
    """Budget and shape of one knowledge-graph traversal."""

    budget: int = Field(30, ge=1, description="Maximum retrieved passages K")
    n_seed: int = Field(5, ge=1, description="Seeding passages from TF-IDF")
    top_k: int = Field(3, ge=1, description="Neighbors selected per expansion")
    max_hops: int = Field(2, ge=1, description="Maximum edges away from a seed")
    early_termination: bool = Field(True, description="A stop decision ends the whole search")

    @model_validator(mode="after")
    def _seeds_within_budget(self) -> "TraversalConfig":
        if self.n_seed > self.budget:
            raise ValueError("n_seed must not exceed the budget")
        return self


class TraceStep(BaseModel):
    """One dequeue of the traversal loop."""

    query_id: Optional[str] = None
    step: int
    path: List[int]
    decision: DecisionKind
    follow_up: Optional[str] = None
    selected: List[int] = Field(default_factory=list)
    k: int


class TraversalResult(BaseModel):
    """Outcome of one traversal."""

    query: str
    seeds: List[str] = Field(default_factory=list, description="Seeding passage ids in rank order")
    retrieved: List[str] = Field(default_factory=list, description="Unique passage ids, at most K")
    paths: List[List[int]] = Field(default_factory=list, description="Every search path formed")
    iterations: int = Field(0, description="Number of agent decide() calls")
    nodes_visited: int = Field(0, description="Distinct nodes retrieved")
    terminated_early: bool = False
    budget_exhausted: bool = False
    wall_time: float = Field(0.0, description="Seconds spent in the traversal")
    trace: Optional[List[TraceStep]] = None


class Verdict(str, Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"


class AnswerRecord(BaseModel):
    """A generated answer and the context it was generated from."""

    question_id: str
    question: str
    retrieved_ids: List[str]
    answer: str
    gold_answer: Optional[str] = None
    verdict: Optional[Verdict] = None
