"""Engine configuration loaded from one JSON file."""

import logging
from pathlib import Path
from typing import Dict, Literal, Optional, Union

import httpx
from pydantic import BaseModel, Field, ValidationError

from .embedding import EmbeddingProvider, HashEmbeddingProvider, RemoteEmbeddingProvider
from .errors import ConfigError
from .evaluation import DEFAULT_EM_THRESHOLD
from .graph import DEFAULT_K_EDGES
from .llm_client import AGENT_DECODE, ChatClient, DecodeParams, EndpointConfig
from .prompts import PromptTemplate, load_prompt
from .schemas import TraversalConfig
from .transport import RetryPolicy

logger = logging.getLogger(__name__)

LLM_ROLES = ("agent_llm", "answer_llm", "judge_llm", "dataset_llm")


class EmbeddingRoleConfig(BaseModel):
    """One embedding role: the offline hash embedder or a remote endpoint."""

    kind: Literal["hash", "remote"] = Field("hash", description="Provider type")
    dimension: int = Field(256, ge=1, description="Vector dimension")
    seed: int = Field(0, description="Hash key (hash kind only)")
    base_url: Optional[str] = Field(None, description="Endpoint base URL (remote kind only)")
    model: Optional[str] = Field(None, description="Embedding model (remote kind only)")
    api_key_env: Optional[str] = Field("OPENAI_API_KEY", description="Credential environment variable")
    batch_size: int = Field(64, ge=1)
    max_in_flight: int = Field(4, ge=1)
    timeout: float = Field(60.0, gt=0)
    retry: RetryPolicy = Field(default_factory=RetryPolicy)

    def build(self, http_client: Optional[httpx.Client] = None) -> EmbeddingProvider:
        if self.kind == "hash":
            return HashEmbeddingProvider(self.dimension, self.seed)
        if not self.base_url or not self.model:
            raise ConfigError("a remote embedding role needs base_url and model")
        return RemoteEmbeddingProvider(
            self.base_url,
            self.model,
            self.dimension,
            api_key_env=self.api_key_env,
            batch_size=self.batch_size,
            max_in_flight=self.max_in_flight,
            timeout=self.timeout,
            retry=self.retry,
            http_client=http_client,
        )


class EngineConfig(BaseModel):
    """Everything the CLI needs; sections a command does not use may be absent."""

    corpus_path: Optional[Path] = Field(None, description="Corpus JSONL file")
    graph_path: Optional[Path] = Field(None, description="Graph file")
    graph_embedding: EmbeddingRoleConfig = Field(default_factory=EmbeddingRoleConfig)
    ranker_embedding: Optional[EmbeddingRoleConfig] = Field(None, description="Defaults to graph_embedding")
    em_embedding: Optional[EmbeddingRoleConfig] = Field(None, description="Defaults to graph_embedding")

    agent_llm: Optional[EndpointConfig] = None
    answer_llm: Optional[EndpointConfig] = None
    judge_llm: Optional[EndpointConfig] = None
    dataset_llm: Optional[EndpointConfig] = None
    agent_decode: DecodeParams = Field(default_factory=lambda: AGENT_DECODE.model_copy())

    traversal: TraversalConfig = Field(default_factory=TraversalConfig)
    k_edges: int = Field(DEFAULT_K_EDGES, ge=1, description="kNN out-degree before symmetrization")
    eval_threshold: float = Field(DEFAULT_EM_THRESHOLD, gt=0.0, le=1.0)
    workers: int = Field(1, ge=1, description="Worker-pool width")
    seed: int = Field(0, description="Seed for every random choice")

    prompts: Dict[str, Path] = Field(default_factory=dict, description="Prompt name -> override file")
    evidence_char_budget: int = Field(8000, ge=1, description="Agent evidence budget in characters")
    answer_char_budget: int = Field(12000, ge=1, description="Answer prompt budget in characters")

    def ranker(self) -> EmbeddingRoleConfig:
        return self.ranker_embedding or self.graph_embedding

    def em(self) -> EmbeddingRoleConfig:
        return self.em_embedding or self.graph_embedding

    def prompt(self, name: str) -> PromptTemplate:
        return load_prompt(name, self.prompts.get(name))

    def endpoint(self, role: str) -> EndpointConfig:
        if role not in LLM_ROLES:
            raise ValueError(f"unknown LLM role {role!r}")
        endpoint = getattr(self, role)
        if endpoint is None:
            raise ConfigError(f"this command needs a {role!r} section in the config file")
        return endpoint

    def chat_client(self, role: str, http_client: Optional[httpx.Client] = None) -> ChatClient:
        return ChatClient(self.endpoint(role), http_client=http_client)


def load_config(path: Optional[Union[str, Path]] = None) -> EngineConfig:
    """
    Read an EngineConfig from JSON; no path means all defaults.

    Raises:
        ConfigError: Unreadable file or invalid contents
    """
    if path is None:
        return EngineConfig()
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror or e}") from e
    try:
        config = EngineConfig.model_validate_json(raw)
    except ValidationError as e:
        raise ConfigError(f"{path}: invalid config: {e.errors()[0]['msg']} at {e.errors()[0]['loc']}") from e
    logger.info("Loaded config from %s", path)
    return config
