"""Minimal chat-completions client shared by every LLM role."""

import logging
import threading
import time
from typing import Callable, List, Literal, Optional

import httpx
from pydantic import BaseModel, Field, model_validator

from .errors import MalformedResponseError
from .transport import RetryPolicy, auth_headers, post_json, resolve_api_key

logger = logging.getLogger(__name__)


class EndpointConfig(BaseModel):
    """Where and how to reach one chat-completions endpoint."""

    base_url: str = Field(..., description="Base URL, e.g. https://api.openai.com/v1")
    model: str = Field(..., min_length=1, description="Model identifier sent with every request")
    api_key_env: Optional[str] = Field("OPENAI_API_KEY", description="Environment variable holding the credential")
    timeout: float = Field(60.0, gt=0, description="Per-request timeout in seconds")
    max_in_flight: int = Field(4, ge=1, description="Concurrent requests allowed against this endpoint")
    retry: RetryPolicy = Field(default_factory=RetryPolicy)


class DecodeParams(BaseModel):
    """Sampling parameters for one role."""

    temperature: float = Field(0.6, ge=0.0)
    top_p: float = Field(0.85, gt=0.0, le=1.0)
    max_tokens: int = Field(50, ge=1)


AGENT_DECODE = DecodeParams(temperature=0.6, top_p=0.85, max_tokens=50)
ANSWER_DECODE = DecodeParams(temperature=0.0, top_p=1.0, max_tokens=256)
JUDGE_DECODE = DecodeParams(temperature=0.0, top_p=1.0, max_tokens=5)
DATASET_DECODE = DecodeParams(temperature=0.7, top_p=1.0, max_tokens=64)


class ChatMessage(BaseModel):
    role: Literal["system", "user", "assistant"]
    content: str


class ChatRequest(BaseModel):
    """One chat-completion request; model and max_tokens are always explicit."""

    model: str = Field(..., min_length=1)
    messages: List[ChatMessage]
    temperature: float = Field(AGENT_DECODE.temperature, ge=0.0)
    top_p: float = Field(AGENT_DECODE.top_p, gt=0.0, le=1.0)
    max_tokens: int = Field(AGENT_DECODE.max_tokens, ge=1)

    @model_validator(mode="after")
    def _has_user_message(self) -> "ChatRequest":
        if not any(m.role == "user" for m in self.messages):
            raise ValueError("a chat request needs at least one user message")
        return self

    @classmethod
    def build(
        cls,
        model: str,
        user: str,
        system: Optional[str] = None,
        decode: DecodeParams = AGENT_DECODE,
    ) -> "ChatRequest":
        messages = [ChatMessage(role="system", content=system)] if system else []
        messages.append(ChatMessage(role="user", content=user))
        return cls(model=model, messages=messages, **decode.model_dump())


class ChatResponse(BaseModel):
    text: str
    prompt_tokens: Optional[int] = None
    completion_tokens: Optional[int] = None
    latency: float = Field(..., description="Seconds from first attempt to decoded response")
    attempts: int = 1


class ChatClient:
    """
    Chat-completions client for one endpoint.

    Safe to share between threads; at most ``config.max_in_flight`` requests
    are outstanding at once.
    """

    def __init__(
        self,
        config: EndpointConfig,
        http_client: Optional[httpx.Client] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self._client = http_client or httpx.Client(timeout=config.timeout)
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._sleep = sleep

    @property
    def model(self) -> str:
        return self.config.model

    def complete(self, request: ChatRequest) -> ChatResponse:
        """
        Send ``request`` and return the first choice's text.

        Raises:
            AuthError: Missing or rejected credential
            EndpointTimeoutError: Timed out on every attempt
            EndpointStatusError: Non-success status
            MalformedResponseError: Body without choices[0].message.content
        """
        headers = auth_headers(resolve_api_key(self.config.api_key_env))
        url = f"{self.config.base_url.rstrip('/')}/chat/completions"
        payload = request.model_dump()
        logger.debug("Chat request to %s model=%s messages=%d", url, request.model, len(request.messages))

        started = time.perf_counter()
        with self._slots:
            body, attempts = post_json(
                self._client, url, payload, headers=headers, policy=self.config.retry, sleep=self._sleep
            )
        latency = time.perf_counter() - started

        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as e:
            raise MalformedResponseError(f"response has no choices[0].message.content: {e!r}") from e
        if text is None:
            text = ""
        if not isinstance(text, str):
            raise MalformedResponseError(f"completion content is {type(text).__name__}, expected str")
        usage = body.get("usage") or {}
        return ChatResponse(
            text=text,
            prompt_tokens=usage.get("prompt_tokens"),
            completion_tokens=usage.get("completion_tokens"),
            latency=latency,
            attempts=attempts,
        )

    def close(self) -> None:
        self._client.close()


def complete(
    config: EndpointConfig,
    request: ChatRequest,
    http_client: Optional[httpx.Client] = None,
) -> ChatResponse:
    """One-shot convenience wrapper around :class:`ChatClient`; a client it creates is closed afterwards."""
    client = ChatClient(config, http_client=http_client)
    try:
        return client.complete(request)
    finally:
        if http_client is None:
            client.close()
