"""In-process chat-completions and embeddings endpoint for offline runs and tests."""

import threading
from typing import Callable, Dict, List, Optional, Tuple

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .embedding import hash_embed
from .llm_client import ChatRequest

Responder = Callable[[ChatRequest], str]


class EmbeddingRequest(BaseModel):
    model: str
    input: List[str]


class ScriptedResponder:
    """
    Replies with the first scripted text whose key occurs in the last user message.

    Args:
        replies: Substring -> reply, checked in insertion order
        default: Reply when no key matches
    """

    def __init__(self, replies: Optional[Dict[str, str]] = None, default: str = "NA"):
        self.replies = dict(replies or {})
        self.default = default

    def __call__(self, request: ChatRequest) -> str:
        user = next(m.content for m in reversed(request.messages) if m.role == "user")
        for needle, reply in self.replies.items():
            if needle in user:
                return reply
        return self.default


class StubEndpoint:
    """Serves /chat/completions and /embeddings on a FastAPI app."""

    def __init__(
        self,
        app: FastAPI,
        *,
        responder: Optional[Responder] = None,
        embedding_dimension: int = 256,
        embedding_seed: int = 0,
        api_key: Optional[str] = None,
    ):
        """
        Register the stub routes on ``app``.

        Args:
            app: FastAPI application instance
            responder: Maps a chat request to the completion text; always "NA" by default
            embedding_dimension: Dimension of the hash vectors served by /embeddings
            embedding_seed: Hash key for /embeddings
            api_key: When set, requests must carry ``Authorization: Bearer <api_key>``
        """
        self.app = app
        self.responder = responder or ScriptedResponder()
        self.embedding_dimension = embedding_dimension
        self.embedding_seed = embedding_seed
        self.api_key = api_key
        self.calls: List[Tuple[str, dict]] = []
        self._lock = threading.Lock()

        app.add_api_route("/chat/completions", self._chat, methods=["POST"], include_in_schema=False)
        app.add_api_route("/embeddings", self._embeddings, methods=["POST"], include_in_schema=False)

    def _record(self, route: str, body: dict) -> None:
        with self._lock:
            self.calls.append((route, body))

    def _unauthorized(self, request: Request) -> Optional[JSONResponse]:
        if self.api_key is None:
            return None
        if request.headers.get("authorization") != f"Bearer {self.api_key}":
            return JSONResponse(content={"error": "invalid credential"}, status_code=401)
        return None

    def chat_calls(self) -> List[dict]:
        with self._lock:
            return [body for route, body in self.calls if route == "chat"]

    def _chat(self, body: ChatRequest, request: Request) -> JSONResponse:
        denied = self._unauthorized(request)
        if denied is not None:
            return denied
        self._record("chat", body.model_dump())
        text = self.responder(body)
        prompt_chars = sum(len(m.content) for m in body.messages)
        return JSONResponse(
            content={
                "object": "chat.completion",
                "model": body.model,
                "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
                "usage": {"prompt_tokens": prompt_chars // 4, "completion_tokens": len(text) // 4},
            }
        )

    def _embeddings(self, body: EmbeddingRequest, request: Request) -> JSONResponse:
        denied = self._unauthorized(request)
        if denied is not None:
            return denied
        self._record("embeddings", body.model_dump())
        data = [
            {
                "object": "embedding",
                "index": i,
                "embedding": hash_embed(text, self.embedding_dimension, self.embedding_seed).tolist(),
            }
            for i, text in enumerate(body.input)
        ]
        return JSONResponse(content={"object": "list", "model": body.model, "data": data})


def create_stub_app(
    responder: Optional[Responder] = None,
    *,
    embedding_dimension: int = 256,
    embedding_seed: int = 0,
    api_key: Optional[str] = None,
) -> Tuple[FastAPI, StubEndpoint]:
    """Build a FastAPI app serving only the stub routes."""
    app = FastAPI(title="followup-kg stub endpoint")
    stub = StubEndpoint(
        app,
        responder=responder,
        embedding_dimension=embedding_dimension,
        embedding_seed=embedding_seed,
        api_key=api_key,
    )
    return app, stub
