"""Dense passage/question representations behind a provider abstraction."""

import hashlib
import logging
import threading
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import httpx
import numpy as np
import numpy.typing as npt

from .errors import EmbeddingError, NetworkError
from .lexical import tokenize
from .transport import RetryPolicy, auth_headers, post_json, resolve_api_key

logger = logging.getLogger(__name__)

EmbeddingVector = npt.NDArray[np.float64]

MIN_HASH_DIMENSION = 16


def normalize(vector: np.ndarray) -> EmbeddingVector:
    """L2-normalize; the zero vector stays zero."""
    vector = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        return np.zeros_like(vector)
    return vector / norm


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Dot product of two normalized vectors; 0 when either is the zero vector."""
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(np.dot(a, b))


class EmbeddingProvider(ABC):
    """Maps texts to L2-normalized vectors of a fixed dimension."""

    name: str
    dimension: int

    @abstractmethod
    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        """Return an array of shape (len(texts), dimension), rows in input order."""

    def embed(self, text: str) -> EmbeddingVector:
        return self.embed_batch([text])[0]


@lru_cache(maxsize=1 << 16)
def _token_slot(token: str, seed: int, dimension: int) -> Tuple[int, float]:
    key = seed.to_bytes(8, "little", signed=True)
    data = token.encode("utf-8")
    bucket_digest = hashlib.blake2b(data, digest_size=8, key=key, person=b"fkg-bucket").digest()
    sign_digest = hashlib.blake2b(data, digest_size=1, key=key, person=b"fkg-sign").digest()
    bucket = int.from_bytes(bucket_digest, "little") % dimension
    sign = 1.0 if sign_digest[0] & 1 else -1.0
    return bucket, sign


def hash_embed(text: str, dimension: int = 256, seed: int = 0) -> EmbeddingVector:
    """
    Signed feature-hashing embedding of ``text``'s tokens.

    Each token lands in a keyed-blake2b bucket with a +/-1 sign from a second
    keyed hash; counts accumulate and the result is L2-normalized. Empty text
    (or text whose tokens cancel out) yields the zero vector.
    """
    if dimension < MIN_HASH_DIMENSION:
        raise ValueError(f"dimension must be >= {MIN_HASH_DIMENSION}, got {dimension}")
    vector = np.zeros(dimension, dtype=np.float64)
    for token in tokenize(text):
        bucket, sign = _token_slot(token, seed, dimension)
        vector[bucket] += sign
    return normalize(vector)


class HashEmbeddingProvider(EmbeddingProvider):
    """Deterministic offline provider built on :func:`hash_embed`."""

    def __init__(self, dimension: int = 256, seed: int = 0):
        if dimension < MIN_HASH_DIMENSION:
            raise ValueError(f"dimension must be >= {MIN_HASH_DIMENSION}, got {dimension}")
        self.dimension = dimension
        self.seed = seed
        self.name = f"hash-d{dimension}-s{seed}"

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dimension), dtype=np.float64)
        for row, text in enumerate(texts):
            out[row] = hash_embed(text, self.dimension, self.seed)
        return out


class RemoteEmbeddingProvider(EmbeddingProvider):
    """
    Client for an embeddings endpoint.

    Wire shape: POST ``{base_url}/embeddings`` with ``{"model", "input": [...]}``,
    answered by ``{"data": [{"index": i, "embedding": [...]}, ...]}``.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        dimension: int,
        *,
        api_key_env: Optional[str] = "OPENAI_API_KEY",
        batch_size: int = 64,
        max_in_flight: int = 4,
        timeout: float = 60.0,
        retry: Optional[RetryPolicy] = None,
        http_client: Optional[httpx.Client] = None,
        sleep: Optional[Callable[[float], None]] = None,
    ):
        if batch_size < 1 or max_in_flight < 1:
            raise ValueError("batch_size and max_in_flight must be positive")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dimension = dimension
        self.name = f"remote:{model}"
        self.api_key_env = api_key_env
        self.batch_size = batch_size
        self.max_in_flight = max_in_flight
        self.retry = retry or RetryPolicy()
        self._client = http_client or httpx.Client(timeout=timeout)
        self._sleep = sleep

    def _embed_range(self, texts: List[str], start: int, end: int) -> np.ndarray:
        headers = auth_headers(resolve_api_key(self.api_key_env))
        kwargs = {"sleep": self._sleep} if self._sleep is not None else {}
        try:
            body, _ = post_json(
                self._client,
                f"{self.base_url}/embeddings",
                {"model": self.model, "input": texts},
                headers=headers,
                policy=self.retry,
                **kwargs,
            )
        except NetworkError as e:
            raise EmbeddingError(str(e), (start, end)) from e

        data = body.get("data")
        if not isinstance(data, list) or len(data) != len(texts):
            raise EmbeddingError(
                f"expected {len(texts)} embeddings, got {len(data) if isinstance(data, list) else 'none'}",
                (start, end),
            )
        if all(isinstance(item, dict) and "index" in item for item in data):
            data = sorted(data, key=lambda item: item["index"])
        out = np.zeros((len(texts), self.dimension), dtype=np.float64)
        for row, item in enumerate(data):
            values = item.get("embedding") if isinstance(item, dict) else None
            if not isinstance(values, list):
                raise EmbeddingError(f"item {row} has no embedding list", (start, end))
            if len(values) != self.dimension:
                raise EmbeddingError(
                    f"dimension mismatch: declared {self.dimension}, got {len(values)}", (start, end)
                )
            out[row] = normalize(np.asarray(values, dtype=np.float64))
        return out

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dimension), dtype=np.float64)
        # Empty texts keep the zero-vector sentinel and are never sent.
        positions = [i for i, text in enumerate(texts) if text.strip()]
        batches = [positions[i : i + self.batch_size] for i in range(0, len(positions), self.batch_size)]

        def run(batch: List[int]) -> np.ndarray:
            return self._embed_range([texts[i] for i in batch], batch[0], batch[-1] + 1)

        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            for batch, vectors in zip(batches, pool.map(run, batches)):
                out[batch] = vectors
        logger.debug("Embedded %d texts in %d remote batches", len(texts), len(batches))
        return out


class CachedEmbeddingProvider(EmbeddingProvider):
    """Memoizes another provider's vectors, keyed by a hash of the text."""

    def __init__(self, inner: EmbeddingProvider):
        self.inner = inner
        self.name = inner.name
        self.dimension = inner.dimension
        self._cache: Dict[str, EmbeddingVector] = {}
        self._lock = threading.Lock()

    def _key(self, text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        keys = [self._key(text) for text in texts]
        with self._lock:
            missing = {key: text for key, text in zip(keys, texts) if key not in self._cache}
        if missing:
            vectors = self.inner.embed_batch(list(missing.values()))
            with self._lock:
                for key, vector in zip(missing, vectors):
                    vector.setflags(write=False)
                    self._cache[key] = vector
        with self._lock:
            return np.stack([self._cache[key] for key in keys]) if keys else np.zeros((0, self.dimension))


def embed_batch(provider: EmbeddingProvider, texts: Sequence[str]) -> np.ndarray:
    """One normalized vector per text, in input order."""
    if not texts:
        raise ValueError("texts must be a non-empty list")
    return provider.embed_batch(list(texts))
