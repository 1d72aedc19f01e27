"""Tests for hash and remote embedding providers."""

import json
from pathlib import Path

import httpx
import numpy as np
import pytest

from followup_kg.embedding import (
    CachedEmbeddingProvider,
    HashEmbeddingProvider,
    RemoteEmbeddingProvider,
    cosine,
    embed_batch,
    hash_embed,
    normalize,
)
from followup_kg.errors import EmbeddingError
from followup_kg.transport import RetryPolicy

from .helpers import STUB_URL, TableProvider

GOLDEN_VECTORS = Path(__file__).parent / "data" / "hash_golden.jsonl"


def test_hash_embed_matches_committed_golden_vectors():
    """Leading components of pinned texts never change across platforms or releases."""
    with GOLDEN_VECTORS.open(encoding="utf-8") as f:
        golden = [json.loads(line) for line in f if line.strip()]
    assert len(golden) == 10
    for row in golden:
        vector = hash_embed(row["text"], row["dimension"], row["seed"])
        assert vector[:8].tolist() == pytest.approx(row["first8"], abs=1e-12), row["text"]


def test_hash_embed_is_normalized_and_deterministic():
    """Non-empty text yields a unit vector that never changes between calls."""
    first = hash_embed("Paris is the capital of France.")
    assert np.linalg.norm(first) == pytest.approx(1.0)
    assert np.array_equal(first, hash_embed("Paris is the capital of France."))
    assert not np.array_equal(first, hash_embed("Paris is the capital of France.", seed=1))


def test_empty_text_is_the_zero_vector():
    """Empty input has no direction; its cosine with anything is zero."""
    zero = hash_embed("")
    assert not zero.any()
    assert cosine(zero, hash_embed("anything")) == 0.0


def test_hash_dimension_floor():
    """Dimensions below the floor are rejected."""
    with pytest.raises(ValueError):
        hash_embed("x", dimension=8)
    with pytest.raises(ValueError):
        HashEmbeddingProvider(dimension=4)


def test_cosine_rejects_mismatched_dimensions():
    """Vectors of different size are not comparable."""
    with pytest.raises(ValueError):
        cosine(np.ones(3) / np.sqrt(3), np.ones(4) / 2)


def test_cosine_of_identical_texts_is_one(hash_provider):
    """The provider's rows are normalized so self-cosine is 1."""
    a, b = hash_provider.embed_batch(["same words here", "same words here"])
    assert cosine(a, b) == pytest.approx(1.0)


def test_embed_batch_rejects_empty_input(hash_provider):
    """At least one text is required."""
    with pytest.raises(ValueError):
        embed_batch(hash_provider, [])


def test_normalize_keeps_zero_vector():
    assert not normalize(np.zeros(5)).any()


def test_remote_provider_against_stub(stub):
    """The stub serves hash vectors; the remote client returns them in input order."""
    endpoint, client = stub
    provider = RemoteEmbeddingProvider(
        STUB_URL, "stub-embed", 256, api_key_env=None, batch_size=2, max_in_flight=2, http_client=client
    )
    texts = ["first passage", "second passage", "third one", "", "fifth"]
    vectors = provider.embed_batch(texts)
    for text, row in zip(texts, vectors):
        assert np.allclose(row, hash_embed(text, 256, 0))
    sent = [text for route, body in endpoint.calls if route == "embeddings" for text in body["input"]]
    assert "" not in sent
    assert sorted(sent) == sorted(t for t in texts if t)


def _mock_client(handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


def test_remote_provider_retries_server_errors():
    """A 5xx is retried and the second answer is used."""
    attempts = []

    def handler(request):
        attempts.append(request)
        if len(attempts) == 1:
            return httpx.Response(503)
        return httpx.Response(200, json={"data": [{"index": 0, "embedding": [3.0, 4.0]}]})

    provider = RemoteEmbeddingProvider(
        "http://embed.test", "m", 2, api_key_env=None, http_client=_mock_client(handler), sleep=lambda _: None
    )
    assert np.allclose(provider.embed_batch(["x"]), [[0.6, 0.8]])
    assert len(attempts) == 2


def test_remote_dimension_mismatch_names_the_batch():
    """A vector of the wrong size fails with the batch range."""

    def handler(request):
        return httpx.Response(200, json={"data": [{"index": 0, "embedding": [1.0, 0.0, 0.0]}]})

    provider = RemoteEmbeddingProvider("http://embed.test", "m", 2, api_key_env=None, http_client=_mock_client(handler))
    with pytest.raises(EmbeddingError) as excinfo:
        provider.embed_batch(["x"])
    assert excinfo.value.batch_range == (0, 1)
    assert "dimension mismatch" in str(excinfo.value)


def test_remote_exhausted_retries_become_embedding_error():
    """Persistent failures surface as an embedding error."""

    def handler(request):
        return httpx.Response(500)

    provider = RemoteEmbeddingProvider(
        "http://embed.test",
        "m",
        2,
        api_key_env=None,
        retry=RetryPolicy(max_retries=1, backoff_base=0.0),
        http_client=_mock_client(handler),
        sleep=lambda _: None,
    )
    with pytest.raises(EmbeddingError):
        provider.embed_batch(["x", "y"])


def test_cached_provider_embeds_each_text_once():
    """Repeated texts hit the cache."""
    inner = TableProvider({"a": [1.0, 0.0], "b": [0.0, 1.0]})
    cached = CachedEmbeddingProvider(inner)
    first = cached.embed_batch(["a", "b"])
    second = cached.embed_batch(["b", "a", "a"])
    assert np.array_equal(second, first[[1, 0, 0]])
    assert inner.calls == [["a", "b"]]
    assert cached.name == inner.name
