"""Shared fixtures."""

import pytest
from fastapi.testclient import TestClient

from followup_kg.corpus import Corpus
from followup_kg.embedding import HashEmbeddingProvider
from followup_kg.stub_endpoint import ScriptedResponder, create_stub_app

from .helpers import make_corpus


@pytest.fixture
def hash_provider() -> HashEmbeddingProvider:
    return HashEmbeddingProvider(dimension=256, seed=0)


@pytest.fixture
def small_corpus() -> Corpus:
    return make_corpus(
        "The Eiffel Tower is located in Paris.",
        "Paris is the capital of France.",
        "The Colosseum stands in Rome.",
        "Rome is the capital of Italy.",
        "Mount Fuji is the highest mountain in Japan.",
    )


@pytest.fixture
def stub():
    """A stub endpoint plus a TestClient usable as the httpx client."""
    app, endpoint = create_stub_app(ScriptedResponder())
    with TestClient(app) as client:
        yield endpoint, client
