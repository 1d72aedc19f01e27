"""Test helpers shared by several modules."""

import json
from typing import List, Optional

import numpy as np

from followup_kg.corpus import Corpus
from followup_kg.embedding import EmbeddingProvider
from followup_kg.llm_client import ChatClient, EndpointConfig
from followup_kg.schemas import Passage

STUB_URL = "http://testserver"


class TableProvider(EmbeddingProvider):
    """Embeds known texts to fixed vectors; anything else maps to the zero vector."""

    def __init__(self, table: dict, name: str = "table"):
        self.table = {text: np.asarray(vec, dtype=np.float64) for text, vec in table.items()}
        self.dimension = len(next(iter(self.table.values())))
        self.name = name
        self.calls: List[List[str]] = []

    def embed_batch(self, texts):
        self.calls.append(list(texts))
        return np.stack([self.table.get(t, np.zeros(self.dimension)) for t in texts])


def make_corpus(*texts: str, titles: Optional[List[str]] = None) -> Corpus:
    titles = titles or [""] * len(texts)
    return Corpus(Passage(id=f"d{i}", title=titles[i], text=text) for i, text in enumerate(texts))


def write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")


def stub_client(http_client, model: str = "stub-model") -> ChatClient:
    config = EndpointConfig(base_url=STUB_URL, model=model, api_key_env=None)
    return ChatClient(config, http_client=http_client)
