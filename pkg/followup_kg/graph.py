"""
Passage-level knowledge graph G = (V, E, X).

Nodes are corpus passages, X their provider embeddings, and E the union-
symmetrized k-nearest-neighbor edges by cosine similarity.

Graph file layout (all integers little-endian)::

    magic      8 bytes  b"FKGGRAPH"
    version    uint32
    header_len uint32
    header     UTF-8 JSON {"provider", "dimension", "k_edges", "ids"}
    embeddings float64[n * dimension], row-major
    offsets    int64[n + 1], CSR offsets into the neighbor array
    neighbors  int32[offsets[n]]
    checksum   32-byte sha256 of every preceding byte
"""

import hashlib
import json
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .corpus import Corpus
from .embedding import EmbeddingProvider
from .errors import GraphError, GraphFormatError, ProvenanceError
from .lexical import rank_descending
from .schemas import GoldenRecord, QuestionType

logger = logging.getLogger(__name__)

MAGIC = b"FKGGRAPH"
FORMAT_VERSION = 1
DEFAULT_K_EDGES = 10
_BLOCK_ROWS = 512


class KnowledgeGraph:
    """Immutable graph over a corpus: embeddings plus sorted adjacency lists."""

    def __init__(
        self,
        corpus: Corpus,
        embeddings: np.ndarray,
        adjacency: Sequence[Sequence[int]],
        k_edges: int,
        provider_name: str,
    ):
        if embeddings.shape[0] != len(corpus):
            raise GraphError(f"{embeddings.shape[0]} embeddings for {len(corpus)} passages")
        if len(adjacency) != len(corpus):
            raise GraphError(f"{len(adjacency)} adjacency lists for {len(corpus)} passages")
        self.corpus = corpus
        self.embeddings = np.ascontiguousarray(embeddings, dtype=np.float64)
        self.embeddings.setflags(write=False)
        self._adjacency: Tuple[Tuple[int, ...], ...] = tuple(tuple(row) for row in adjacency)
        self.k_edges = k_edges
        self.provider_name = provider_name

    @property
    def dimension(self) -> int:
        return int(self.embeddings.shape[1])

    def __len__(self) -> int:
        return len(self.corpus)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return (
            self.corpus.ids() == other.corpus.ids()
            and self.k_edges == other.k_edges
            and self.provider_name == other.provider_name
            and self._adjacency == other._adjacency
            and np.array_equal(self.embeddings, other.embeddings)
        )

    def neighbors(self, node: int) -> Tuple[int, ...]:
        """Sorted neighbor ordinals of ``node``."""
        if not 0 <= node < len(self._adjacency):
            raise IndexError(f"node {node} out of range [0, {len(self._adjacency)})")
        return self._adjacency[node]

    def edges(self) -> Set[Tuple[int, int]]:
        """Undirected edges as (low, high) ordinal pairs."""
        return {(i, j) for i, row in enumerate(self._adjacency) for j in row if i < j}

    def has_edge(self, a: int, b: int) -> bool:
        return b in self.neighbors(a)


def _knn_rows(embeddings: np.ndarray, start: int, stop: int, k_edges: int) -> List[np.ndarray]:
    sims = embeddings[start:stop] @ embeddings.T
    rows = []
    for offset, row in enumerate(sims):
        node = start + offset
        row = row.copy()
        row[node] = -np.inf
        rows.append(rank_descending(row, k_edges))
    return rows


def knn_adjacency(embeddings: np.ndarray, k_edges: int, workers: int = 1) -> List[List[int]]:
    """
    Exact kNN by cosine (ties to the lower ordinal), symmetrized by union.

    Rows are computed in blocks; ``workers`` > 1 spreads blocks over threads.
    """
    n = embeddings.shape[0]
    blocks = [(start, min(start + _BLOCK_ROWS, n)) for start in range(0, n, _BLOCK_ROWS)]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        directed = [
            row
            for rows in pool.map(lambda block: _knn_rows(embeddings, block[0], block[1], k_edges), blocks)
            for row in rows
        ]
    neighbor_sets: List[Set[int]] = [set() for _ in range(n)]
    for i, row in enumerate(directed):
        for j in row:
            j = int(j)
            neighbor_sets[i].add(j)
            neighbor_sets[j].add(i)
    return [sorted(s) for s in neighbor_sets]


def build_graph(
    corpus: Corpus,
    provider: EmbeddingProvider,
    k_edges: int = DEFAULT_K_EDGES,
    workers: int = 1,
) -> KnowledgeGraph:
    """
    Embed every passage and connect each to its ``k_edges`` most similar peers.

    Args:
        corpus: Passages to index (at least two)
        provider: Embedding provider for X
        k_edges: Directed out-degree before symmetrization
        workers: Threads for the all-pairs similarity blocks

    Raises:
        GraphError: corpus too small or k_edges out of range
    """
    n = len(corpus)
    if n < 2:
        raise GraphError("a knowledge graph needs at least two passages")
    if not 1 <= k_edges < n:
        raise GraphError(f"k_edges must be within [1, {n - 1}] for {n} passages, got {k_edges}")

    embeddings = provider.embed_batch([p.text for p in corpus])
    adjacency = knn_adjacency(embeddings, k_edges, workers=workers)
    logger.info(
        "Built graph: %d nodes, %d edges (k_edges=%d, provider=%s)",
        n,
        sum(len(row) for row in adjacency) // 2,
        k_edges,
        provider.name,
    )
    return KnowledgeGraph(corpus, embeddings, adjacency, k_edges, provider.name)


def neighbors(graph: KnowledgeGraph, node: int) -> Tuple[int, ...]:
    return graph.neighbors(node)


def _encode(graph: KnowledgeGraph) -> bytes:
    header = json.dumps(
        {
            "provider": graph.provider_name,
            "dimension": graph.dimension,
            "k_edges": graph.k_edges,
            "ids": graph.corpus.ids(),
        },
        ensure_ascii=False,
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    rows = [graph.neighbors(i) for i in range(len(graph))]
    offsets = np.zeros(len(rows) + 1, dtype="<i8")
    offsets[1:] = np.cumsum([len(row) for row in rows])
    flat = np.fromiter((j for row in rows for j in row), dtype="<i4", count=int(offsets[-1]))
    body = b"".join(
        [
            MAGIC,
            struct.pack("<II", FORMAT_VERSION, len(header)),
            header,
            graph.embeddings.astype("<f8").tobytes(),
            offsets.tobytes(),
            flat.tobytes(),
        ]
    )
    return body + hashlib.sha256(body).digest()


def save_graph(graph: KnowledgeGraph, path: Union[str, Path]) -> None:
    """Write ``graph`` losslessly; identical graphs produce identical bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(_encode(graph))
    logger.info("Saved graph to %s", path)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int, what: str) -> bytes:
        if size < 0 or self.pos + size > len(self.data):
            raise GraphFormatError(f"graph file truncated while reading {what}")
        chunk = self.data[self.pos : self.pos + size]
        self.pos += size
        return chunk


def load_graph(path: Union[str, Path], corpus: Corpus) -> KnowledgeGraph:
    """
    Read a graph file and attach it to ``corpus``.

    Raises:
        GraphFormatError: Bad magic, unsupported version, truncation, checksum mismatch
        ProvenanceError: The file's passage ids differ from ``corpus``
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise GraphFormatError(f"cannot read graph {path}: {e.strerror or e}") from e

    if len(data) < len(MAGIC) + 8 + 32:
        raise GraphFormatError(f"{path}: file too short to be a graph")
    body, checksum = data[:-32], data[-32:]
    reader = _Reader(body)
    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise GraphFormatError(f"{path}: not a graph file (bad magic)")
    version, header_len = struct.unpack("<II", reader.take(8, "version"))
    if version != FORMAT_VERSION:
        raise GraphFormatError(f"{path}: unsupported graph format version {version} (expected {FORMAT_VERSION})")
    try:
        header = json.loads(reader.take(header_len, "header").decode("utf-8"))
        ids: List[str] = header["ids"]
        dimension = int(header["dimension"])
        k_edges = int(header["k_edges"])
        provider_name = str(header["provider"])
    except (ValueError, KeyError, TypeError) as e:
        raise GraphFormatError(f"{path}: corrupt header: {e}") from e

    n = len(ids)
    embeddings = np.frombuffer(reader.take(8 * n * dimension, "embeddings"), dtype="<f8")
    offsets = np.frombuffer(reader.take(8 * (n + 1), "adjacency offsets"), dtype="<i8")
    if offsets[0] != 0 or np.any(np.diff(offsets) < 0):
        raise GraphFormatError(f"{path}: corrupt adjacency offsets")
    flat = np.frombuffer(reader.take(4 * int(offsets[-1]), "adjacency"), dtype="<i4")
    if reader.pos != len(body):
        raise GraphFormatError(f"{path}: {len(body) - reader.pos} unexpected trailing bytes")
    if hashlib.sha256(body).digest() != checksum:
        raise GraphFormatError(f"{path}: checksum mismatch (file corrupt or truncated)")

    if ids != corpus.ids():
        mismatched = next(
            (f"position {i}: {a!r} != {b!r}" for i, (a, b) in enumerate(zip(ids, corpus.ids())) if a != b),
            f"{n} ids in graph, {len(corpus)} in corpus",
        )
        raise ProvenanceError(f"{path}: graph was built over a different corpus ({mismatched})")

    adjacency = [flat[offsets[i] : offsets[i + 1]].tolist() for i in range(n)]
    return KnowledgeGraph(
        corpus,
        embeddings.reshape(n, dimension).astype(np.float64),
        adjacency,
        k_edges,
        provider_name,
    )


def golden_edge_coverage(graph: KnowledgeGraph, records: Iterable[GoldenRecord]) -> List[dict]:
    """
    For each bridge record, whether every consecutive golden pair is an edge.

    Comparison chains are parallel evidence and need no edge between their
    passages; single-hop chains have no pairs.
    """
    rows = []
    corpus = graph.corpus
    for record in records:
        if record.question_type is not QuestionType.BRIDGE:
            continue
        ordinals = [corpus.ordinal(pid) for pid in record.golden_ids]
        pairs = list(zip(ordinals, ordinals[1:]))
        present = [graph.has_edge(a, b) for a, b in pairs]
        rows.append({"question_id": record.id, "edges": len(pairs), "present": sum(present), "covered": all(present)})
    return rows


def covering_k_edges(
    corpus: Corpus,
    provider: EmbeddingProvider,
    records: Sequence[GoldenRecord],
    candidates: Sequence[int] = (5, 10, 20, 40),
) -> Optional[KnowledgeGraph]:
    """Build with each candidate ``k_edges`` in turn; return the first graph covering every bridge edge."""
    for k_edges in candidates:
        if k_edges >= len(corpus):
            break
        graph = build_graph(corpus, provider, k_edges)
        if all(row["covered"] for row in golden_edge_coverage(graph, records)):
            return graph
        logger.info("k_edges=%d leaves golden bridge edges uncovered", k_edges)
    return None
