"""Tokenization and sparse lexical retrieval (TF-IDF seeding, BM25 baseline)."""

import logging
import re
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import sparse
from sklearn.feature_extraction.text import CountVectorizer, TfidfVectorizer

from .corpus import Corpus
from .errors import LexicalError

logger = logging.getLogger(__name__)

TokenStream = List[str]
ScoredIds = List[Tuple[str, float]]

# Scores are compared at this precision so accumulation-order noise never
# reorders exact ties; ties then fall back to ascending ordinal.
SCORE_DECIMALS = 12

_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> TokenStream:
    """Lowercase ``text`` and split it on every non-alphanumeric character."""
    return _TOKEN_RE.findall(text.lower())


def rank_descending(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` best scores, descending, ties by ascending index."""
    keys = np.round(np.asarray(scores, dtype=np.float64), SCORE_DECIMALS)
    order = np.lexsort((np.arange(keys.shape[0]), -keys))
    return order[:k]


def _check_k(k: int) -> None:
    if k < 1:
        raise ValueError(f"k must be a positive integer, got {k}")


class TfidfModel:
    """Fitted TF-IDF index: smoothed idf, raw counts, L2-normalized rows."""

    def __init__(self, vectorizer: TfidfVectorizer, doc_matrix: sparse.csr_matrix, ids: Sequence[str]):
        self.vectorizer = vectorizer
        self.doc_matrix = doc_matrix
        self.ids = list(ids)

    @property
    def vocabulary(self) -> Dict[str, int]:
        return self.vectorizer.vocabulary_

    @property
    def idf(self) -> Dict[str, float]:
        weights = self.vectorizer.idf_
        return {term: float(weights[col]) for term, col in self.vocabulary.items()}

    def query_vector(self, query: str) -> sparse.csr_matrix:
        return self.vectorizer.transform([query])


class Bm25Model:
    """Okapi BM25 statistics over a corpus."""

    def __init__(
        self,
        term_matrix: sparse.csc_matrix,
        vocabulary: Dict[str, int],
        ids: Sequence[str],
        k1: float = 1.2,
        b: float = 0.75,
    ):
        if k1 <= 0:
            raise ValueError("k1 must be > 0")
        if not 0.0 <= b <= 1.0:
            raise ValueError("b must be within [0, 1]")
        self.term_matrix = term_matrix
        self.vocabulary = vocabulary
        self.ids = list(ids)
        self.k1 = k1
        self.b = b
        self.doc_freqs = np.asarray((term_matrix > 0).sum(axis=0), dtype=np.float64).ravel()
        self.doc_lengths = np.asarray(term_matrix.sum(axis=1), dtype=np.float64).ravel()
        self.avg_doc_length = float(self.doc_lengths.mean())
        n_docs = len(self.ids)
        self.idf = np.log(1.0 + (n_docs - self.doc_freqs + 0.5) / (self.doc_freqs + 0.5))


def fit_tfidf(corpus: Corpus) -> TfidfModel:
    """
    Fit TF-IDF over passage texts.

    idf(t) = ln((1 + N) / (1 + df(t))) + 1; document entries are raw term
    counts times idf, then L2-normalized.

    Raises:
        LexicalError: Empty corpus or a corpus without a single token
    """
    if len(corpus) == 0:
        raise LexicalError("cannot fit TF-IDF on an empty corpus")
    vectorizer = TfidfVectorizer(
        tokenizer=tokenize,
        lowercase=False,
        token_pattern=None,
        smooth_idf=True,
        sublinear_tf=False,
        norm="l2",
        dtype=np.float64,
    )
    try:
        matrix = vectorizer.fit_transform([p.text for p in corpus])
    except ValueError as e:
        raise LexicalError(f"cannot fit TF-IDF: {e}") from e
    logger.debug("TF-IDF vocabulary: %d terms over %d passages", len(vectorizer.vocabulary_), len(corpus))
    return TfidfModel(vectorizer, matrix.tocsr(), corpus.ids())


def fit_bm25(corpus: Corpus, k1: float = 1.2, b: float = 0.75) -> Bm25Model:
    """Collect BM25 statistics (term counts, lengths, idf) over passage texts."""
    if len(corpus) == 0:
        raise LexicalError("cannot fit BM25 on an empty corpus")
    vectorizer = CountVectorizer(tokenizer=tokenize, lowercase=False, token_pattern=None)
    try:
        counts = vectorizer.fit_transform([p.text for p in corpus])
    except ValueError as e:
        raise LexicalError(f"cannot fit BM25: {e}") from e
    return Bm25Model(counts.tocsc().astype(np.float64), dict(vectorizer.vocabulary_), corpus.ids(), k1=k1, b=b)


def tfidf_scores(model: TfidfModel, query: str) -> np.ndarray:
    """Cosine of the query vector against every document; zeros if no known term."""
    query_vec = model.query_vector(query)
    if query_vec.nnz == 0:
        return np.zeros(len(model.ids))
    return np.asarray((model.doc_matrix @ query_vec.T).todense(), dtype=np.float64).ravel()


def tfidf_top_k(model: TfidfModel, query: str, k: int) -> ScoredIds:
    """Top ``k`` passages by TF-IDF cosine; empty when the query has no known term."""
    _check_k(k)
    if model.query_vector(query).nnz == 0:
        return []
    scores = tfidf_scores(model, query)
    return [(model.ids[i], float(scores[i])) for i in rank_descending(scores, k)]


def bm25_scores(model: Bm25Model, query: str) -> np.ndarray:
    """BM25 score of every document; query terms count with multiplicity."""
    scores = np.zeros(len(model.ids))
    length_norm = model.k1 * (1.0 - model.b + model.b * model.doc_lengths / model.avg_doc_length)
    for token in tokenize(query):
        col = model.vocabulary.get(token)
        if col is None:
            continue
        tf = model.term_matrix[:, col].toarray().ravel()
        scores += model.idf[col] * tf * (model.k1 + 1.0) / (tf + length_norm)
    return scores


def bm25_top_k(model: Bm25Model, query: str, k: int) -> ScoredIds:
    """Top ``k`` passages by BM25; empty when the query has no known term."""
    _check_k(k)
    if not any(token in model.vocabulary for token in tokenize(query)):
        return []
    scores = bm25_scores(model, query)
    return [(model.ids[i], float(scores[i])) for i in rank_descending(scores, k)]
