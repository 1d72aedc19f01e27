"""Load, validate, persist and address passage corpora."""

import json
import logging
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Literal, Tuple, Union

from pydantic import ValidationError

from .errors import CorpusError, PassageNotFoundError
from .schemas import Passage

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class Corpus:
    """Immutable ordered collection of passages with an id -> ordinal index."""

    def __init__(self, passages: Iterable[Passage]):
        self._passages: Tuple[Passage, ...] = tuple(passages)
        self._index: Dict[str, int] = {}
        for ordinal, passage in enumerate(self._passages):
            if passage.id in self._index:
                raise CorpusError(f"duplicate passage id {passage.id!r}")
            self._index[passage.id] = ordinal

    def __len__(self) -> int:
        return len(self._passages)

    def __iter__(self) -> Iterator[Passage]:
        return iter(self._passages)

    def __getitem__(self, ordinal: int) -> Passage:
        return self._passages[ordinal]

    def __contains__(self, passage_id: object) -> bool:
        return passage_id in self._index

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return self._passages == other._passages

    def __repr__(self) -> str:
        return f"Corpus(size={len(self)})"

    @property
    def passages(self) -> Tuple[Passage, ...]:
        return self._passages

    def ids(self) -> List[str]:
        return [p.id for p in self._passages]

    def ordinal(self, passage_id: str) -> int:
        try:
            return self._index[passage_id]
        except KeyError:
            raise PassageNotFoundError(passage_id) from None

    def get(self, passage_id: str) -> Passage:
        return self._passages[self.ordinal(passage_id)]


def load_corpus(path: PathLike, format: Literal["jsonl"] = "jsonl") -> Corpus:
    """
    Load a JSONL corpus file, one passage object per line.

    Args:
        path: Corpus file
        format: Only "jsonl" is supported

    Returns:
        Corpus with ordinals assigned in file order

    Raises:
        CorpusError: Unreadable file, malformed line, duplicate id or empty text
    """
    if format != "jsonl":
        raise CorpusError(f"unsupported corpus format: {format!r}")
    path = Path(path)
    try:
        handle = path.open("r", encoding="utf-8")
    except OSError as e:
        raise CorpusError(f"cannot read corpus {path}: {e.strerror or e}") from e

    passages: List[Passage] = []
    first_seen: Dict[str, int] = {}
    with handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                passage = Passage.model_validate_json(line)
            except ValidationError as e:
                detail = e.errors()[0]
                where = ".".join(str(p) for p in detail.get("loc", ())) or "record"
                raise CorpusError(
                    f"{path}:{line_no}: invalid record ({where}: {detail['msg']})",
                    line=line_no,
                ) from e
            if passage.id in first_seen:
                raise CorpusError(
                    f"{path}:{line_no}: duplicate id {passage.id!r} "
                    f"(first seen on line {first_seen[passage.id]})",
                    line=line_no,
                )
            first_seen[passage.id] = line_no
            passages.append(passage)

    logger.info("Loaded %d passages from %s", len(passages), path)
    return Corpus(passages)


def save_corpus(corpus: Corpus, path: PathLike) -> None:
    """Write a corpus as JSONL (UTF-8, LF line endings), in ordinal order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for passage in corpus:
            record = {"id": passage.id, "title": passage.title, "text": passage.text}
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def get_passage(corpus: Corpus, passage_id: str) -> Passage:
    """Return the passage with ``passage_id``; raises PassageNotFoundError."""
    return corpus.get(passage_id)
