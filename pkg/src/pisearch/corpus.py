"""JSONL corpus ingestion with docid-addressed, line-chunked document access.

The corpus file is JSONL: one object per line with required string fields
``docid`` and ``text``; extra fields are preserved on disk but ignored here.
Bodies stay on disk behind a docid -> (byte offset, length) map, so a corpus
of 100k long documents does not need to be resident in memory.
"""

from __future__ import annotations

import json
import os
import threading
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    DuplicateDocidError,
    IngestError,
    LineRangeError,
    ToolArgumentError,
    UnknownDocidError,
)

DEFAULT_READ_LIMIT = 200

# Documents kept decoded in memory at any one time per handle.
_DOC_CACHE_SIZE = 16


@dataclass(frozen=True)
class Document:
    """One corpus entry. Lines are 1-indexed and split on ``\\n`` only."""

    docid: str
    text: str

    @property
    def lines(self) -> list[str]:
        return self.text.split("\n")

    @property
    def total_lines(self) -> int:
        return self.text.count("\n") + 1


@dataclass(frozen=True)
class DocumentChunk:
    """A contiguous line range of one document.

    ``next_offset`` is present iff ``end_line < total_lines`` and then equals
    ``end_line + 1``, so following it from offset 1 walks the whole document.
    """

    docid: str
    start_line: int
    end_line: int
    content: str
    total_lines: int
    next_offset: int | None


def chunk_lines(doc: Document, offset: int = 1, limit: int = DEFAULT_READ_LIMIT) -> DocumentChunk:
    """Slice ``doc`` into the line range [offset, offset + limit - 1], clamped."""
    if offset < 1:
        raise ToolArgumentError("offset must be >= 1")
    if limit < 1:
        raise ToolArgumentError("limit must be >= 1")
    lines = doc.lines
    total = len(lines)
    if offset > total:
        raise LineRangeError(
            f"line offset {offset} is past the end of {doc.docid!r} ({total} lines)",
            total_lines=total,
        )
    end = min(offset + limit - 1, total)
    content = "\n".join(lines[offset - 1 : end])
    next_offset = end + 1 if end < total else None
    return DocumentChunk(
        docid=doc.docid,
        start_line=offset,
        end_line=end,
        content=content,
        total_lines=total,
        next_offset=next_offset,
    )


class CorpusHandle:
    """Read-only view of an ingested JSONL corpus.

    Immutable after ingestion and safe to share across concurrent readers;
    lookups use positional reads so no file-position state is shared.
    """

    def __init__(self, path: str | Path, spans: dict[str, tuple[int, int]]):
        self._path = Path(path)
        self._spans = spans
        self._fd = os.open(self._path, os.O_RDONLY)
        self._cache: OrderedDict[str, Document] = OrderedDict()
        self._cache_lock = threading.Lock()

    def close(self) -> None:
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None

    def __enter__(self) -> "CorpusHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __len__(self) -> int:
        return len(self._spans)

    def __contains__(self, docid: str) -> bool:
        return docid in self._spans

    @property
    def doc_count(self) -> int:
        return len(self._spans)

    @property
    def path(self) -> Path:
        return self._path

    def docids(self):
        """Docids in corpus-file order."""
        return self._spans.keys()

    def get(self, docid: str) -> Document:
        if docid not in self._spans:
            raise UnknownDocidError(f"unknown docid: {docid!r}")
        with self._cache_lock:
            doc = self._cache.get(docid)
            if doc is not None:
                self._cache.move_to_end(docid)
                return doc
        offset, length = self._spans[docid]
        raw = os.pread(self._fd, length, offset)
        record = json.loads(raw)
        doc = Document(docid=record["docid"], text=record["text"])
        with self._cache_lock:
            self._cache[docid] = doc
            while len(self._cache) > _DOC_CACHE_SIZE:
                self._cache.popitem(last=False)
        return doc

    def iter_documents(self):
        for docid in self._spans:
            yield self.get(docid)

    def read_lines(
        self, docid: str, offset: int = 1, limit: int = DEFAULT_READ_LIMIT
    ) -> DocumentChunk:
        """Return lines [offset, min(offset + limit - 1, total_lines)] of a document."""
        return chunk_lines(self.get(docid), offset=offset, limit=limit)


def ingest_corpus(path: str | Path) -> CorpusHandle:
    """Ingest a JSONL corpus and return a docid-addressed handle.

    Every line must be a JSON object with string ``docid`` and ``text``.
    Malformed lines and duplicate docids abort ingestion with the offending
    line number.
    """
    spans: dict[str, tuple[int, int]] = {}
    pos = 0
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            length = len(raw)
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise IngestError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise IngestError(f"line {lineno}: expected a JSON object")
            docid = record.get("docid")
            text = record.get("text")
            if not isinstance(docid, str) or not docid:
                raise IngestError(f"line {lineno}: missing or non-string 'docid'")
            if not isinstance(text, str):
                raise IngestError(f"line {lineno}: missing or non-string 'text'")
            if docid in spans:
                raise DuplicateDocidError(f"line {lineno}: duplicate docid {docid!r}")
            spans[docid] = (pos, length)
            pos += length
    return CorpusHandle(path, spans)


@dataclass(frozen=True)
class QueryRecord:
    """One ground-truth entry: a query with its relevance judgments.

    ``gold_docids`` is the stricter subset of ``evidence_docids`` that also
    semantically contains the answer; the subset relation is enforced on load.
    """

    query_id: str
    query: str
    answer: str
    evidence_docids: frozenset[str]
    gold_docids: frozenset[str]


def load_ground_truth(path: str | Path) -> "OrderedDict[str, QueryRecord]":
    """Load ground-truth JSONL keyed by query_id, preserving file order."""
    records: OrderedDict[str, QueryRecord] = OrderedDict()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
            try:
                query_id = str(obj["query_id"])
                query = obj["query"]
                answer = obj["answer"]
                evidence = frozenset(str(d) for d in obj["evidence_docids"])
                gold = frozenset(str(d) for d in obj["gold_docids"])
            except (KeyError, TypeError) as exc:
                raise IngestError(f"line {lineno}: missing ground-truth field ({exc})") from exc
            if query_id in records:
                raise IngestError(f"line {lineno}: duplicate query_id {query_id!r}")
            if not gold <= evidence:
                extra = sorted(gold - evidence)
                raise IngestError(
                    f"line {lineno}: gold docids not a subset of evidence docids: {extra}"
                )
            records[query_id] = QueryRecord(
                query_id=query_id,
                query=query,
                answer=answer,
                evidence_docids=evidence,
                gold_docids=gold,
            )
    return records
