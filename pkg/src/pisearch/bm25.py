"""Inverted index with tunable BM25 scoring and configurable retrieval depth.

Scoring uses the nonnegative idf variant ``ln(1 + (N - df + 0.5) / (df + 0.5))``
with a ``(k1 + 1)`` numerator:

    score(q, d) = sum over unique query terms t present in d of
        idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * |d| / avgdl))

The analyzer is deliberately plain: lowercase, Unicode letters and digits kept,
everything else a separator, no stemming, no stopwords. Rankings break score
ties by ascending docid so results are fully deterministic.
"""

from __future__ import annotations

import json
import math
import re
from bisect import bisect_left
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .corpus import CorpusHandle, Document
from .errors import EmptyCorpusError, PiSearchError, UnknownDocidError

# Unicode letters and digits; underscore is a separator like any other punctuation.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

INDEX_FORMAT = "pisearch-bm25-index"
INDEX_FORMAT_VERSION = 1


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric terms; empty input gives an empty list."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Bm25Params:
    """Term-frequency saturation (k1 >= 0) and length normalization (b in [0, 1])."""

    k1: float = 25.0
    b: float = 1.0

    def __post_init__(self):
        if not (self.k1 >= 0):
            raise ValueError(f"k1 must be >= 0, got {self.k1}")
        if not (0.0 <= self.b <= 1.0):
            raise ValueError(f"b must be in [0, 1], got {self.b}")


# Long-document setting used as the package default.
LONG_DOC_PARAMS = Bm25Params(k1=25.0, b=1.0)
# Stock Lucene-style defaults, kept as the comparison baseline.
STOCK_PARAMS = Bm25Params(k1=0.9, b=0.4)


@dataclass(frozen=True)
class Hit:
    rank: int
    docid: str
    score: float


@dataclass(frozen=True)
class Ranking:
    """Ordered hits for one query: score descending, ties by ascending docid."""

    query: str
    params: Bm25Params
    hits: tuple[Hit, ...]

    def __len__(self) -> int:
        return len(self.hits)

    def docids(self) -> list[str]:
        return [hit.docid for hit in self.hits]


@dataclass(frozen=True)
class IndexStats:
    doc_count: int
    avgdl: float
    df: Mapping[str, int]
    doc_len: Mapping[str, int]


class Index:
    """Immutable postings store: term -> (docid, tf) pairs sorted by docid."""

    def __init__(
        self,
        postings: dict[str, list[tuple[str, int]]],
        doc_len: dict[str, int],
        analyzer: Callable[[str], list[str]] = tokenize,
    ):
        self._postings = postings
        self._doc_len = doc_len
        self._total_len = sum(doc_len.values())
        self._analyzer = analyzer

    @property
    def doc_count(self) -> int:
        return len(self._doc_len)

    @property
    def avgdl(self) -> float:
        return self._total_len / len(self._doc_len)

    def __contains__(self, docid: str) -> bool:
        return docid in self._doc_len

    def docids(self):
        return self._doc_len.keys()

    def doc_length(self, docid: str) -> int:
        try:
            return self._doc_len[docid]
        except KeyError:
            raise UnknownDocidError(f"unknown docid: {docid!r}") from None

    def analyze(self, text: str) -> list[str]:
        return self._analyzer(text)

    def postings(self, term: str) -> list[tuple[str, int]]:
        return self._postings.get(term, [])

    def df(self, term: str) -> int:
        return len(self._postings.get(term, ()))

    def idf(self, term: str) -> float:
        n = self.df(term)
        return math.log(1.0 + (self.doc_count - n + 0.5) / (n + 0.5))

    def tf(self, term: str, docid: str) -> int:
        plist = self._postings.get(term)
        if not plist:
            return 0
        i = bisect_left(plist, (docid,))
        if i < len(plist) and plist[i][0] == docid:
            return plist[i][1]
        return 0

    def stats(self) -> IndexStats:
        df = {term: len(plist) for term, plist in self._postings.items()}
        return IndexStats(
            doc_count=self.doc_count,
            avgdl=self.avgdl,
            df=df,
            doc_len=dict(self._doc_len),
        )


def build_index(
    corpus: CorpusHandle | Iterable[Document],
    analyzer: Callable[[str], list[str]] = tokenize,
) -> Index:
    """Build an immutable index over a corpus handle or an iterable of documents."""
    docs = corpus.iter_documents() if isinstance(corpus, CorpusHandle) else corpus
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_len: dict[str, int] = {}
    for doc in docs:
        tokens = analyzer(doc.text)
        doc_len[doc.docid] = len(tokens)
        counts: dict[str, int] = {}
        for token in tokens:
            counts[token] = counts.get(token, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, []).append((doc.docid, tf))
    if not doc_len:
        raise EmptyCorpusError("cannot build an index over an empty corpus")
    for plist in postings.values():
        plist.sort()
    return Index(postings, doc_len, analyzer)


def score(
    index: Index,
    query_terms: Iterable[str],
    docid: str,
    params: Bm25Params = LONG_DOC_PARAMS,
) -> float:
    """BM25 score of one document for the given query terms.

    Duplicate query terms count once; terms absent from the document
    contribute zero. With k1 = 0 each present term contributes exactly
    its idf.
    """
    dl = index.doc_length(docid)
    norm = 1.0 - params.b + params.b * (dl / index.avgdl)
    total = 0.0
    for term in dict.fromkeys(query_terms):
        tf = index.tf(term, docid)
        if tf == 0:
            continue
        total += index.idf(term) * (tf * (params.k1 + 1.0)) / (tf + params.k1 * norm)
    return total


def search(
    index: Index,
    query: str,
    depth: int = 1000,
    params: Bm25Params = LONG_DOC_PARAMS,
) -> Ranking:
    """Top-``depth`` documents for a raw query string.

    ``depth`` is a request limit: it is clamped to the number of matching
    documents, never an error. A query with no indexed term returns an
    empty ranking.
    """
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    terms = list(dict.fromkeys(index.analyze(query)))
    candidates: set[str] = set()
    for term in terms:
        for docid, _ in index.postings(term):
            candidates.add(docid)
    # Per-document scoring mirrors score() exactly (same term order, same
    # accumulation order) so rankings match a document-at-a-time oracle
    # bit for bit, ties included.
    scored = [(docid, score(index, terms, docid, params)) for docid in candidates]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    hits = tuple(
        Hit(rank=i + 1, docid=docid, score=value)
        for i, (docid, value) in enumerate(scored[:depth])
    )
    return Ranking(query=query, params=params, hits=hits)


def save_index(index: Index, path: str | Path) -> None:
    """Persist postings to a versioned, deterministic JSON file."""
    payload = {
        "format": INDEX_FORMAT,
        "version": INDEX_FORMAT_VERSION,
        "doc_len": dict(sorted(index._doc_len.items())),
        "postings": {
            term: [[docid, tf] for docid, tf in plist]
            for term, plist in sorted(index._postings.items())
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_index(path: str | Path, analyzer: Callable[[str], list[str]] = tokenize) -> Index:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != INDEX_FORMAT:
        raise PiSearchError(f"not an index file: {path}")
    if payload.get("version") != INDEX_FORMAT_VERSION:
        raise PiSearchError(f"unsupported index version {payload.get('version')!r}")
    postings = {
        term: [(docid, tf) for docid, tf in plist]
        for term, plist in payload["postings"].items()
    }
    return Index(postings, dict(payload["doc_len"]), analyzer)
