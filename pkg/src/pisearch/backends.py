"""Retrieval backends and the controller configuration contract.

Three backend kinds sit behind the controller:

- ``embedded``: the in-process BM25 index over a local corpus (default);
- ``http-json``: a remote engine speaking ``POST /search`` and
  ``GET /document/{docid}``;
- ``mock``: a fixed document set with request counters, for tests.

Configuration arrives as JSON through the required ``PI_SEARCH_EXTENSION_CONFIG``
environment variable (or an equivalent dict)::

    {"backend": {"kind": "embedded" | "http-json" | "mock", ...},
     "depth": 1000,
     "bm25": {"k1": 25, "b": 1},
     "limits": {"visible_lines": 256, "visible_bytes": 51200, "cache_entries": 32}}

A ``{"kind": "anserini-bm25", "transport": {"kind": "tcp", "host", "port"}}``
backend block is accepted and mapped onto the http-json client; stdio
transports are not supported.
"""

from __future__ import annotations

import json
import os
import urllib.parse
from dataclasses import dataclass, field

import requests

from . import bm25
from .corpus import CorpusHandle, Document, ingest_corpus
from .errors import BackendError, ConfigError, UnknownDocidError

CONFIG_ENV_VAR = "PI_SEARCH_EXTENSION_CONFIG"

DEFAULT_DEPTH = 1000
DEFAULT_VISIBLE_LINES = 256
DEFAULT_VISIBLE_BYTES = 50 * 1024
DEFAULT_CACHE_ENTRIES = 32


@dataclass(frozen=True)
class SearchHit:
    """One ranked hit with the body text the controller excerpts from."""

    docid: str
    score: float
    text: str


class Backend:
    """Interface: search(query, limit) -> [SearchHit]; fetch_document(docid) -> Document."""

    def search(self, query: str, limit: int) -> list[SearchHit]:
        raise NotImplementedError

    def fetch_document(self, docid: str) -> Document:
        raise NotImplementedError


class EmbeddedBackend(Backend):
    """In-process BM25 engine over a local corpus handle."""

    def __init__(self, index: bm25.Index, corpus: CorpusHandle, params: bm25.Bm25Params):
        self.index = index
        self.corpus = corpus
        self.params = params

    def search(self, query: str, limit: int) -> list[SearchHit]:
        ranking = bm25.search(self.index, query, depth=limit, params=self.params)
        return [
            SearchHit(docid=h.docid, score=h.score, text=self.corpus.get(h.docid).text)
            for h in ranking.hits
        ]

    def fetch_document(self, docid: str) -> Document:
        return self.corpus.get(docid)


class MockBackend(Backend):
    """Fixed document set with canned or term-count rankings, plus call counters.

    ``canned`` maps a raw query string to an explicit [(docid, score), ...]
    ranking; queries not in ``canned`` are ranked by total occurrence count of
    the query's tokens, ties by ascending docid.
    """

    def __init__(self, documents: dict[str, str], canned: dict[str, list] | None = None):
        self.documents = dict(documents)
        self.canned = dict(canned or {})
        self.search_calls = 0
        self.document_calls = 0

    @property
    def total_calls(self) -> int:
        return self.search_calls + self.document_calls

    def search(self, query: str, limit: int) -> list[SearchHit]:
        self.search_calls += 1
        if query in self.canned:
            pairs = [(str(d), float(s)) for d, s in self.canned[query]]
        else:
            terms = bm25.tokenize(query)
            pairs = []
            for docid, text in self.documents.items():
                tokens = bm25.tokenize(text)
                count = sum(tokens.count(t) for t in set(terms))
                if count > 0:
                    pairs.append((docid, float(count)))
            pairs.sort(key=lambda p: (-p[1], p[0]))
        hits = []
        for docid, score in pairs[:limit]:
            if docid not in self.documents:
                raise BackendError(f"canned ranking names unknown docid {docid!r}")
            hits.append(SearchHit(docid=docid, score=score, text=self.documents[docid]))
        return hits

    def fetch_document(self, docid: str) -> Document:
        self.document_calls += 1
        if docid not in self.documents:
            raise UnknownDocidError(f"unknown docid: {docid!r}")
        return Document(docid=docid, text=self.documents[docid])


class HttpJsonBackend(Backend):
    """Client for a remote search service.

    Wire contract: ``POST {base}/search`` with ``{"query", "limit"}`` returns
    ``{"hits": [{"docid", "score"}, ...]}``; ``GET {base}/document/{docid}``
    returns ``{"docid", "text"}``. Hit bodies are fetched eagerly at search
    time so later browsing of the cached ranking never touches the backend.
    """

    def __init__(self, base_url: str, timeout: float = 30.0, session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._http = session or requests.Session()

    def search(self, query: str, limit: int) -> list[SearchHit]:
        try:
            resp = self._http.post(
                f"{self.base_url}/search",
                json={"query": query, "limit": limit},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise BackendError(f"search request failed: {exc}") from exc
        if resp.status_code != 200:
            raise BackendError(f"search returned HTTP {resp.status_code}")
        try:
            payload = resp.json()
            raw_hits = payload["hits"]
        except (ValueError, KeyError) as exc:
            raise BackendError(f"malformed search response: {exc}") from exc
        hits = []
        for item in raw_hits[:limit]:
            docid = str(item["docid"])
            doc = self.fetch_document(docid)
            hits.append(SearchHit(docid=docid, score=float(item["score"]), text=doc.text))
        return hits

    def fetch_document(self, docid: str) -> Document:
        quoted = urllib.parse.quote(docid, safe="")
        try:
            resp = self._http.get(f"{self.base_url}/document/{quoted}", timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendError(f"document request failed: {exc}") from exc
        if resp.status_code == 404:
            raise UnknownDocidError(f"unknown docid: {docid!r}")
        if resp.status_code != 200:
            raise BackendError(f"document returned HTTP {resp.status_code}")
        try:
            payload = resp.json()
            return Document(docid=str(payload["docid"]), text=payload["text"])
        except (ValueError, KeyError) as exc:
            raise BackendError(f"malformed document response: {exc}") from exc


@dataclass(frozen=True)
class ControllerLimits:
    visible_lines: int = DEFAULT_VISIBLE_LINES
    visible_bytes: int = DEFAULT_VISIBLE_BYTES
    cache_entries: int = DEFAULT_CACHE_ENTRIES


@dataclass(frozen=True)
class ControllerConfig:
    backend: dict = field(default_factory=lambda: {"kind": "embedded"})
    depth: int = DEFAULT_DEPTH
    bm25: bm25.Bm25Params = bm25.LONG_DOC_PARAMS
    limits: ControllerLimits = ControllerLimits()


def parse_config(payload: dict) -> ControllerConfig:
    """Validate a configuration dict into a ControllerConfig."""
    if not isinstance(payload, dict):
        raise ConfigError("configuration must be a JSON object")
    backend = payload.get("backend", {"kind": "embedded"})
    if not isinstance(backend, dict) or "kind" not in backend:
        raise ConfigError("backend config must be an object with a 'kind'")
    kind = backend["kind"]
    if kind == "anserini-bm25":
        transport = backend.get("transport", {})
        if transport.get("kind") != "tcp":
            raise ConfigError(
                "anserini-bm25 backends are supported via tcp transport only "
                "(mapped onto the http-json client)"
            )
        backend = {
            "kind": "http-json",
            "endpoints": {"base": f"http://{transport['host']}:{transport['port']}"},
        }
        kind = "http-json"
    if kind not in ("embedded", "http-json", "mock"):
        raise ConfigError(f"unknown backend kind {kind!r}")
    depth = int(payload.get("depth", DEFAULT_DEPTH))
    if depth < 1:
        raise ConfigError(f"depth must be >= 1, got {depth}")
    raw_bm25 = payload.get("bm25", {})
    try:
        params = bm25.Bm25Params(
            k1=float(raw_bm25.get("k1", bm25.LONG_DOC_PARAMS.k1)),
            b=float(raw_bm25.get("b", bm25.LONG_DOC_PARAMS.b)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    raw_limits = payload.get("limits", {})
    limits = ControllerLimits(
        visible_lines=int(raw_limits.get("visible_lines", DEFAULT_VISIBLE_LINES)),
        visible_bytes=int(raw_limits.get("visible_bytes", DEFAULT_VISIBLE_BYTES)),
        cache_entries=int(raw_limits.get("cache_entries", DEFAULT_CACHE_ENTRIES)),
    )
    if limits.visible_lines < 1 or limits.visible_bytes < 1 or limits.cache_entries < 1:
        raise ConfigError("limits must all be >= 1")
    return ControllerConfig(backend=backend, depth=depth, bm25=params, limits=limits)


def config_from_env(environ=os.environ) -> ControllerConfig:
    """Parse the required PI_SEARCH_EXTENSION_CONFIG environment variable."""
    raw = environ.get(CONFIG_ENV_VAR)
    if raw is None:
        raise ConfigError(f"{CONFIG_ENV_VAR} is required and was not set")
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{CONFIG_ENV_VAR} is not valid JSON: {exc.msg}") from exc
    return parse_config(payload)


def build_backend(
    config: ControllerConfig,
    corpus: CorpusHandle | None = None,
    index: bm25.Index | None = None,
) -> Backend:
    """Instantiate the backend named by ``config``.

    For the embedded kind, a corpus handle (and optionally a prebuilt index)
    may be passed directly; otherwise they are loaded from the ``corpus`` /
    ``index`` paths in the backend block.
    """
    spec = config.backend
    kind = spec["kind"]
    if kind == "embedded":
        if corpus is None:
            path = spec.get("corpus")
            if not path:
                raise ConfigError("embedded backend needs a corpus handle or a 'corpus' path")
            corpus = ingest_corpus(path)
        if index is None:
            index_path = spec.get("index")
            index = bm25.load_index(index_path) if index_path else bm25.build_index(corpus)
        return EmbeddedBackend(index=index, corpus=corpus, params=config.bm25)
    if kind == "mock":
        documents = spec.get("documents")
        if not isinstance(documents, dict):
            raise ConfigError("mock backend needs a 'documents' object")
        return MockBackend(documents=documents, canned=spec.get("canned"))
    if kind == "http-json":
        endpoints = spec.get("endpoints", {})
        base = endpoints.get("base")
        if not base:
            raise ConfigError("http-json backend needs endpoints.base")
        return HttpJsonBackend(base_url=base, timeout=float(spec.get("timeout", 30.0)))
    raise ConfigError(f"unknown backend kind {kind!r}")
