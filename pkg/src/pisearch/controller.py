"""Three-tool retrieval controller: session cache, pagination, excerpts, spill files.

The controller is the isolation point between the agent and the engine. A
search caches its full ranking (with per-hit excerpts) under a session-local
search_id and shows only the top 5 excerpts; read_search_results pages through
the cached ranking without touching the backend; read_document streams one
document in line chunks. Oversized tool output is truncated for the agent and
spilled in full to a per-session temp directory that is removed on shutdown.
"""

from __future__ import annotations

import shutil
import tempfile
import threading
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

from .backends import Backend, ControllerConfig
from .bm25 import Hit, Ranking
from .corpus import chunk_lines
from .errors import (
    RankRangeError,
    SpillError,
    StaleSearchIdError,
    ToolArgumentError,
    ToolsBlockedError,
)

EXCERPT_CHARS = 512
EXCERPT_MARKER = "..."
SEARCH_PAGE_SIZE = 5
BROWSE_DEFAULT_OFFSET = 6
BROWSE_DEFAULT_LIMIT = 10
READ_DEFAULT_OFFSET = 1
READ_DEFAULT_LIMIT = 200

TOOL_SEARCH = "search"
TOOL_READ_SEARCH_RESULTS = "read_search_results"
TOOL_READ_DOCUMENT = "read_document"
TOOL_NAMES = (TOOL_SEARCH, TOOL_READ_SEARCH_RESULTS, TOOL_READ_DOCUMENT)


def make_excerpt(text: str, max_chars: int = EXCERPT_CHARS) -> str:
    """First ``max_chars`` characters of whitespace-normalized text.

    A marker is appended iff the normalized text was longer than the limit.
    Deterministic: same input, same excerpt.
    """
    normalized = " ".join(text.split())
    if len(normalized) <= max_chars:
        return normalized
    return normalized[:max_chars] + EXCERPT_MARKER


@dataclass(frozen=True)
class CachedSearch:
    """One cached search: immutable ranking plus precomputed excerpts."""

    search_id: str
    query: str
    query_mode: str
    ranking: Ranking
    excerpts: tuple[str, ...]

    @property
    def hit_count(self) -> int:
        return len(self.ranking.hits)


@dataclass(frozen=True)
class ToolResult:
    """What a tool returned to the agent.

    ``displayed_docids`` lists exactly the docids whose excerpts or body
    appear in ``formatted_text``; ``metadata['truncated']`` is true iff
    ``metadata['spill_path']`` is set.
    """

    kind: str
    formatted_text: str
    displayed_docids: tuple[str, ...]
    metadata: dict

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "formatted_text": self.formatted_text,
            "displayed_docids": list(self.displayed_docids),
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ToolResult":
        return cls(
            kind=payload["kind"],
            formatted_text=payload["formatted_text"],
            displayed_docids=tuple(payload["displayed_docids"]),
            metadata=dict(payload["metadata"]),
        )


class SearchSession:
    """Session-local search cache and spill bookkeeping for one agent run.

    At most ``limits.cache_entries`` searches stay cached; inserting past the
    capacity evicts the oldest entry. search_ids ("s1", "s2", ...) are never
    reused within a session. The blocked flag is the only state shared with
    the steering timer and flips false -> true exactly once.
    """

    def __init__(
        self,
        backend: Backend,
        config: ControllerConfig | None = None,
        session_id: str = "session",
        spill_root: str | Path | None = None,
        spill_path_base: str | Path | None = None,
        clock=None,
    ):
        self.backend = backend
        self.config = config or ControllerConfig()
        self.session_id = session_id
        self._entries: OrderedDict[str, CachedSearch] = OrderedDict()
        self._next_id = 1
        self._blocked = threading.Event()
        self._spill_root = Path(spill_root) if spill_root is not None else None
        self._spill_path_base = Path(spill_path_base) if spill_path_base is not None else None
        self._spill_dir: Path | None = None
        self._spill_count = 0
        self._clock = clock
        self._closed = False

    # -- lifecycle ---------------------------------------------------------

    def close(self) -> None:
        """Remove the spill directory; the session is unusable afterwards."""
        if self._spill_dir is not None and self._spill_dir.exists():
            shutil.rmtree(self._spill_dir, ignore_errors=True)
        self._spill_dir = None
        self._closed = True

    def __enter__(self) -> "SearchSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- steering ----------------------------------------------------------

    @property
    def tools_blocked(self) -> bool:
        return self._blocked.is_set()

    def block_tools(self) -> None:
        """Block all three tools; called once by the steering timer."""
        self._blocked.set()

    # -- cache introspection -------------------------------------------------

    @property
    def cached_search_ids(self) -> list[str]:
        return list(self._entries.keys())

    def cached(self, search_id: str) -> CachedSearch | None:
        return self._entries.get(search_id)

    @property
    def spill_dir(self) -> Path | None:
        return self._spill_dir

    # -- internals -----------------------------------------------------------

    def _now_ms(self) -> float:
        return self._clock.now() * 1000.0 if self._clock is not None else 0.0

    def _ensure_spill_dir(self) -> Path:
        if self._spill_dir is None:
            if self._spill_root is not None:
                self._spill_root.mkdir(parents=True, exist_ok=True)
                self._spill_dir = self._spill_root / f"pi-search-{self.session_id}"
                self._spill_dir.mkdir(exist_ok=True)
            else:
                self._spill_dir = Path(tempfile.mkdtemp(prefix=f"pi-search-{self.session_id}-"))
        return self._spill_dir

    def _spill_name(self) -> str:
        self._spill_count += 1
        return f"spill-{self._spill_count:04d}.txt"


def _require_usable(session: SearchSession, reason: str) -> None:
    if session.tools_blocked:
        raise ToolsBlockedError(
            "tools are blocked: the time budget steer has fired; submit your final answer"
        )
    if not isinstance(reason, str) or not reason.strip():
        raise ToolArgumentError("reason must be supplied as a nonempty string")


def spill_if_needed(session: SearchSession, formatted_text: str):
    """Enforce visible-output limits on a formatted tool result.

    Returns ``(visible_text, spill_path)``. When the text exceeds the
    configured line or byte limits, the full content is written under the
    session spill directory and the visible text is the truncated head plus
    a notice naming the spill file; otherwise the text passes through with
    ``spill_path=None``.
    """
    limits = session.config.limits
    lines = formatted_text.split("\n")
    over_lines = len(lines) > limits.visible_lines
    over_bytes = len(formatted_text.encode("utf-8")) > limits.visible_bytes
    if not (over_lines or over_bytes):
        return formatted_text, None

    spill_dir = session._ensure_spill_dir()
    spill_path = spill_dir / session._spill_name()
    try:
        spill_path.write_text(formatted_text, encoding="utf-8")
    except OSError as exc:
        raise SpillError(f"could not write spill file {spill_path}: {exc}") from exc

    visible_lines = lines[: limits.visible_lines]
    visible = "\n".join(visible_lines)
    encoded = visible.encode("utf-8")
    if len(encoded) > limits.visible_bytes:
        visible = encoded[: limits.visible_bytes].decode("utf-8", errors="ignore")

    if session._spill_path_base is not None:
        try:
            shown_path = str(spill_path.relative_to(session._spill_path_base))
        except ValueError:
            shown_path = str(spill_path)
    else:
        shown_path = str(spill_path)
    visible += f"\n[output truncated: full content saved to {shown_path}]"
    return visible, shown_path


def _format_ranking_page(entry: CachedSearch, start: int, end: int) -> tuple[str, list[tuple[str, str]]]:
    """Render ranks [start, end] of a cached ranking.

    Returns the page text and, for each displayed hit, (docid, header line)
    so truncation can recompute what is actually visible.
    """
    lines = [
        f"search_id: {entry.search_id}",
        f"query: {entry.query}",
        f"hits: {entry.hit_count}",
    ]
    headers: list[tuple[str, str]] = []
    if entry.hit_count == 0:
        lines.append("no results")
    else:
        lines.append(f"ranks {start}-{end}:")
        for i in range(start - 1, end):
            hit: Hit = entry.ranking.hits[i]
            header = f"[{hit.rank}] {hit.docid} (score {hit.score:.4f})"
            headers.append((hit.docid, header))
            lines.append(header)
            lines.append(f"    {entry.excerpts[i]}")
        if end < entry.hit_count:
            lines.append(f"next_offset: {end + 1}")
        else:
            lines.append("end of results")
    return "\n".join(lines), headers


def _visible_docids(visible_text: str, headers: list[tuple[str, str]]) -> tuple[str, ...]:
    """Docids whose complete header line survived truncation, in display order."""
    visible_lines = set(visible_text.split("\n"))
    return tuple(docid for docid, header in headers if header in visible_lines)


def tool_search(session: SearchSession, reason: str, query: str) -> ToolResult:
    """Run a backend query, cache the full ranking, and show the top 5 excerpts."""
    _require_usable(session, reason)
    if not isinstance(query, str) or not query.strip():
        raise ToolArgumentError("query must be a nonempty string")
    t0 = session._now_ms()
    hits = session.backend.search(query, limit=session.config.depth)

    search_id = f"s{session._next_id}"
    session._next_id += 1
    ranking = Ranking(
        query=query,
        params=session.config.bm25,
        hits=tuple(Hit(rank=i + 1, docid=h.docid, score=h.score) for i, h in enumerate(hits)),
    )
    entry = CachedSearch(
        search_id=search_id,
        query=query,
        query_mode="plain",
        ranking=ranking,
        excerpts=tuple(make_excerpt(h.text) for h in hits),
    )
    session._entries[search_id] = entry
    while len(session._entries) > session.config.limits.cache_entries:
        session._entries.popitem(last=False)

    end = min(SEARCH_PAGE_SIZE, entry.hit_count)
    page, headers = _format_ranking_page(entry, 1, end)
    visible, spill_path = spill_if_needed(session, page)
    displayed = _visible_docids(visible, headers)
    elapsed = session._now_ms() - t0
    return ToolResult(
        kind=TOOL_SEARCH,
        formatted_text=visible,
        displayed_docids=displayed,
        metadata={
            "search_id": search_id,
            "query": query,
            "query_mode": "plain",
            "hit_count": entry.hit_count,
            "cached_docids": [h.docid for h in hits],
            "next_offset": end + 1 if end < entry.hit_count else None,
            "truncated": spill_path is not None,
            "spill_path": spill_path,
            "elapsed_ms": elapsed,
        },
    )


def tool_read_search_results(
    session: SearchSession,
    reason: str,
    search_id: str,
    offset: int = BROWSE_DEFAULT_OFFSET,
    limit: int = BROWSE_DEFAULT_LIMIT,
) -> ToolResult:
    """Page through a cached ranking by rank; never re-queries the backend."""
    _require_usable(session, reason)
    if offset < 1:
        raise ToolArgumentError("offset must be >= 1")
    if limit < 1:
        raise ToolArgumentError("limit must be >= 1")
    entry = session.cached(search_id)
    if entry is None:
        raise StaleSearchIdError(
            f"search_id {search_id!r} is not cached (evicted or never issued); "
            "run a fresh search"
        )
    if offset > entry.hit_count:
        raise RankRangeError(
            f"rank offset {offset} exceeds hit count {entry.hit_count}",
            hit_count=entry.hit_count,
        )
    t0 = session._now_ms()
    end = min(offset + limit - 1, entry.hit_count)
    page, headers = _format_ranking_page(entry, offset, end)
    visible, spill_path = spill_if_needed(session, page)
    displayed = _visible_docids(visible, headers)
    elapsed = session._now_ms() - t0
    return ToolResult(
        kind=TOOL_READ_SEARCH_RESULTS,
        formatted_text=visible,
        displayed_docids=displayed,
        metadata={
            "search_id": search_id,
            "hit_count": entry.hit_count,
            "start_rank": offset,
            "end_rank": end,
            "next_offset": end + 1 if end < entry.hit_count else None,
            "truncated": spill_path is not None,
            "spill_path": spill_path,
            "elapsed_ms": elapsed,
        },
    )


def tool_read_document(
    session: SearchSession,
    reason: str,
    docid: str,
    offset: int = READ_DEFAULT_OFFSET,
    limit: int = READ_DEFAULT_LIMIT,
) -> ToolResult:
    """Read one backend document in line-based chunks."""
    _require_usable(session, reason)
    t0 = session._now_ms()
    doc = session.backend.fetch_document(docid)
    chunk = chunk_lines(doc, offset=offset, limit=limit)
    lines = [
        f"docid: {docid}",
        f"lines {chunk.start_line}-{chunk.end_line} of {chunk.total_lines}:",
        chunk.content,
    ]
    if chunk.next_offset is not None:
        lines.append(f"next_offset: {chunk.next_offset}")
    else:
        lines.append("end of document")
    page = "\n".join(lines)
    visible, spill_path = spill_if_needed(session, page)
    elapsed = session._now_ms() - t0
    return ToolResult(
        kind=TOOL_READ_DOCUMENT,
        formatted_text=visible,
        displayed_docids=(docid,),
        metadata={
            "docid": docid,
            "start_line": chunk.start_line,
            "end_line": chunk.end_line,
            "total_lines": chunk.total_lines,
            "next_offset": chunk.next_offset,
            "truncated": spill_path is not None,
            "spill_path": spill_path,
            "elapsed_ms": elapsed,
        },
    )
