"""Evidence-tier derivation and per-query run artifacts.

Every run records four document sets of decreasing breadth:

- surfaced: every docid cached by any search call;
- previewed: docids whose excerpts were shown (search's initial page or a
  read_search_results page);
- opened: docids successfully read via read_document;
- cited: final-answer citations that name a real corpus document.

Artifacts are JSON files with sorted keys and write-then-rename semantics so
reruns are byte-comparable; tiers can always be recomputed from the stored
event log.
"""

from __future__ import annotations

import hashlib
import json
import os
import urllib.parse
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .agent import (
    ActionEvent,
    ErrorInfo,
    FinalAnswer,
    FinalResponse,
    ObservationEvent,
    ReasoningEvent,
    SteerEvent,
    ToolCall,
    Trajectory,
)
from .controller import (
    TOOL_READ_DOCUMENT,
    TOOL_READ_SEARCH_RESULTS,
    TOOL_SEARCH,
    ToolResult,
)
from .errors import PiSearchError
from .llm import TokenUsage

ARTIFACT_FORMAT = "pisearch-run-artifact"
ARTIFACT_VERSION = 1

PER_QUERY_DIR = "per-query"
STDERR_DIR = "stderr"
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class DocumentTiers:
    surfaced: frozenset[str]
    previewed: frozenset[str]
    opened: frozenset[str]
    cited: frozenset[str]

    def to_dict(self) -> dict:
        return {
            "surfaced": sorted(self.surfaced),
            "previewed": sorted(self.previewed),
            "opened": sorted(self.opened),
            "cited": sorted(self.cited),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DocumentTiers":
        return cls(
            surfaced=frozenset(payload["surfaced"]),
            previewed=frozenset(payload["previewed"]),
            opened=frozenset(payload["opened"]),
            cited=frozenset(payload["cited"]),
        )


def derive_tiers(events, final_response: FinalResponse | None, corpus_docids) -> DocumentTiers:
    """Pure function of the event log (plus corpus membership for citations).

    Docids read via read_document without ever appearing in a ranking count
    as opened but are not added to surfaced. With no final response the cited
    tier is empty.
    """
    surfaced: set[str] = set()
    previewed: set[str] = set()
    opened: set[str] = set()
    for ev in events:
        if not isinstance(ev, ObservationEvent) or not ev.ok:
            continue
        result = ev.result
        if result.kind == TOOL_SEARCH:
            surfaced.update(result.metadata["cached_docids"])
            previewed.update(result.displayed_docids)
        elif result.kind == TOOL_READ_SEARCH_RESULTS:
            previewed.update(result.displayed_docids)
        elif result.kind == TOOL_READ_DOCUMENT:
            opened.update(result.displayed_docids)
    cited: set[str] = set()
    if final_response is not None:
        membership = set(corpus_docids)
        cited = {docid for docid in final_response.cited_docids if docid in membership}
    return DocumentTiers(
        surfaced=frozenset(surfaced),
        previewed=frozenset(previewed),
        opened=frozenset(opened),
        cited=frozenset(cited),
    )


# -- event (de)serialization ---------------------------------------------------


def event_to_dict(event) -> dict:
    if isinstance(event, ReasoningEvent):
        return {"type": "reasoning", "t": event.t, "text": event.text}
    if isinstance(event, ActionEvent):
        if event.is_tool_call:
            action = {
                "kind": "tool_call",
                "tool": event.tool_call.tool,
                "arguments": dict(event.tool_call.arguments),
            }
        else:
            action = {"kind": "final_answer", "text": event.final_answer.text}
        return {"type": "action", "t": event.t, "action": action}
    if isinstance(event, ObservationEvent):
        payload = {"type": "observation", "t": event.t, "ok": event.ok}
        if event.ok:
            payload["result"] = event.result.to_dict()
        else:
            payload["error"] = {"error_type": event.error.error_type, "message": event.error.message}
        return payload
    if isinstance(event, SteerEvent):
        return {"type": "steer", "t": event.t, "text": event.text}
    raise PiSearchError(f"unknown event type {type(event).__name__}")


def event_from_dict(payload: dict):
    kind = payload["type"]
    if kind == "reasoning":
        return ReasoningEvent(t=payload["t"], text=payload["text"])
    if kind == "action":
        action = payload["action"]
        if action["kind"] == "tool_call":
            return ActionEvent(
                t=payload["t"],
                tool_call=ToolCall(tool=action["tool"], arguments=dict(action["arguments"])),
            )
        return ActionEvent(t=payload["t"], final_answer=FinalAnswer(text=action["text"]))
    if kind == "observation":
        if payload["ok"]:
            return ObservationEvent(t=payload["t"], result=ToolResult.from_dict(payload["result"]))
        err = payload["error"]
        return ObservationEvent(
            t=payload["t"],
            error=ErrorInfo(error_type=err["error_type"], message=err["message"]),
        )
    if kind == "steer":
        return SteerEvent(t=payload["t"], text=payload["text"])
    raise PiSearchError(f"unknown event type {kind!r}")


def _rfc3339(epoch: float) -> str:
    return datetime.fromtimestamp(epoch, tz=timezone.utc).isoformat().replace("+00:00", "Z")


def config_fingerprint(config: dict) -> str:
    """Stable hash over the run's tunables."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class RunArtifact:
    """Everything recorded for one query run.

    ``config`` carries every tunable (bm25 params, depth, budget, policy,
    model) so the fingerprint uniquely identifies the configuration.
    """

    query_id: str
    question: str
    termination: str
    started_epoch: float
    finished_epoch: float
    events: list
    tiers: DocumentTiers
    config: dict
    final_response: FinalResponse | None = None
    steer_time: float | None = None
    answer_error: ErrorInfo | None = None
    usage: list = field(default_factory=list)
    usage_complete: bool = True
    budget_seconds: float | None = None
    steer_at_ms: int | None = None

    def tool_call_counts(self) -> dict[str, int]:
        counts = {"search": 0, "read_search_results": 0, "read_document": 0}
        for ev in self.events:
            if isinstance(ev, ActionEvent) and ev.is_tool_call:
                if ev.tool_call.tool in counts:
                    counts[ev.tool_call.tool] += 1
        counts["total"] = sum(counts.values())
        return counts

    def to_dict(self) -> dict:
        final = None
        if self.final_response is not None:
            final = {
                "explanation": self.final_response.explanation,
                "exact_answer": self.final_response.exact_answer,
                "confidence": self.final_response.confidence,
                "cited_docids": sorted(self.final_response.cited_docids),
                "raw": self.final_response.raw,
            }
        return {
            "format": ARTIFACT_FORMAT,
            "version": ARTIFACT_VERSION,
            "query_id": self.query_id,
            "question": self.question,
            "termination": self.termination,
            "started_at": _rfc3339(self.started_epoch),
            "started_epoch": self.started_epoch,
            "finished_at": _rfc3339(self.finished_epoch),
            "finished_epoch": self.finished_epoch,
            "budget_seconds": self.budget_seconds,
            "steer_at_ms": self.steer_at_ms,
            "steer_time": self.steer_time,
            "events": [event_to_dict(ev) for ev in self.events],
            "tiers": self.tiers.to_dict(),
            "final_response": final,
            "answer_error": (
                {"error_type": self.answer_error.error_type, "message": self.answer_error.message}
                if self.answer_error is not None
                else None
            ),
            "usage": [row.to_dict() for row in self.usage],
            "usage_complete": self.usage_complete,
            "config": self.config,
            "config_fingerprint": config_fingerprint(self.config),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RunArtifact":
        if payload.get("format") != ARTIFACT_FORMAT:
            raise PiSearchError("not a run artifact")
        final = None
        raw_final = payload.get("final_response")
        if raw_final is not None:
            final = FinalResponse(
                explanation=raw_final["explanation"],
                exact_answer=raw_final["exact_answer"],
                confidence=raw_final["confidence"],
                cited_docids=frozenset(raw_final["cited_docids"]),
                raw=raw_final["raw"],
            )
        raw_error = payload.get("answer_error")
        return cls(
            query_id=payload["query_id"],
            question=payload["question"],
            termination=payload["termination"],
            started_epoch=payload["started_epoch"],
            finished_epoch=payload["finished_epoch"],
            events=[event_from_dict(ev) for ev in payload["events"]],
            tiers=DocumentTiers.from_dict(payload["tiers"]),
            config=payload["config"],
            final_response=final,
            steer_time=payload.get("steer_time"),
            answer_error=(
                ErrorInfo(error_type=raw_error["error_type"], message=raw_error["message"])
                if raw_error
                else None
            ),
            usage=[TokenUsage.from_dict(row) for row in payload.get("usage", [])],
            usage_complete=payload.get("usage_complete", True),
            budget_seconds=payload.get("budget_seconds"),
            steer_at_ms=payload.get("steer_at_ms"),
        )


def artifact_from_run(
    trajectory: Trajectory,
    final_response: FinalResponse | None,
    tiers: DocumentTiers,
    config: dict,
    started_epoch: float,
    finished_epoch: float,
    usage=(),
    usage_complete: bool = True,
    budget=None,
) -> RunArtifact:
    return RunArtifact(
        query_id=trajectory.query_id,
        question=trajectory.question,
        termination=trajectory.termination or "timed_out",
        started_epoch=started_epoch,
        finished_epoch=finished_epoch,
        events=list(trajectory.events),
        tiers=tiers,
        config=config,
        final_response=final_response,
        steer_time=trajectory.steer_time,
        answer_error=trajectory.answer_error,
        usage=list(usage),
        usage_complete=usage_complete,
        budget_seconds=budget.timeout_seconds if budget is not None else None,
        steer_at_ms=budget.steer_at_ms if budget is not None else None,
    )


def serialize_artifact(artifact: RunArtifact) -> str:
    return json.dumps(artifact.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def parse_artifact(text: str) -> RunArtifact:
    return RunArtifact.from_dict(json.loads(text))


def _safe_filename(name: str) -> str:
    return urllib.parse.quote(name, safe="._-")


def write_artifact(artifact: RunArtifact, out_dir: str | Path) -> Path:
    """Write one per-query artifact atomically (write-then-rename)."""
    out_dir = Path(out_dir)
    per_query = out_dir / PER_QUERY_DIR
    per_query.mkdir(parents=True, exist_ok=True)
    target = per_query / f"{_safe_filename(artifact.query_id)}.json"
    tmp = target.with_suffix(".json.tmp")
    tmp.write_text(serialize_artifact(artifact), encoding="utf-8")
    os.replace(tmp, target)
    return target


def read_artifact(path: str | Path) -> RunArtifact:
    return parse_artifact(Path(path).read_text(encoding="utf-8"))


def write_manifest(
    run_dir: str | Path,
    run_id: str,
    config: dict,
    query_ids,
    incomplete: bool = False,
) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "run_id": run_id,
        "config": config,
        "config_fingerprint": config_fingerprint(config),
        "query_ids": sorted(query_ids),
        "artifact_count": len(list(query_ids)),
        "incomplete": incomplete,
    }
    target = run_dir / MANIFEST_NAME
    tmp = target.with_suffix(".json.tmp")
    tmp.write_text(
        json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    os.replace(tmp, target)
    return target


def read_manifest(run_dir: str | Path) -> dict:
    return json.loads((Path(run_dir) / MANIFEST_NAME).read_text(encoding="utf-8"))


def load_run_artifacts(run_dir: str | Path) -> list[RunArtifact]:
    """All per-query artifacts of a run, sorted by query_id."""
    per_query = Path(run_dir) / PER_QUERY_DIR
    artifacts = [read_artifact(p) for p in sorted(per_query.glob("*.json"))]
    return sorted(artifacts, key=lambda a: a.query_id)
