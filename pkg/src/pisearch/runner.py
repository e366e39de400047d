"""Parallel benchmark runner: one session per query, artifacts plus manifest.

Scripted runs use a simulated clock per query so reruns with the same config
are byte-identical; LLM runs use the wall clock. Timed-out queries are data,
not failures: the run exits cleanly as long as every query produced an
artifact.
"""

from __future__ import annotations

import threading
import traceback
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

from . import bm25
from .agent import TimeBudget, run_query
from .backends import Backend, ControllerConfig, ControllerLimits, build_backend
from .clock import SimulatedClock, SystemClock
from .controller import SearchSession
from .corpus import CorpusHandle, ingest_corpus, load_ground_truth
from .errors import ConfigError
from .llm import client_from_spec
from .policies import LlmPolicy, ScriptBook
from .trajectory import (
    STDERR_DIR,
    artifact_from_run,
    derive_tiers,
    write_artifact,
    write_manifest,
)

DEFAULT_BUDGET_SECONDS = 300.0
DEFAULT_DEPTH = 1000
DEFAULT_PARALLELISM = 4


@dataclass
class RunConfig:
    """Everything a `run` needs; exactly one termination mode is active."""

    corpus_path: str
    ground_truth_path: str
    out_dir: str
    policy_spec: str  # "scripted:<file>" or "llm:<model>"
    run_id: str = "run"
    budget_seconds: float | None = DEFAULT_BUDGET_SECONDS
    max_iterations: int | None = None
    depth: int = DEFAULT_DEPTH
    k1: float = bm25.LONG_DOC_PARAMS.k1
    b: float = bm25.LONG_DOC_PARAMS.b
    parallelism: int = DEFAULT_PARALLELISM
    index_path: str | None = None
    backend: dict = field(default_factory=lambda: {"kind": "embedded"})
    endpoint: str | None = None
    api_key_env: str | None = None
    limits: ControllerLimits = field(default_factory=ControllerLimits)
    query_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        if (self.budget_seconds is None) == (self.max_iterations is None):
            raise ConfigError(
                "exactly one termination mode must be active: "
                "a timeout budget or a max-iterations cap"
            )

    def params(self) -> bm25.Bm25Params:
        return bm25.Bm25Params(k1=self.k1, b=self.b)

    def fingerprint_payload(self) -> dict:
        """Every tunable of the run, for the manifest/artifact fingerprint."""
        return {
            "policy": self.policy_spec,
            "bm25": {"k1": self.k1, "b": self.b},
            "depth": self.depth,
            "budget_seconds": self.budget_seconds,
            "max_iterations": self.max_iterations,
            "backend_kind": self.backend.get("kind", "embedded"),
            "limits": {
                "visible_lines": self.limits.visible_lines,
                "visible_bytes": self.limits.visible_bytes,
                "cache_entries": self.limits.cache_entries,
            },
        }


@dataclass
class RunOutcome:
    run_dir: Path
    completed: list[str]
    failed: list[str]
    interrupted: bool = False

    @property
    def ok(self) -> bool:
        return not self.failed and not self.interrupted


def _build_policy_factory(config: RunConfig):
    """Returns (factory(query_id, clock) -> policy, scripted: bool)."""
    spec = config.policy_spec
    if spec.startswith("scripted:"):
        book = ScriptBook.from_file(spec.split(":", 1)[1])

        def factory(query_id: str, clock):
            return book.policy_for(query_id, clock=clock)

        return factory, True
    if spec.startswith("llm:"):
        client = client_from_spec(spec, config.endpoint, config.api_key_env)

        def factory(query_id: str, clock):
            return LlmPolicy(client)

        return factory, False
    raise ConfigError(f"unknown policy spec {spec!r} (expected scripted:<file> or llm:<model>)")


def _run_one(
    config: RunConfig,
    backend: Backend,
    corpus_docids,
    run_dir: Path,
    query,
    policy_factory,
    scripted: bool,
) -> None:
    clock = SimulatedClock() if scripted else SystemClock()
    policy = policy_factory(query.query_id, clock)
    budget = TimeBudget(config.budget_seconds) if config.budget_seconds is not None else None
    controller_config = ControllerConfig(
        backend=config.backend,
        depth=config.depth,
        bm25=config.params(),
        limits=config.limits,
    )
    session = SearchSession(
        backend,
        config=controller_config,
        session_id=query.query_id,
        spill_root=run_dir / "spill",
        spill_path_base=run_dir,
        clock=clock,
    )
    started = clock.now()
    try:
        trajectory, final = run_query(
            policy,
            session,
            query.query,
            budget=budget,
            clock=clock,
            query_id=query.query_id,
            max_iterations=config.max_iterations,
        )
        finished = clock.now()
        tiers = derive_tiers(trajectory.events, final, corpus_docids)
        artifact = artifact_from_run(
            trajectory,
            final,
            tiers,
            config=config.fingerprint_payload(),
            started_epoch=started,
            finished_epoch=finished,
            usage=list(getattr(policy, "usage_log", [])),
            usage_complete=bool(getattr(policy, "usage_complete", True)),
            budget=budget,
        )
        write_artifact(artifact, run_dir)
    finally:
        session.close()


def execute_run(config: RunConfig) -> RunOutcome:
    """Run every ground-truth query under bounded parallelism."""
    run_dir = Path(config.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    stderr_dir = run_dir / STDERR_DIR
    stderr_dir.mkdir(exist_ok=True)

    ground_truth = load_ground_truth(config.ground_truth_path)
    queries = list(ground_truth.values())
    if config.query_ids is not None:
        wanted = set(config.query_ids)
        queries = [q for q in queries if q.query_id in wanted]

    corpus: CorpusHandle | None = None
    index = None
    if config.backend.get("kind", "embedded") == "embedded":
        corpus = ingest_corpus(config.corpus_path)
        index = (
            bm25.load_index(config.index_path)
            if config.index_path
            else bm25.build_index(corpus)
        )
    controller_config = ControllerConfig(
        backend=config.backend,
        depth=config.depth,
        bm25=config.params(),
        limits=config.limits,
    )
    backend = build_backend(controller_config, corpus=corpus, index=index)
    corpus_docids = (
        set(corpus.docids()) if corpus is not None else set()
    )
    if not corpus_docids and hasattr(backend, "documents"):
        corpus_docids = set(backend.documents)

    policy_factory, scripted = _build_policy_factory(config)

    completed: list[str] = []
    failed: list[str] = []
    interrupted = False
    write_lock = threading.Lock()

    def handle(query) -> None:
        log_path = stderr_dir / f"{query.query_id}.log"
        try:
            _run_one(config, backend, corpus_docids, run_dir, query, policy_factory, scripted)
            log_path.write_text("", encoding="utf-8")
            with write_lock:
                completed.append(query.query_id)
        except Exception:
            log_path.write_text(traceback.format_exc(), encoding="utf-8")
            with write_lock:
                failed.append(query.query_id)

    try:
        with ThreadPoolExecutor(max_workers=max(1, config.parallelism)) as pool:
            futures = [pool.submit(handle, query) for query in queries]
            for future in as_completed(futures):
                future.result()
    except KeyboardInterrupt:
        interrupted = True

    # Sessions spill under run_dir/spill and clean themselves up; drop the
    # (now empty) parent so reruns byte-compare.
    spill_parent = run_dir / "spill"
    if spill_parent.exists() and not any(spill_parent.iterdir()):
        spill_parent.rmdir()

    write_manifest(
        run_dir,
        run_id=config.run_id,
        config=config.fingerprint_payload(),
        query_ids=sorted(completed),
        incomplete=interrupted or bool(failed),
    )
    if corpus is not None:
        corpus.close()
    return RunOutcome(
        run_dir=run_dir,
        completed=sorted(completed),
        failed=sorted(failed),
        interrupted=interrupted,
    )
