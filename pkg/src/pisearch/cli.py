"""Operator CLI: index, run, judge, eval, tune, sweep, report.

Setting precedence everywhere: CLI flag > PI_SEARCH_EXTENSION_CONFIG env var
> --config file > built-in default. Timed-out queries are recorded data, not
failures; `run` exits 0 as long as every query produced an artifact.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import bm25
from .backends import CONFIG_ENV_VAR, ControllerLimits
from .corpus import ingest_corpus, load_ground_truth
from .errors import ConfigError, PiSearchError
from .evaluation import (
    aggregate,
    format_metrics_table,
    metrics_csv_row,
    write_cost_accuracy_csv,
    write_metrics_csv,
    write_tool_calls_csv,
)
from .judge import JUDGE_TIMEOUT_SECONDS, JudgeOutcome, MockJudgeClient, LlmJudgeClient, judge
from .llm import LlmClient
from .pricing import default_pricing, load_pricing
from .runner import (
    DEFAULT_BUDGET_SECONDS,
    DEFAULT_DEPTH,
    DEFAULT_PARALLELISM,
    RunConfig,
    execute_run,
)
from .trajectory import STDERR_DIR, load_run_artifacts, read_manifest
from .tuning import (
    DEFAULT_B_GRID,
    DEFAULT_K1_GRID,
    depth_sweep,
    grid_search,
    grid_summary,
    write_depth_csv,
    write_grid_csv,
)

JUDGE_DIR = "judge"


def _load_layers(args) -> tuple[dict, dict]:
    """(env layer, file layer) for setting precedence."""
    env_layer: dict = {}
    raw_env = os.environ.get(CONFIG_ENV_VAR)
    if raw_env:
        try:
            env_layer = json.loads(raw_env)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{CONFIG_ENV_VAR} is not valid JSON: {exc.msg}") from exc
    file_layer: dict = {}
    config_path = getattr(args, "config", None)
    if config_path:
        file_layer = json.loads(Path(config_path).read_text(encoding="utf-8"))
    return env_layer, file_layer


def _setting(flag_value, env_layer: dict, file_layer: dict, path: tuple[str, ...], default):
    """Resolve one setting through flag > env > file > default."""
    if flag_value is not None:
        return flag_value
    for layer in (env_layer, file_layer):
        node = layer
        for key in path:
            if not isinstance(node, dict) or key not in node:
                node = None
                break
            node = node[key]
        if node is not None:
            return node
    return default


def _queries_and_qrels(ground_truth, relevance: str):
    queries = [(r.query_id, r.query) for r in ground_truth.values()]
    if relevance == "gold":
        qrels = {r.query_id: set(r.gold_docids) for r in ground_truth.values()}
    else:
        qrels = {r.query_id: set(r.evidence_docids) for r in ground_truth.values()}
    return queries, qrels


# -- subcommands ----------------------------------------------------------------


def cmd_index(args) -> int:
    corpus = ingest_corpus(args.corpus)
    index = bm25.build_index(corpus)
    bm25.save_index(index, args.out)
    print(f"indexed {index.doc_count} documents -> {args.out}")
    corpus.close()
    return 0


def cmd_run(args) -> int:
    env_layer, file_layer = _load_layers(args)
    budget = _setting(args.budget, env_layer, file_layer, ("budget_seconds",), DEFAULT_BUDGET_SECONDS)
    max_iterations = _setting(
        args.max_iterations, env_layer, file_layer, ("max_iterations",), None
    )
    if args.max_iterations is not None and args.budget is None:
        budget = None  # the flag switches the termination mode
    config = RunConfig(
        corpus_path=_setting(args.corpus, env_layer, file_layer, ("corpus",), None),
        ground_truth_path=_setting(
            args.ground_truth, env_layer, file_layer, ("ground_truth",), None
        ),
        out_dir=args.out,
        policy_spec=_setting(args.policy, env_layer, file_layer, ("policy",), None),
        run_id=args.run_id,
        budget_seconds=None if max_iterations is not None and args.budget is None else budget,
        max_iterations=max_iterations,
        depth=int(_setting(args.depth, env_layer, file_layer, ("depth",), DEFAULT_DEPTH)),
        k1=float(_setting(args.k1, env_layer, file_layer, ("bm25", "k1"), bm25.LONG_DOC_PARAMS.k1)),
        b=float(_setting(args.b, env_layer, file_layer, ("bm25", "b"), bm25.LONG_DOC_PARAMS.b)),
        parallelism=int(
            _setting(args.parallelism, env_layer, file_layer, ("parallelism",), DEFAULT_PARALLELISM)
        ),
        index_path=args.index,
        backend=_setting(None, env_layer, file_layer, ("backend",), {"kind": "embedded"}),
        endpoint=args.endpoint,
        api_key_env=args.api_key_env,
        limits=ControllerLimits(
            visible_lines=int(
                _setting(None, env_layer, file_layer, ("limits", "visible_lines"), 256)
            ),
            visible_bytes=int(
                _setting(None, env_layer, file_layer, ("limits", "visible_bytes"), 50 * 1024)
            ),
            cache_entries=int(
                _setting(None, env_layer, file_layer, ("limits", "cache_entries"), 32)
            ),
        ),
        query_ids=tuple(args.query_ids) if args.query_ids else None,
    )
    if not config.corpus_path or not config.ground_truth_path or not config.policy_spec:
        raise ConfigError("run needs --corpus, --ground-truth, and --policy")
    outcome = execute_run(config)
    print(f"run directory: {outcome.run_dir}")
    print(f"completed: {len(outcome.completed)} queries; failed: {len(outcome.failed)}")
    if outcome.failed:
        print(f"failed query_ids: {', '.join(outcome.failed)}", file=sys.stderr)
    return 0 if outcome.ok else 1


def _load_verdicts(run_dir: Path) -> dict[str, JudgeOutcome]:
    verdict_dir = run_dir / JUDGE_DIR
    verdicts = {}
    if verdict_dir.is_dir():
        for path in sorted(verdict_dir.glob("*_eval.json")):
            outcome = JudgeOutcome.from_dict(json.loads(path.read_text(encoding="utf-8")))
            verdicts[outcome.query_id] = outcome
    return verdicts


def cmd_judge(args) -> int:
    run_dir = Path(args.run)
    ground_truth = load_ground_truth(args.ground_truth)
    artifacts = load_run_artifacts(run_dir)
    if args.mock:
        client = MockJudgeClient()
    else:
        if not args.endpoint:
            raise ConfigError("judge needs --endpoint (or --mock)")
        client = LlmJudgeClient(
            LlmClient(
                endpoint=args.endpoint,
                model=args.judge_model,
                api_key_env=args.api_key_env or "LLM_API_KEY",
            )
        )
    judge_dir = run_dir / JUDGE_DIR
    raw_dir = judge_dir / "raw"
    raw_dir.mkdir(parents=True, exist_ok=True)
    stderr_dir = run_dir / STDERR_DIR
    stderr_dir.mkdir(exist_ok=True)

    judged = 0
    for artifact in artifacts:
        record = ground_truth.get(artifact.query_id)
        if record is None:
            raise ConfigError(f"no ground truth for query_id {artifact.query_id!r}")
        response_text = (
            artifact.final_response.raw if artifact.final_response is not None else ""
        )
        log_lines: list[str] = []
        outcome = judge(
            record.query,
            response_text,
            record.answer,
            client,
            query_id=artifact.query_id,
            timeout=args.timeout,
            log=log_lines.append,
        )
        (judge_dir / f"{artifact.query_id}_eval.json").write_text(
            json.dumps(outcome.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        (raw_dir / f"{artifact.query_id}.txt").write_text(outcome.raw_output, encoding="utf-8")
        if log_lines:
            with open(stderr_dir / f"{artifact.query_id}.log", "a", encoding="utf-8") as fh:
                fh.write("\n".join(log_lines) + "\n")
        judged += 1
    print(f"judged {judged} queries -> {judge_dir}")
    return 0


def _metrics_for_run(run_dir: Path, ground_truth, retrieval_only: bool, pricing):
    artifacts = load_run_artifacts(run_dir)
    verdicts = _load_verdicts(run_dir)
    if not verdicts and not retrieval_only:
        raise ConfigError(
            f"run {run_dir} has no judge verdicts; run `judge` first or pass --retrieval-only"
        )
    return aggregate(
        artifacts,
        ground_truth,
        verdicts=verdicts if verdicts else None,
        pricing=pricing,
    )


def cmd_eval(args) -> int:
    ground_truth = load_ground_truth(args.ground_truth)
    pricing = load_pricing(args.pricing) if args.pricing else default_pricing()
    run_dir = Path(args.run)
    metrics = _metrics_for_run(run_dir, ground_truth, args.retrieval_only, pricing)
    run_id = read_manifest(run_dir).get("run_id", run_dir.name)
    print(format_metrics_table([(run_id, metrics)]), end="")
    if args.out:
        write_metrics_csv([metrics_csv_row(run_id, metrics)], args.out)
        print(f"metrics csv -> {args.out}")
    return 0


def cmd_report(args) -> int:
    ground_truth = load_ground_truth(args.ground_truth)
    pricing = load_pricing(args.pricing) if args.pricing else default_pricing()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for raw in args.runs:
        run_dir = Path(raw)
        run_id = read_manifest(run_dir).get("run_id", run_dir.name)
        metrics = _metrics_for_run(run_dir, ground_truth, args.retrieval_only, pricing)
        rows.append((run_id, metrics))
    write_metrics_csv(
        [metrics_csv_row(run_id, metrics) for run_id, metrics in rows],
        out_dir / "metrics.csv",
    )
    write_cost_accuracy_csv(rows, out_dir / "cost_accuracy.csv")
    write_tool_calls_csv(rows, out_dir / "tool_calls.csv")
    print(format_metrics_table(rows), end="")
    print(f"report files -> {out_dir}")
    return 0


def cmd_tune(args) -> int:
    env_layer, file_layer = _load_layers(args)
    corpus = ingest_corpus(args.corpus)
    index = bm25.load_index(args.index) if args.index else bm25.build_index(corpus)
    ground_truth = load_ground_truth(args.ground_truth)
    queries, qrels = _queries_and_qrels(ground_truth, args.relevance)
    k1_grid = tuple(float(x) for x in args.k1_grid.split(",")) if args.k1_grid else DEFAULT_K1_GRID
    b_grid = tuple(float(x) for x in args.b_grid.split(",")) if args.b_grid else DEFAULT_B_GRID
    depth = int(_setting(args.depth, env_layer, file_layer, ("depth",), 20))
    result = grid_search(index, queries, qrels, k1_grid=k1_grid, b_grid=b_grid, depth=depth)
    write_grid_csv(result, args.out)
    print(grid_summary(result))
    print(f"grid csv -> {args.out}")
    corpus.close()
    return 0


def cmd_sweep(args) -> int:
    env_layer, file_layer = _load_layers(args)
    corpus = ingest_corpus(args.corpus)
    index = bm25.load_index(args.index) if args.index else bm25.build_index(corpus)
    ground_truth = load_ground_truth(args.ground_truth)
    queries, qrels = _queries_and_qrels(ground_truth, args.relevance)
    k_values = tuple(int(x) for x in args.k_values.split(","))
    k1 = float(_setting(args.k1, env_layer, file_layer, ("bm25", "k1"), bm25.LONG_DOC_PARAMS.k1))
    b = float(_setting(args.b, env_layer, file_layer, ("bm25", "b"), bm25.LONG_DOC_PARAMS.b))
    curve = depth_sweep(index, queries, qrels, k_values, bm25.Bm25Params(k1=k1, b=b))
    write_depth_csv(curve, args.out)
    for k, value in curve.as_pairs():
        print(f"recall@{k}: {value:.4f}")
    print(f"depth csv -> {args.out}")
    corpus.close()
    return 0


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pisearch",
        description="Search-agent benchmark harness over a tunable BM25 backend.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="build and persist a BM25 index")
    p_index.add_argument("--corpus", required=True, help="corpus JSONL path")
    p_index.add_argument("--out", required=True, help="output index file")
    p_index.set_defaults(func=cmd_index)

    p_run = sub.add_parser("run", help="run the agent over a query file")
    p_run.add_argument("--corpus", help="corpus JSONL path")
    p_run.add_argument("--ground-truth", help="ground-truth JSONL path")
    p_run.add_argument("--out", required=True, help="run output directory")
    p_run.add_argument("--policy", help="scripted:<file> or llm:<model>")
    p_run.add_argument("--run-id", default="run", help="run identifier for the manifest")
    p_run.add_argument("--budget", type=float, default=None, help="timeout seconds (default 300)")
    p_run.add_argument(
        "--max-iterations",
        type=int,
        default=None,
        help="cap reasoning+tool turns instead of steering",
    )
    p_run.add_argument("--depth", type=int, default=None, help="retrieval depth (default 1000)")
    p_run.add_argument("--k1", type=float, default=None, help="BM25 k1 (default 25)")
    p_run.add_argument("--b", type=float, default=None, help="BM25 b (default 1)")
    p_run.add_argument("--parallelism", type=int, default=None, help="concurrent queries")
    p_run.add_argument("--index", default=None, help="prebuilt index file")
    p_run.add_argument("--config", default=None, help="JSON config file")
    p_run.add_argument("--endpoint", default=None, help="chat-completions URL for llm policies")
    p_run.add_argument("--api-key-env", default=None, help="env var holding the API key")
    p_run.add_argument("--query-ids", nargs="*", default=None, help="subset of query ids")
    p_run.set_defaults(func=cmd_run)

    p_judge = sub.add_parser("judge", help="judge a run's final answers")
    p_judge.add_argument("--run", required=True, help="run directory")
    p_judge.add_argument("--ground-truth", required=True)
    p_judge.add_argument("--mock", action="store_true", help="use the offline equality judge")
    p_judge.add_argument("--judge-model", default="gpt-5.3-codex")
    p_judge.add_argument("--endpoint", default=None)
    p_judge.add_argument("--api-key-env", default=None)
    p_judge.add_argument("--timeout", type=float, default=JUDGE_TIMEOUT_SECONDS)
    p_judge.set_defaults(func=cmd_judge)

    p_eval = sub.add_parser("eval", help="metrics for one run")
    p_eval.add_argument("--run", required=True)
    p_eval.add_argument("--ground-truth", required=True)
    p_eval.add_argument("--retrieval-only", action="store_true")
    p_eval.add_argument("--pricing", default=None, help="pricing table JSON/CSV")
    p_eval.add_argument("--out", default=None, help="metrics CSV path")
    p_eval.set_defaults(func=cmd_eval)

    p_tune = sub.add_parser("tune", help="grid search over (k1, b)")
    p_tune.add_argument("--corpus", required=True)
    p_tune.add_argument("--ground-truth", required=True)
    p_tune.add_argument("--index", default=None)
    p_tune.add_argument("--k1-grid", default=None, help="comma-separated k1 values")
    p_tune.add_argument("--b-grid", default=None, help="comma-separated b values")
    p_tune.add_argument("--depth", type=int, default=None, help="recall depth (default 20)")
    p_tune.add_argument("--relevance", choices=["evidence", "gold"], default="evidence")
    p_tune.add_argument("--config", default=None)
    p_tune.add_argument("--out", required=True, help="grid CSV path")
    p_tune.set_defaults(func=cmd_tune)

    p_sweep = sub.add_parser("sweep", help="retrieval-depth recall sweep")
    p_sweep.add_argument("--corpus", required=True)
    p_sweep.add_argument("--ground-truth", required=True)
    p_sweep.add_argument("--index", default=None)
    p_sweep.add_argument("--k-values", required=True, help="comma-separated ascending k values")
    p_sweep.add_argument("--k1", type=float, default=None)
    p_sweep.add_argument("--b", type=float, default=None)
    p_sweep.add_argument("--relevance", choices=["evidence", "gold"], default="evidence")
    p_sweep.add_argument("--config", default=None)
    p_sweep.add_argument("--out", required=True, help="depth CSV path")
    p_sweep.set_defaults(func=cmd_sweep)

    p_report = sub.add_parser("report", help="tables and CSVs across runs")
    p_report.add_argument("runs", nargs="+", help="run directories")
    p_report.add_argument("--ground-truth", required=True)
    p_report.add_argument("--retrieval-only", action="store_true")
    p_report.add_argument("--pricing", default=None)
    p_report.add_argument("--out", required=True, help="report output directory")
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PiSearchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
