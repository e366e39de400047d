"""Retriever ablations: (k1, b) grid search and retrieval-depth sweeps.

The tuning metric is first-stage recall@depth against per-query relevance
sets, macro-averaged; it needs no LLM calls. Depth sweeps rank once per
query at the largest k and evaluate every smaller k on ranking prefixes,
which is exact because rankings nest by construction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from . import bm25
from .errors import MetricsError

DEFAULT_K1_GRID = (0.5, 0.9, 2.0, 4.0, 8.0, 16.0, 25.0, 32.0)
DEFAULT_B_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)

# Stock-default cell marked on every grid report that contains it.
DEFAULT_CELL = (0.9, 0.4)


@dataclass(frozen=True)
class GridResult:
    """Recall heat grid over (k1, b) cells.

    ``best`` attains the maximum metric; ties break toward smaller k1, then
    smaller b. ``default_cell`` is present iff the grids contain the stock
    default (0.9, 0.4).
    """

    k1_values: tuple[float, ...]
    b_values: tuple[float, ...]
    depth: int
    cells: dict  # (k1, b) -> metric value
    best: tuple[float, float]
    default_cell: tuple[float, float] | None

    @property
    def best_value(self) -> float:
        return self.cells[self.best]

    @property
    def default_value(self) -> float | None:
        if self.default_cell is None:
            return None
        return self.cells[self.default_cell]


@dataclass(frozen=True)
class DepthCurve:
    """Recall@k values for ascending k over fixed rankings; nondecreasing."""

    k_values: tuple[int, ...]
    recalls: tuple[float, ...]

    def as_pairs(self) -> list[tuple[int, float]]:
        return list(zip(self.k_values, self.recalls))


def _check_qrels(queries, qrels) -> None:
    if not queries:
        raise MetricsError("no queries to evaluate")
    empty = [qid for qid, _ in queries if not qrels.get(qid)]
    if len(empty) == len(queries):
        raise MetricsError("metric undefined: every query has an empty relevance set")
    if empty:
        raise MetricsError(f"queries with empty relevance sets: {empty}")


def mean_recall_at_depth(index, queries, qrels, depth, params) -> float:
    """Macro-averaged recall@depth: queries is [(query_id, text)], qrels maps id -> docid set."""
    total = 0.0
    for query_id, text in queries:
        relevant = qrels[query_id]
        ranking = bm25.search(index, text, depth=depth, params=params)
        hits = set(ranking.docids())
        total += len(hits & set(relevant)) / len(relevant)
    return total / len(queries)


def grid_search(
    index,
    queries,
    qrels,
    k1_grid=DEFAULT_K1_GRID,
    b_grid=DEFAULT_B_GRID,
    depth: int = 20,
    metric=mean_recall_at_depth,
) -> GridResult:
    """Evaluate the metric for every (k1, b) cell; deterministic."""
    k1_values = tuple(k1_grid)
    b_values = tuple(b_grid)
    if not k1_values or not b_values:
        raise MetricsError("k1 and b grids must be nonempty")
    _check_qrels(queries, qrels)
    cells = {}
    for k1 in k1_values:
        for b in b_values:
            params = bm25.Bm25Params(k1=k1, b=b)
            cells[(k1, b)] = metric(index, queries, qrels, depth, params)
    best = min(cells, key=lambda cell: (-cells[cell], cell[0], cell[1]))
    default_cell = DEFAULT_CELL if DEFAULT_CELL in cells else None
    return GridResult(
        k1_values=k1_values,
        b_values=b_values,
        depth=depth,
        cells=cells,
        best=best,
        default_cell=default_cell,
    )


def depth_sweep(index, queries, qrels, k_values, params) -> DepthCurve:
    """Recall@k for every k, computed from prefixes of one ranking per query."""
    k_values = tuple(k_values)
    if not k_values:
        raise MetricsError("k_values must be nonempty")
    if list(k_values) != sorted(k_values):
        raise MetricsError("k_values must be sorted ascending")
    _check_qrels(queries, qrels)
    max_k = k_values[-1]
    per_k_totals = [0.0] * len(k_values)
    for query_id, text in queries:
        relevant = set(qrels[query_id])
        ranking = bm25.search(index, text, depth=max_k, params=params)
        docids = ranking.docids()
        for i, k in enumerate(k_values):
            hits = set(docids[:k])
            per_k_totals[i] += len(hits & relevant) / len(relevant)
    recalls = tuple(total / len(queries) for total in per_k_totals)
    return DepthCurve(k_values=k_values, recalls=recalls)


def write_grid_csv(result: GridResult, out_path: str | Path) -> None:
    """Heat grid rows (k1, b, metric) plus best/default summary rows."""
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k1", "b", "recall_at_depth", "is_best", "is_default"])
        for k1 in result.k1_values:
            for b in result.b_values:
                writer.writerow(
                    [
                        k1,
                        b,
                        f"{result.cells[(k1, b)]:.6f}",
                        "1" if (k1, b) == result.best else "0",
                        "1" if (k1, b) == result.default_cell else "0",
                    ]
                )


def grid_summary(result: GridResult) -> str:
    best_k1, best_b = result.best
    lines = [
        f"best cell: k1={best_k1} b={best_b} recall@{result.depth}={result.best_value:.4f}"
    ]
    if result.default_cell is not None:
        dk1, db = result.default_cell
        lines.append(
            f"default cell: k1={dk1} b={db} recall@{result.depth}={result.default_value:.4f}"
        )
    return "\n".join(lines)


def write_depth_csv(curve: DepthCurve, out_path: str | Path) -> None:
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "recall"])
        for k, value in curve.as_pairs():
            writer.writerow([k, f"{value:.6f}"])
