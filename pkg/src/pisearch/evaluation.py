"""Answer-quality and retrieval-behavior metrics over run artifacts.

Per query, recall of each evidence tier is computed against both the
evidence and the gold docid sets, then macro-averaged over queries. The
behavior tier is opened ∪ cited. Accuracy is the judged-correct fraction
with unanswered, timed-out, and judge-failed queries counting as incorrect.
Calibration error is 10-bin ECE over the agent's stated confidence.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .errors import MetricsError
from .judge import JudgeOutcome
from .pricing import PricingEntry, cost, default_pricing
from .trajectory import RunArtifact

TIER_NAMES = ("surfaced", "previewed", "behavior")
RELEVANCE_NAMES = ("evidence", "gold")

CALIBRATION_BINS = 10


def recall(tier, relevant) -> float:
    """|tier ∩ relevant| / |relevant|; undefined for an empty relevant set."""
    relevant = set(relevant)
    if not relevant:
        raise MetricsError("recall is undefined for an empty relevance set")
    return len(set(tier) & relevant) / len(relevant)


def calibration_error(rows) -> float:
    """Expected calibration error over (confidence percent, correct) pairs.

    Ten equal-width bins over confidence/100; each bin contributes
    (n_b / N) * |accuracy_b - mean confidence_b|.
    """
    rows = list(rows)
    if not rows:
        raise MetricsError("calibration error is undefined for empty input")
    bins = [[] for _ in range(CALIBRATION_BINS)]
    for confidence, correct in rows:
        if not 0 <= confidence <= 100:
            raise MetricsError(f"confidence {confidence} outside [0, 100]")
        scaled = confidence / 100.0
        idx = min(int(scaled * CALIBRATION_BINS), CALIBRATION_BINS - 1)
        bins[idx].append((scaled, bool(correct)))
    total = len(rows)
    ece = 0.0
    for bucket in bins:
        if not bucket:
            continue
        acc = sum(1.0 for _, correct in bucket if correct) / len(bucket)
        conf = sum(scaled for scaled, _ in bucket) / len(bucket)
        ece += (len(bucket) / total) * abs(acc - conf)
    return ece


@dataclass(frozen=True)
class QueryMetrics:
    query_id: str
    termination: str
    recalls: dict  # {tier: {"evidence": float|None, "gold": float|None}}
    correct: bool | None  # None when unjudged
    confidence: int | None
    cost_usd: float | None  # None when usage was unknown
    tool_calls: dict


@dataclass(frozen=True)
class RunMetrics:
    query_count: int
    accuracy: float | None
    calibration: float | None
    recalls: dict  # {tier: {"evidence": float|None, "gold": float|None}}
    total_cost_usd: float | None
    per_query: tuple = field(default_factory=tuple)

    def tool_call_averages(self) -> dict:
        keys = ("total", "search", "read_document", "read_search_results")
        if not self.per_query:
            return {key: 0.0 for key in keys}
        sums = {key: 0 for key in keys}
        for row in self.per_query:
            for key in keys:
                sums[key] += row.tool_calls.get(key, 0)
        return {key: sums[key] / len(self.per_query) for key in keys}


def _tier_sets(artifact: RunArtifact) -> dict:
    tiers = artifact.tiers
    return {
        "surfaced": tiers.surfaced,
        "previewed": tiers.previewed,
        "behavior": tiers.opened | tiers.cited,
    }


def aggregate(
    artifacts,
    ground_truth,
    verdicts: dict[str, JudgeOutcome] | None = None,
    pricing: dict[str, PricingEntry] | None = None,
) -> RunMetrics:
    """Fold per-query artifacts into run-level metrics.

    Every artifact must have a ground-truth entry. Queries with an empty
    relevance set are excluded from that recall average. With no verdicts
    the answer-quality fields are None (retrieval-only evaluation).
    """
    artifacts = list(artifacts)
    if pricing is None:
        pricing = default_pricing()

    per_query = []
    recall_sums = {tier: {rel: [] for rel in RELEVANCE_NAMES} for tier in TIER_NAMES}
    correct_count = 0
    calibration_rows = []
    total_cost = 0.0
    cost_known = True

    for artifact in artifacts:
        record = ground_truth.get(artifact.query_id)
        if record is None:
            raise MetricsError(f"no ground truth for query_id {artifact.query_id!r}")
        tier_sets = _tier_sets(artifact)
        relevance = {"evidence": record.evidence_docids, "gold": record.gold_docids}
        recalls = {}
        for tier in TIER_NAMES:
            recalls[tier] = {}
            for rel in RELEVANCE_NAMES:
                if relevance[rel]:
                    value = recall(tier_sets[tier], relevance[rel])
                    recall_sums[tier][rel].append(value)
                else:
                    value = None
                recalls[tier][rel] = value

        correct: bool | None = None
        if verdicts is not None:
            outcome = verdicts.get(artifact.query_id)
            correct = bool(outcome is not None and outcome.ok and outcome.verdict.correct)
            if correct:
                correct_count += 1
            if (
                outcome is not None
                and outcome.ok
                and artifact.final_response is not None
            ):
                calibration_rows.append((artifact.final_response.confidence, outcome.verdict.correct))

        if not artifact.usage_complete:
            # At least one call came back without usage fields.
            query_cost = None
            cost_known = False
        else:
            query_cost = cost(artifact.usage, pricing)
            total_cost += query_cost

        per_query.append(
            QueryMetrics(
                query_id=artifact.query_id,
                termination=artifact.termination,
                recalls=recalls,
                correct=correct,
                confidence=(
                    artifact.final_response.confidence
                    if artifact.final_response is not None
                    else None
                ),
                cost_usd=query_cost,
                tool_calls=artifact.tool_call_counts(),
            )
        )

    recalls = {
        tier: {
            rel: (sum(values) / len(values) if values else None)
            for rel, values in by_rel.items()
        }
        for tier, by_rel in recall_sums.items()
    }
    accuracy = correct_count / len(artifacts) if verdicts is not None and artifacts else None
    calibration = calibration_error(calibration_rows) if calibration_rows else None
    return RunMetrics(
        query_count=len(artifacts),
        accuracy=accuracy,
        calibration=calibration,
        recalls=recalls,
        total_cost_usd=total_cost if cost_known else None,
        per_query=tuple(per_query),
    )


# -- reports -------------------------------------------------------------------

METRICS_CSV_COLUMNS = [
    "run_id",
    "queries",
    "accuracy",
    "calibration_error",
    "cost_usd",
    "surfaced_evidence",
    "surfaced_gold",
    "previewed_evidence",
    "previewed_gold",
    "behavior_evidence",
    "behavior_gold",
]

TOOL_CSV_COLUMNS = ["run_id", "total", "search", "read_document", "read_search_results"]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def metrics_csv_row(run_id: str, metrics: RunMetrics) -> dict:
    row = {
        "run_id": run_id,
        "queries": metrics.query_count,
        "accuracy": metrics.accuracy,
        "calibration_error": metrics.calibration,
        "cost_usd": metrics.total_cost_usd,
    }
    for tier in TIER_NAMES:
        for rel in RELEVANCE_NAMES:
            row[f"{tier}_{rel}"] = metrics.recalls[tier][rel]
    return row


def write_metrics_csv(rows, out_path) -> None:
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _fmt(row.get(key)) for key in METRICS_CSV_COLUMNS})


def write_cost_accuracy_csv(rows, out_path) -> None:
    """Two-column frontier input: one (cost, accuracy) point per run."""
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run_id", "cost_usd", "accuracy"])
        for run_id, metrics in rows:
            writer.writerow([run_id, _fmt(metrics.total_cost_usd), _fmt(metrics.accuracy)])


def write_tool_calls_csv(rows, out_path) -> None:
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=TOOL_CSV_COLUMNS)
        writer.writeheader()
        for run_id, metrics in rows:
            averages = metrics.tool_call_averages()
            writer.writerow(
                {
                    "run_id": run_id,
                    "total": _fmt(averages["total"]),
                    "search": _fmt(averages["search"]),
                    "read_document": _fmt(averages["read_document"]),
                    "read_search_results": _fmt(averages["read_search_results"]),
                }
            )


def format_metrics_table(rows) -> str:
    """Human-readable summary table for one or more (run_id, metrics) pairs."""
    headers = [
        "run",
        "queries",
        "acc",
        "calib",
        "cost($)",
        "surf(evi)",
        "surf(gold)",
        "prev(evi)",
        "prev(gold)",
        "behav(evi)",
        "behav(gold)",
    ]
    table = [headers]
    for run_id, metrics in rows:
        def pct(value):
            return "-" if value is None else f"{100.0 * value:.1f}"

        table.append(
            [
                run_id,
                str(metrics.query_count),
                pct(metrics.accuracy),
                pct(metrics.calibration),
                "-" if metrics.total_cost_usd is None else f"{metrics.total_cost_usd:.2f}",
                pct(metrics.recalls["surfaced"]["evidence"]),
                pct(metrics.recalls["surfaced"]["gold"]),
                pct(metrics.recalls["previewed"]["evidence"]),
                pct(metrics.recalls["previewed"]["gold"]),
                pct(metrics.recalls["behavior"]["evidence"]),
                pct(metrics.recalls["behavior"]["gold"]),
            ]
        )
    widths = [max(len(row[i]) for row in table) for i in range(len(headers))]
    out = io.StringIO()
    for row in table:
        out.write("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() + "\n")
    return out.getvalue()
