"""Independent brute-force oracles used to cross-check the package.

Everything here recomputes from raw inputs (texts, event dicts, artifact
files) without touching the index/controller internals it validates.
"""

from __future__ import annotations

import math
import re

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def oracle_tokenize(text):
    return _TOKEN_RE.findall(text.lower())


def brute_force_rank(docs: dict[str, str], query: str, k1: float, b: float, depth=None):
    """Score every document from raw texts and sort; returns [(docid, score)].

    Statistics (df, tf, avgdl) are recounted from scratch here so the oracle
    shares no code with the index under test.
    """
    token_lists = {docid: oracle_tokenize(text) for docid, text in docs.items()}
    n_docs = len(docs)
    avgdl = sum(len(tokens) for tokens in token_lists.values()) / n_docs
    terms = list(dict.fromkeys(oracle_tokenize(query)))

    df = {}
    for term in terms:
        df[term] = sum(1 for tokens in token_lists.values() if term in tokens)

    results = []
    for docid, tokens in docs.items():
        tokens = token_lists[docid]
        dl = len(tokens)
        total = 0.0
        matched = False
        for term in terms:
            tf = tokens.count(term)
            if tf == 0:
                continue
            matched = True
            idf = math.log(1.0 + (n_docs - df[term] + 0.5) / (df[term] + 0.5))
            total += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / avgdl))
        if matched:
            results.append((docid, total))
    results.sort(key=lambda pair: (-pair[1], pair[0]))
    if depth is not None:
        results = results[:depth]
    return results


def naive_line_slice(text: str, offset: int, limit: int):
    """Reference slicer for read_lines: returns (content, end_line, total)."""
    lines = text.split("\n")
    total = len(lines)
    end = min(offset + limit - 1, total)
    return "\n".join(lines[offset - 1 : end]), end, total


def rescan_tiers(event_dicts, final_response_dict, corpus_docids):
    """Recompute the four tiers from serialized artifact events.

    Works on plain dicts (the JSON form) so it is independent of the event
    dataclasses.
    """
    surfaced, previewed, opened = set(), set(), set()
    for ev in event_dicts:
        if ev.get("type") != "observation" or not ev.get("ok"):
            continue
        result = ev["result"]
        kind = result["kind"]
        if kind == "search":
            surfaced.update(result["metadata"]["cached_docids"])
            previewed.update(result["displayed_docids"])
        elif kind == "read_search_results":
            previewed.update(result["displayed_docids"])
        elif kind == "read_document":
            opened.update(result["displayed_docids"])
    cited = set()
    if final_response_dict is not None:
        cited = {d for d in final_response_dict["cited_docids"] if d in corpus_docids}
    return {
        "surfaced": sorted(surfaced),
        "previewed": sorted(previewed),
        "opened": sorted(opened),
        "cited": sorted(cited),
    }


def recount_metrics(artifact_dicts, ground_truth_rows, verdict_rows=None, pricing=None):
    """Flat-file recomputation of the aggregate metrics.

    ``ground_truth_rows``: query_id -> {"evidence": set, "gold": set}.
    ``verdict_rows``: query_id -> bool(correct) for successful verdicts only.
    Returns a dict with macro recalls, accuracy, calibration, and cost.
    """
    tiers_by_query = {}
    for art in artifact_dicts:
        qid = art["query_id"]
        tiers = art["tiers"]
        tiers_by_query[qid] = {
            "surfaced": set(tiers["surfaced"]),
            "previewed": set(tiers["previewed"]),
            "behavior": set(tiers["opened"]) | set(tiers["cited"]),
        }

    sums = {}
    counts = {}
    for tier in ("surfaced", "previewed", "behavior"):
        for rel in ("evidence", "gold"):
            sums[(tier, rel)] = 0.0
            counts[(tier, rel)] = 0
    for art in artifact_dicts:
        qid = art["query_id"]
        for tier in ("surfaced", "previewed", "behavior"):
            for rel in ("evidence", "gold"):
                relevant = ground_truth_rows[qid][rel]
                if not relevant:
                    continue
                value = len(tiers_by_query[qid][tier] & relevant) / len(relevant)
                sums[(tier, rel)] += value
                counts[(tier, rel)] += 1
    recalls = {
        key: (sums[key] / counts[key] if counts[key] else None) for key in sums
    }

    accuracy = None
    calibration = None
    if verdict_rows is not None:
        n_correct = sum(
            1 for art in artifact_dicts if verdict_rows.get(art["query_id"]) is True
        )
        accuracy = n_correct / len(artifact_dicts)
        rows = []
        for art in artifact_dicts:
            verdict = verdict_rows.get(art["query_id"])
            final = art.get("final_response")
            if verdict is None or final is None:
                continue
            rows.append((final["confidence"], verdict))
        if rows:
            bins = {}
            for confidence, correct in rows:
                idx = min(int(confidence / 100.0 * 10), 9)
                bins.setdefault(idx, []).append((confidence / 100.0, correct))
            calibration = 0.0
            for bucket in bins.values():
                acc = sum(1.0 for _, c in bucket if c) / len(bucket)
                conf = sum(s for s, _ in bucket) / len(bucket)
                calibration += (len(bucket) / len(rows)) * abs(acc - conf)

    total_cost = 0.0
    if pricing is not None:
        for art in artifact_dicts:
            for row in art.get("usage", []):
                entry = pricing[row["model"]]
                cached = min(row["cached_input_tokens"], row["input_tokens"])
                fresh = row["input_tokens"] - cached
                total_cost += (
                    fresh * entry["input"]
                    + cached * entry["cache_read"]
                    + row["output_tokens"] * entry["output"]
                ) / 1e6

    return {
        "recalls": recalls,
        "accuracy": accuracy,
        "calibration": calibration,
        "cost": total_cost,
    }
