"""Synthetic corpora with controlled ranking geometry.

The long-document tuning fixture is built so that full length normalization
provably separates evidence from distractors:

- evidence docs: ~2000 tokens, every query term 15 times (diluted, ~2.2%);
- verbose distractors: ~7000 tokens, every query term 35 times (higher
  absolute count, lower density) — these outrank evidence under weak length
  normalization but lose once b >= 0.8;
- one short keyword-dense snippet per query (24% term density) that tops the
  ranking at high b without displacing evidence from the top 20;
- filler docs pinning avgdl between the evidence and distractor lengths.

Pairwise order between documents sharing the same term set is k1-free in
this scoring family, so the win region is a b-threshold; with this geometry
it sits between b=0.6 and b=0.8.
"""

from __future__ import annotations

import random

EVIDENCE_PER_QUERY = 5
VERBOSE_DISTRACTORS_PER_QUERY = 25
EVIDENCE_TF = 15
DISTRACTOR_TF = 35
SNIPPET_TF = 8


def long_document_tuning_fixture(n_queries: int = 12, seed: int = 4):
    """Returns (docs, queries, qrels): docid->text, [(qid, text)], qid->evidence set."""
    rng = random.Random(seed)
    filler_words = [f"fill{i}" for i in range(50)]

    def filler(n):
        return [rng.choice(filler_words) for _ in range(n)]

    docs: dict[str, str] = {}
    queries: list[tuple[str, str]] = []
    qrels: dict[str, set[str]] = {}
    for qi in range(n_queries):
        terms = [f"kq{qi}x", f"kq{qi}y", f"kq{qi}z"]
        evidence = set()
        for e in range(EVIDENCE_PER_QUERY):
            docid = f"ev{qi}_{e}"
            body = filler(2000 - 3 * EVIDENCE_TF) + [t for t in terms for _ in range(EVIDENCE_TF)]
            rng.shuffle(body)
            docs[docid] = " ".join(body)
            evidence.add(docid)
        for d in range(VERBOSE_DISTRACTORS_PER_QUERY):
            docid = f"vd{qi}_{d}"
            body = filler(7000 - 3 * DISTRACTOR_TF) + [
                t for t in terms for _ in range(DISTRACTOR_TF)
            ]
            rng.shuffle(body)
            docs[docid] = " ".join(body)
        snippet = filler(100 - 3 * SNIPPET_TF) + [t for t in terms for _ in range(SNIPPET_TF)]
        rng.shuffle(snippet)
        docs[f"sd{qi}"] = " ".join(snippet)
        qid = f"q{qi}"
        queries.append((qid, " ".join(terms)))
        qrels[qid] = evidence
    # Filler scales with the query count so avgdl (and hence the win
    # threshold, b ~ 0.70) is the same for any fixture size.
    for f in range(17 * n_queries):
        docs[f"fl{f}"] = " ".join(filler(600))
    return docs, queries, qrels


def planted_rank_fixture(n_docs: int = 50, pad_len: int = 60):
    """Corpus where the ranking for "probe" is fully controlled.

    Document ``p{i}`` carries the probe term i times inside a fixed-length
    body, so the ranking is p{n}, p{n-1}, ..., p{1} for any k1 > 0 and the
    rank of every document is known in advance.
    """
    docs = {}
    for i in range(1, n_docs + 1):
        body = ["probe"] * i + [f"pad{i}w{j}" for j in range(pad_len - i)]
        docs[f"p{i:02d}"] = " ".join(body)
    ranking_order = [f"p{i:02d}" for i in range(n_docs, 0, -1)]
    return docs, ranking_order
