import json
import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pisearch.backends import MockBackend
from pisearch.corpus import ingest_corpus


def write_corpus(path, docs):
    """docs: mapping docid -> text, written in iteration order."""
    with open(path, "w", encoding="utf-8") as fh:
        for docid, text in docs.items():
            fh.write(json.dumps({"docid": docid, "text": text}) + "\n")
    return path


def write_ground_truth(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return path


def random_corpus(rng: random.Random, n_docs: int, vocab_size: int = 30, max_len: int = 40):
    """Small random corpus with a tight vocabulary so score ties are common."""
    vocab = [f"w{i}" for i in range(vocab_size)]
    docs = {}
    for i in range(n_docs):
        length = rng.randint(1, max_len)
        docs[f"d{i:04d}"] = " ".join(rng.choice(vocab) for _ in range(length))
    return docs


@pytest.fixture
def tiny_docs():
    return {
        "doc-a": "alpha beta gamma",
        "doc-b": "beta beta delta",
        "doc-c": "gamma gamma gamma epsilon",
        "doc-d": "zeta eta theta",
    }


@pytest.fixture
def tiny_corpus(tmp_path, tiny_docs):
    path = write_corpus(tmp_path / "corpus.jsonl", tiny_docs)
    handle = ingest_corpus(path)
    yield handle
    handle.close()


@pytest.fixture
def mock_backend():
    docs = {f"m{i:02d}": f"mock document {i} " + "body text " * 20 for i in range(40)}
    return MockBackend(documents=docs)
