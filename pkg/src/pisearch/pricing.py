"""Token pricing table and run cost accounting.

Prices are USD per 1M tokens with three columns: input, output, and
cache_read (the discounted rate for prefix-cached input tokens). A call
costs ``(input - cached) * p_in + cached * p_cache + output * p_out``,
all divided by 1e6; cached tokens are clamped to the input count.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import PricingError


@dataclass(frozen=True)
class PricingEntry:
    model: str
    input: float
    output: float
    cache_read: float

    def __post_init__(self):
        if self.input < 0 or self.output < 0 or self.cache_read < 0:
            raise PricingError(f"{self.model}: prices must be >= 0")
        if self.cache_read > self.input:
            raise PricingError(f"{self.model}: cache_read price exceeds input price")


PricingTable = dict


def _table_from_mapping(mapping: dict) -> dict[str, PricingEntry]:
    table = {}
    for model, row in mapping.items():
        table[model] = PricingEntry(
            model=model,
            input=float(row["input"]),
            output=float(row["output"]),
            cache_read=float(row["cache_read"]),
        )
    return table


def default_pricing() -> dict[str, PricingEntry]:
    """The pricing table shipped with the package."""
    raw = resources.files("pisearch").joinpath("data", "pricing.json").read_text(encoding="utf-8")
    return _table_from_mapping(json.loads(raw))


def load_pricing(path: str | Path) -> dict[str, PricingEntry]:
    """Load a pricing file: JSON mapping/list or CSV with the table columns."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        table = {}
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                model = row["model"]
                table[model] = PricingEntry(
                    model=model,
                    input=float(row["input"]),
                    output=float(row["output"]),
                    cache_read=float(row["cache_read"]),
                )
        return table
    payload = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(payload, list):
        payload = {row["model"]: row for row in payload}
    return _table_from_mapping(payload)


def call_cost(
    pricing: dict[str, PricingEntry],
    model: str,
    input_tokens: int,
    cached_input_tokens: int,
    output_tokens: int,
) -> float:
    entry = pricing.get(model)
    if entry is None:
        raise PricingError(f"no pricing entry for model {model!r}")
    cached = min(max(cached_input_tokens, 0), input_tokens)
    fresh = input_tokens - cached
    return (fresh * entry.input + cached * entry.cache_read + output_tokens * entry.output) / 1e6


def cost(usage_rows, pricing: dict[str, PricingEntry] | None = None) -> float:
    """Total USD for usage rows of (model, input, cached_input, output) shape.

    Accepts TokenUsage objects or 4-tuples. Never negative; zero rows cost $0.
    """
    if pricing is None:
        pricing = default_pricing()
    total = 0.0
    for row in usage_rows:
        if hasattr(row, "model"):
            model, inp, cached, out = (
                row.model,
                row.input_tokens,
                row.cached_input_tokens,
                row.output_tokens,
            )
        else:
            model, inp, cached, out = row
        total += call_cost(pricing, model, inp, cached, out)
    return total
