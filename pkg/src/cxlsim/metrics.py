"""Report assembly helpers: percentiles, series summaries, canonical JSON."""

from __future__ import annotations

import json
from typing import Any, Iterable, Sequence


def percentile(values: Sequence[int], pct: float) -> int:
    """Nearest-rank percentile over integers; 0 for an empty series."""
    if not values:
        return 0
    ordered = sorted(values)
    rank = max(1, -(-len(ordered) * pct // 100))  # ceil without floats
    return ordered[int(rank) - 1]


def latency_summary(values: Sequence[int]) -> dict[str, int]:
    if not values:
        return {"count": 0, "p50_ns": 0, "p99_ns": 0, "max_ns": 0, "mean_ns": 0}
    return {
        "count": len(values),
        "p50_ns": percentile(values, 50),
        "p99_ns": percentile(values, 99),
        "max_ns": max(values),
        "mean_ns": sum(values) // len(values),
    }


def series_max_in(series: Iterable[tuple[int, int]], start: int, end: int,
                  initial: int = 0) -> int:
    """Max level of a step series inside [start, end), including the value
    carried in from before the window."""
    carried = initial
    best = None
    for t, v in series:
        if t < start:
            carried = v
        elif t < end:
            best = v if best is None else max(best, v)
        else:
            break
    return carried if best is None else max(carried, best)


def canonical_json(doc: Any) -> str:
    """Stable rendering used for every report file; byte-identical reruns."""
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def write_series_csv(path: str, series: Iterable[tuple[int, Any]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("time_ns,value\n")
        for t, v in series:
            fh.write(f"{t},{v}\n")
