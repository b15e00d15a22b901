"""Synthetic workload generation and trace file ingestion.

Three address patterns are generated: Seq (monotone 64B strides), Around
(a bounded random walk that runs in either direction near the current
position), and Rand (uniform over the footprint). Compute gaps and the
load/store mix are drawn per-op from the spec ratios.

Trace file format, one op per line::

    tick_ns op addr_hex size

with op L (load), S (store) or C (compute gap of `size` ns). Ticks are
earliest-issue times and must be non-decreasing. Addresses are byte offsets
into the workload footprint; the scenario maps them into the address space.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from .config import WorkloadParams

GRAIN = 64

# Around-pattern shape: direction flips/jumps are bounded to +-1 KiB.
AROUND_TURN_PROB = 0.2
AROUND_MAX_JUMP = 1024

# Compute gaps per op, ns. Uniform draw keeps gaps small relative to
# memory latencies so the mix ratio, not the gap size, drives behavior.
COMPUTE_GAP_NS = (20, 200)


class TraceError(ValueError):
    """Trace file rejected; message carries the offending line number."""


@dataclass(frozen=True, slots=True)
class TraceOp:
    tick: int
    kind: str  # 'L' | 'S' | 'C'
    addr: int
    size: int


def generate(spec: WorkloadParams, seed: int | None = None) -> list[TraceOp]:
    """Produce a deterministic op stream for a workload spec."""
    rng = random.Random(spec.seed if spec.seed is not None else seed or 0)
    footprint = (spec.footprint_bytes // GRAIN) * GRAIN
    n_blocks = footprint // GRAIN

    ops: list[TraceOp] = []
    cur = 0
    direction = 1
    for _ in range(spec.op_count):
        if rng.random() < spec.compute_ratio:
            ops.append(TraceOp(0, "C", 0, rng.randint(*COMPUTE_GAP_NS)))
            continue
        if spec.pattern == "Seq":
            addr = cur
            cur = (cur + GRAIN) % footprint
        elif spec.pattern == "Rand":
            addr = rng.randrange(n_blocks) * GRAIN
        else:  # Around
            if rng.random() < AROUND_TURN_PROB:
                direction = rng.choice((1, -1))
                jump = rng.randrange(GRAIN, AROUND_MAX_JUMP + GRAIN, GRAIN)
                cur = (cur + direction * jump) % footprint
            else:
                cur = (cur + direction * GRAIN) % footprint
            addr = cur
        kind = "L" if rng.random() < spec.load_ratio else "S"
        ops.append(TraceOp(0, kind, addr, GRAIN))
    return ops


def measured_ratios(ops: Sequence[TraceOp]) -> tuple[float, float]:
    """(compute_ratio, load_ratio) actually present in a trace."""
    compute = sum(1 for op in ops if op.kind == "C")
    loads = sum(1 for op in ops if op.kind == "L")
    mem = len(ops) - compute
    return (compute / len(ops) if ops else 0.0,
            loads / mem if mem else 0.0)


def dump_trace(ops: Iterable[TraceOp], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for op in ops:
            fh.write(f"{op.tick} {op.kind} {op.addr:#x} {op.size}\n")


def parse_trace_lines(lines: Iterable[str]) -> list[TraceOp]:
    ops: list[TraceOp] = []
    last_tick = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise TraceError(f"line {lineno}: expected 'tick op addr size', got {line!r}")
        tick_s, op, addr_s, size_s = parts
        try:
            tick = int(tick_s)
            addr = int(addr_s, 16)
            size = int(size_s)
        except ValueError:
            raise TraceError(f"line {lineno}: malformed number in {line!r}") from None
        if op not in ("L", "S", "C"):
            raise TraceError(f"line {lineno}: op must be L, S or C, got {op!r}")
        if tick < last_tick:
            raise TraceError(f"line {lineno}: tick {tick} is before {last_tick}")
        last_tick = tick
        if op in ("L", "S"):
            if size != GRAIN:
                raise TraceError(f"line {lineno}: memory ops are {GRAIN}B, got {size}")
            if addr % GRAIN:
                raise TraceError(f"line {lineno}: address {addr:#x} not {GRAIN}B-aligned")
        elif size < 0:
            raise TraceError(f"line {lineno}: compute gap must be >= 0")
        ops.append(TraceOp(tick, op, addr, size))
    return ops


def parse_trace(path: str) -> list[TraceOp]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_trace_lines(fh)
    except OSError as exc:
        raise TraceError(f"cannot read trace {path}: {exc}") from exc


def footprint_of(ops: Sequence[TraceOp]) -> int:
    """Smallest 4 KiB multiple covering every memory address in the trace."""
    top = 0
    for op in ops:
        if op.kind != "C":
            top = max(top, op.addr + op.size)
    return max(4096, (top + 4095) // 4096 * 4096)
