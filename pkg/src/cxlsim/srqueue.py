"""Root-port queue logic for speculative reads.

Two 32-entry queues sit under each root port: loads enter the SR queue,
where a reader module forwards them to the memory queue as space allows,
emitting a speculative-read hint for a computed address window ahead of the
demand read. Issued windows are remembered in a ring buffer; a later load
falling inside a remembered window skips hint generation and goes straight
to the memory queue. Response telemetry (DevLoad) drives the hint
granularity up or down and can halt hinting entirely until the endpoint
reports light load again.

Stores and deduplicated loads share a FIFO admission lane into the memory
queue, which keeps endpoint write order equal to arrival order.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .config import SrParams, SrPolicy
from .engine import SimulationError
from .fabric import MemRequest, ReqKind
from .protocol import DevLoad, FlitMsg, MsgKind

GRANULARITIES = (256, 512, 1024)
SHIFT_GRAIN = 64   # window shift per queued request
UNIT = 256


def _round_nearest(value: int, tie_down: bool) -> int:
    """Round to the nearest 256B boundary; ties resolve outward."""
    q, r = divmod(value, UNIT)
    if r < UNIT // 2 or (r == UNIT // 2 and tie_down):
        return q * UNIT
    return (q + 1) * UNIT


def compute_address_window(addr: int, granularity: int, memq_len: int,
                           srq_len: int) -> tuple[int, int]:
    """Address window for a hint: (start, length), both 256B-granular.

    The initial window spans granularity bytes on both sides of the
    request. Entries already in the memory queue pull the start upward by
    64B each (they cover the past); entries waiting in the SR queue pull
    the end downward (their own hints will cover the future). The result
    is rounded to 256B boundaries, kept inside 1..4 units, and always
    contains the request's own 256B block.
    """
    if granularity not in GRANULARITIES:
        raise ValueError(f"granularity {granularity} not in {GRANULARITIES}")
    block = addr - addr % UNIT
    start = addr - granularity + SHIFT_GRAIN * memq_len
    end = addr + granularity - SHIFT_GRAIN * srq_len
    if end <= start:
        return block, UNIT
    start = _round_nearest(start, tie_down=True)
    end = _round_nearest(end, tie_down=False)
    start = max(0, start)
    start = min(start, block)
    end = max(end, block + UNIT)
    while end - start > 4 * UNIT:
        # Trim whichever side reaches farther from the request's block.
        if block - start >= end - (block + UNIT):
            start += UNIT
        else:
            end -= UNIT
    return start, end - start


@dataclass
class QueueStats:
    loads_accepted: int = 0
    loads_completed: int = 0
    stores_accepted: int = 0
    stores_completed: int = 0
    specrd_issued: int = 0
    dedup_forwards: int = 0
    halts_entered: int = 0
    load_stalls: int = 0
    granularity_hist: dict[int, int] = field(default_factory=lambda: {g: 0 for g in GRANULARITIES})


@dataclass
class _MemqEntry:
    req: MemRequest
    issued_at: int


class QueueLogic:
    """Per-port queue state machine; driven by the port, not by the clock."""

    def __init__(self, params: SrParams, sr_enabled: bool,
                 now: Callable[[], int],
                 emit: Callable[[FlitMsg, int], None],
                 complete_load: Callable[[MemRequest, int, DevLoad], None],
                 complete_store: Callable[[MemRequest, int, DevLoad], None],
                 on_space: Optional[Callable[[], None]] = None):
        self.params = params
        self.sr_enabled = sr_enabled
        self.policy = params.policy
        self.now = now
        self.emit = emit
        self.complete_load = complete_load
        self.complete_store = complete_store
        self.on_space = on_space or (lambda: None)

        self.srq: deque[MemRequest] = deque()
        self.memq: dict[int, _MemqEntry] = {}
        self.admission: deque[MemRequest] = deque()
        self.ring: deque[tuple[int, int]] = deque(maxlen=params.ring_capacity)
        self.granularity = params.initial_granularity if self.policy is not SrPolicy.MAX else 1024
        self.halted = False
        self.stats = QueueStats()

    # -- intake ---------------------------------------------------------------

    def offer_load(self, req: MemRequest) -> bool:
        """Add a load; False means the caller must retry when space frees."""
        if not self.sr_enabled:
            self.stats.loads_accepted += 1
            self.admission.append(req)
            self.pump()
            return True
        if self._ring_covers(req.hpa):
            self.stats.dedup_forwards += 1
            self.stats.loads_accepted += 1
            self.admission.append(req)
            self.pump()
            return True
        if len(self.srq) >= self.params.queue_capacity:
            self.stats.load_stalls += 1
            return False
        self.stats.loads_accepted += 1
        self.srq.append(req)
        self.pump()
        return True

    def offer_store(self, req: MemRequest) -> None:
        self.stats.stores_accepted += 1
        self.admission.append(req)
        self.pump()

    def memq_free(self) -> int:
        return self.params.queue_capacity - len(self.memq)

    def _ring_covers(self, addr: int) -> bool:
        for start, end in self.ring:
            if start <= addr and addr + 64 <= end:
                return True
        return False

    # -- reader / admission ----------------------------------------------------

    def pump(self) -> None:
        """Move work into the memory queue while space allows."""
        while len(self.memq) < self.params.queue_capacity:
            if self.admission:
                req = self.admission.popleft()
                self._enter_memq(req, hint=False)
            elif self.sr_enabled and self.srq:
                req = self.srq.popleft()
                self._enter_memq(req, hint=not self.halted)
            else:
                break

    def _enter_memq(self, req: MemRequest, hint: bool) -> None:
        if hint:
            start, length = self._window_for(req.hpa)
            self.emit(FlitMsg(MsgKind.MEM_SPEC_RD, start, length, req.tag), 0)
            self.ring.append((start, start + length))
            self.stats.specrd_issued += 1
            self.stats.granularity_hist[self.granularity] += 1
        if req.tag in self.memq:
            raise SimulationError(f"duplicate tag {req.tag} in memory queue")
        self.memq[req.tag] = _MemqEntry(req, self.now())
        kind = MsgKind.MEM_RD if req.kind is ReqKind.LOAD else MsgKind.MEM_WR
        self.emit(FlitMsg(kind, req.hpa, 64, req.tag), req.value)

    def _window_for(self, addr: int) -> tuple[int, int]:
        block = addr - addr % UNIT
        if self.policy is SrPolicy.NAIVE:
            return block, UNIT
        if self.policy is SrPolicy.MAX:
            return block, 4 * UNIT
        if self.policy is SrPolicy.DYN:
            return block, self.granularity
        return compute_address_window(addr, self.granularity,
                                      len(self.memq), len(self.srq))

    # -- responses --------------------------------------------------------------

    def on_response(self, resp: FlitMsg, value: int) -> None:
        entry = self.memq.pop(resp.tag, None)
        if entry is None:
            raise SimulationError(f"response with unknown tag {resp.tag}")
        if self.sr_enabled:
            self._adjust_granularity(resp.devload)
        latency = self.now() - entry.issued_at
        if entry.req.kind is ReqKind.LOAD:
            self.stats.loads_completed += 1
            self.complete_load(entry.req, value, resp.devload)
        else:
            self.stats.stores_completed += 1
            self.complete_store(entry.req, latency, resp.devload)
        self.pump()
        self.on_space()

    def _adjust_granularity(self, devload: DevLoad) -> None:
        if self.policy in (SrPolicy.NAIVE, SrPolicy.MAX):
            return
        if devload is DevLoad.LL:
            self.halted = False
            idx = GRANULARITIES.index(self.granularity)
            self.granularity = GRANULARITIES[min(idx + 1, len(GRANULARITIES) - 1)]
        elif devload is DevLoad.MO:
            idx = GRANULARITIES.index(self.granularity)
            self.granularity = GRANULARITIES[max(idx - 1, 0)]
        elif devload is DevLoad.SO:
            if not self.halted:
                self.stats.halts_entered += 1
            self.halted = True
