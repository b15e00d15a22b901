"""Deterministic store engine for SSD-backed ports.

Stores targeting an SSD-backed range complete toward the GPU at local
write latency, always. In dual mode each store is also sent to the
endpoint fire-and-forget; when the endpoint looks slow (a write response
exceeding the slow threshold, or moderate/severe DevLoad), new stores are
parked in a reserved GPU-memory buffer instead and nothing is sent until
polling sees the load drop. The buffer is drained in the background, a few
entries per step, yielding to demand traffic. Loads always check the
buffer first so a parked value is never stale-read from the endpoint.

A re-store to a buffered address updates the slot in place, so a hot
address occupies one slot and only its newest value is ever flushed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .config import DsParams
from .engine import Engine
from .fabric import MemRequest, ReqKind
from .protocol import DevLoad

SLOT_BYTES = 64


@dataclass
class _Slot:
    value: int
    push_time: int
    in_flight: bool = False  # flush issued, slot freed on the write response


class StoreBuffer:
    """Deferred-store stack with an address map; flush order is oldest-first."""

    def __init__(self, capacity_bytes: int):
        self.capacity_slots = max(1, capacity_bytes // SLOT_BYTES)
        self._slots: dict[int, _Slot] = {}  # insertion order = push order
        self.peak_slots = 0

    def __len__(self) -> int:
        return len(self._slots)

    def __contains__(self, hpa: int) -> bool:
        return hpa in self._slots

    @property
    def full(self) -> bool:
        return len(self._slots) >= self.capacity_slots

    def lookup(self, hpa: int) -> Optional[int]:
        slot = self._slots.get(hpa)
        return slot.value if slot else None

    def push(self, hpa: int, value: int, now: int) -> bool:
        """Insert or update in place; False when full and the address is new."""
        slot = self._slots.get(hpa)
        if slot is not None:
            slot.value = value
            # A newer value than any flush already in flight: the slot must
            # survive that flush's response and be flushed again.
            slot.in_flight = False
            return True
        if self.full:
            return False
        self._slots[hpa] = _Slot(value, now)
        self.peak_slots = max(self.peak_slots, len(self._slots))
        return True

    def next_to_flush(self) -> Optional[tuple[int, int]]:
        for hpa, slot in self._slots.items():
            if not slot.in_flight:
                slot.in_flight = True
                return hpa, slot.value
        return None

    def release_flushed(self, hpa: int) -> bool:
        """Free a slot whose flush landed, unless it was re-dirtied meanwhile."""
        slot = self._slots.get(hpa)
        if slot is not None and slot.in_flight:
            del self._slots[hpa]
            return True
        return False

    def live_items(self) -> list[tuple[int, int]]:
        return [(hpa, slot.value) for hpa, slot in self._slots.items()]


@dataclass
class DsStats:
    stores: int = 0
    buffered: int = 0
    coalesced: int = 0
    flushed: int = 0
    overflows: int = 0
    polls: int = 0
    suspensions: list[tuple[int, int]] = field(default_factory=list)
    buffer_series: list[tuple[int, int]] = field(default_factory=list)


class StoreEngine:
    """Write-side controller state for one port."""

    def __init__(self, engine: Engine, params: DsParams, nominal_write_ns: int,
                 gpu_write_ns: int,
                 issue_write: Callable[[MemRequest], None],
                 memq_free: Callable[[], int],
                 sample_devload: Callable[[], DevLoad],
                 complete_local: Callable[[MemRequest, int], None]):
        self.engine = engine
        self.p = params
        self.slow_threshold_ns = int(params.slow_threshold_mult * nominal_write_ns)
        self.gpu_write_ns = gpu_write_ns
        self.issue_write = issue_write
        self.memq_free = memq_free
        self.sample_devload = sample_devload
        self.complete_local = complete_local

        self.buffer = StoreBuffer(params.buffer_bytes)
        self.suspended = False
        self._suspended_at = 0
        self._poll_pending = False
        self._sync_waiting: dict[int, MemRequest] = {}  # overflow write-through
        self._next_flush_tag = -1  # reserved space, never collides with port tags
        self.stats = DsStats()

    # -- store path -----------------------------------------------------------

    def on_store(self, req: MemRequest) -> None:
        """Handle one store; completion toward the GPU is always local-latency
        unless the buffer overflows into synchronous write-through."""
        self.stats.stores += 1
        if self.buffer.lookup(req.hpa) is not None:
            # Newest value rides the existing slot whichever mode we are in;
            # issuing a write now would overtake the parked older neighbor.
            self.buffer.push(req.hpa, req.value, self.engine.now)
            self.stats.coalesced += 1
            self._complete(req)
            return
        if self.suspended:
            if self.buffer.push(req.hpa, req.value, self.engine.now):
                self.stats.buffered += 1
                self._record_buffer()
                self._complete(req)
            else:
                self.stats.overflows += 1
                self._sync_waiting[req.tag] = req
                self.issue_write(req)  # completes only on the write response
            return
        self.issue_write(req)
        self._complete(req)

    def _complete(self, req: MemRequest) -> None:
        self.engine.after(self.gpu_write_ns, lambda: self.complete_local(req, self.gpu_write_ns))

    def _record_buffer(self) -> None:
        self.stats.buffer_series.append((self.engine.now, len(self.buffer)))

    # -- feedback ---------------------------------------------------------------

    def on_write_response(self, req: MemRequest, latency: int, devload: DevLoad) -> None:
        sync = self._sync_waiting.pop(req.tag, None)
        if sync is not None:
            self.complete_local(req, latency)
        elif req.tag < 0:
            # Flush entry landed; the slot stays if it was re-dirtied meanwhile.
            if self.buffer.release_flushed(req.hpa):
                self.stats.flushed += 1
                self._record_buffer()
        self.detect_slow_write(latency, devload)
        self.maybe_flush()

    def detect_slow_write(self, latency: int, devload: DevLoad) -> None:
        if self.suspended:
            return
        if latency > self.slow_threshold_ns or devload in (DevLoad.MO, DevLoad.SO):
            self.suspended = True
            self._suspended_at = self.engine.now
            self._schedule_poll()

    def _schedule_poll(self) -> None:
        if self._poll_pending:
            return
        self._poll_pending = True
        self.engine.after(self.p.poll_ns, self._poll)

    def _poll(self) -> None:
        self._poll_pending = False
        if not self.suspended:
            return
        self.stats.polls += 1
        if self.sample_devload() in (DevLoad.LL, DevLoad.OL):
            self.suspended = False
            self.stats.suspensions.append((self._suspended_at, self.engine.now))
            self.maybe_flush()
        else:
            self._schedule_poll()

    # -- background flush ---------------------------------------------------------

    def maybe_flush(self) -> None:
        """Issue up to the per-step budget of parked writes, oldest first,
        only while healthy and while demand traffic has queue credit."""
        if self.suspended:
            return
        issued = 0
        while issued < self.p.flush_budget and self.memq_free() > self.p.memq_reserve:
            item = self.buffer.next_to_flush()
            if item is None:
                break
            hpa, value = item
            req = MemRequest(ReqKind.STORE, hpa, self.engine.now, self._flush_tag(), value=value)
            self.issue_write(req)
            issued += 1

    def _flush_tag(self) -> int:
        tag = self._next_flush_tag
        self._next_flush_tag -= 1
        return tag

    # -- reads ---------------------------------------------------------------------

    def intercept_load(self, hpa: int) -> Optional[int]:
        return self.buffer.lookup(hpa)

    # -- accounting ------------------------------------------------------------------

    def open_suspension(self) -> Optional[tuple[int, int]]:
        return (self._suspended_at, None) if self.suspended else None

    def final_items(self) -> list[tuple[int, int]]:
        return self.buffer.live_items()
