"""Expansion endpoint model.

An endpoint owns an ingress queue, an optional internal DRAM cache (SSD
media only), and a single backend media server. Demand reads that miss the
cache and all writes become media commands; speculative-read hints become
background prefetch commands that fill the cache without generating a
response. Garbage collection blocks the media server entirely while active.

Hit accounting: a demand lookup counts as a hit when the line is resident
or already being filled (no new media command is needed), and as a miss
when it starts a media access. Prefetch fills never touch the counters.

DevLoad is sampled when a response is sent: severe when a GC is scheduled
or active or the ingress is nearly full, then moderate/optimal/light by
occupancy thresholds.
"""

from __future__ import annotations

from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .config import EndpointParams
from .engine import Engine, SimulationError
from .protocol import DevLoad, FlitMsg, MsgKind, decode_specrd

# Occupancy fractions driving the DevLoad state; three cut points exercise
# all four states.
DEVLOAD_SO = 0.85
DEVLOAD_MO = 0.50
DEVLOAD_OL = 0.25


def compute_devload(occupancy: int, capacity: int, gc_soon: bool) -> DevLoad:
    """Classify endpoint load; monotone in occupancy for a fixed GC state."""
    frac = occupancy / capacity
    if gc_soon or frac > DEVLOAD_SO:
        return DevLoad.SO
    if frac > DEVLOAD_MO:
        return DevLoad.MO
    if frac > DEVLOAD_OL:
        return DevLoad.OL
    return DevLoad.LL


class InternalDramCache:
    """LRU cache of 256B media lines inside an SSD-backed endpoint."""

    def __init__(self, capacity_bytes: int, line_size: int = 256):
        self.line_size = line_size
        self.capacity_lines = max(1, capacity_bytes // line_size)
        self._lines: OrderedDict[int, bool] = OrderedDict()
        self.hits = 0
        self.misses = 0

    def lookup(self, line: int) -> bool:
        return line in self._lines

    def touch(self, line: int) -> None:
        self._lines.move_to_end(line)

    def fill(self, line: int) -> Optional[int]:
        """Insert a line; returns the evicted victim line, if any."""
        victim = None
        if line not in self._lines and len(self._lines) >= self.capacity_lines:
            victim, _ = self._lines.popitem(last=False)
        self._lines[line] = True
        self._lines.move_to_end(line)
        return victim

    def evict(self, line: int) -> None:
        self._lines.pop(line, None)

    @property
    def occupancy_lines(self) -> int:
        return len(self._lines)


@dataclass
class _MediaCmd:
    kind: str                 # 'fill' | 'prefetch' | 'read64' | 'write'
    lines: tuple[int, ...] = ()
    msg: Optional[FlitMsg] = None


@dataclass
class _Pending:
    prefetch: bool
    waiters: list[FlitMsg] = field(default_factory=list)


@dataclass
class EndpointStats:
    demand_hits: int = 0
    demand_misses: int = 0
    prefetch_cmds: int = 0
    prefetch_fills: int = 0
    prefetch_dropped: int = 0
    specrd_received: int = 0
    reads: int = 0
    writes: int = 0
    gc_windows: list[tuple[int, int]] = field(default_factory=list)
    occupancy_series: list[tuple[int, int]] = field(default_factory=list)
    bytes_written: int = 0

    @property
    def hit_rate(self) -> float:
        total = self.demand_hits + self.demand_misses
        return self.demand_hits / total if total else 0.0


class Endpoint:
    """Event-driven endpoint; see module docstring for semantics."""

    def __init__(self, engine: Engine, params: EndpointParams,
                 respond: Callable[[FlitMsg, int], None]):
        self.engine = engine
        self.p = params
        self.respond = respond
        self.cache = InternalDramCache(params.cache_bytes, params.cache_line) \
            if params.has_cache else None
        self.image: dict[int, int] = {}
        self.stats = EndpointStats()

        self._occupancy = 0
        self._proc: deque[tuple[FlitMsg, int]] = deque()
        self._fe_busy = False
        self._pending: dict[int, _Pending] = {}
        self._demand_q: deque[_MediaCmd] = deque()
        self._prefetch_q: deque[_MediaCmd] = deque()
        self._media_busy = False
        self._gc_pending = False
        self._gc_active = False
        self._written_since_gc = 0
        self._gc_threshold = int(params.gc.region_bytes * params.gc.threshold_frac)
        self._slot_waiters: list[Callable[[], None]] = []

    # -- ingress ------------------------------------------------------------

    def receive(self, msg: FlitMsg, value: int = 0) -> bool:
        """Accept a request into the ingress queue; False back-pressures."""
        if self._occupancy >= self.p.ingress_capacity:
            return False
        self._occupancy += 1
        self._record_occ()
        self._proc.append((msg, value))
        self._kick_frontend()
        return True

    def on_slot_free(self, callback: Callable[[], None]) -> None:
        self._slot_waiters.append(callback)

    def devload(self) -> DevLoad:
        gc_soon = self._gc_pending or self._gc_active
        return compute_devload(self._occupancy, self.p.ingress_capacity, gc_soon)

    def _record_occ(self) -> None:
        self.stats.occupancy_series.append((self.engine.now, self._occupancy))

    def _release_slot(self) -> None:
        self._occupancy -= 1
        if self._occupancy < 0:
            raise SimulationError("ingress occupancy went negative")
        self._record_occ()
        waiters, self._slot_waiters = self._slot_waiters, []
        for cb in waiters:
            cb()

    # -- frontend -----------------------------------------------------------

    def _kick_frontend(self) -> None:
        if self._fe_busy or not self._proc:
            return
        self._fe_busy = True
        msg, value = self._proc.popleft()
        self.engine.after(self.p.frontend_ns, lambda: self._frontend_done(msg, value))

    def _frontend_done(self, msg: FlitMsg, value: int) -> None:
        if msg.kind is MsgKind.MEM_RD:
            self._handle_read(msg)
        elif msg.kind is MsgKind.MEM_WR:
            self._handle_write(msg, value)
        elif msg.kind is MsgKind.MEM_SPEC_RD:
            self._handle_specrd(msg)
        else:
            raise SimulationError(f"endpoint received {msg.kind}")
        self._fe_busy = False
        self._kick_frontend()

    def _handle_read(self, msg: FlitMsg) -> None:
        self.stats.reads += 1
        if self.cache is None:
            self._demand_q.append(_MediaCmd("read64", msg=msg))
            self._kick_media()
            return
        line = msg.hpa - msg.hpa % self.cache.line_size
        if self.cache.lookup(line):
            self.stats.demand_hits += 1
            self.cache.touch(line)
            self._respond_read_after(self.p.cache_hit_ns, msg)
        elif line in self._pending:
            # Fill already on its way; piggyback instead of a second access.
            self.stats.demand_hits += 1
            self._pending[line].waiters.append(msg)
        else:
            self.stats.demand_misses += 1
            self._pending[line] = _Pending(prefetch=False, waiters=[msg])
            self._demand_q.append(_MediaCmd("fill", lines=(line,)))
            self._kick_media()

    def _handle_write(self, msg: FlitMsg, value: int) -> None:
        self.stats.writes += 1
        self.image[msg.hpa] = value
        self._demand_q.append(_MediaCmd("write", msg=msg))
        self._kick_media()

    def _handle_specrd(self, msg: FlitMsg) -> None:
        self.stats.specrd_received += 1
        self._release_slot()  # hints carry no response; slot frees here
        if self.cache is None:
            return
        start, length = decode_specrd(msg.spec_word())
        needed = []
        for line in range(start, start + length, self.cache.line_size):
            if not self.cache.lookup(line) and line not in self._pending:
                needed.append(line)
        if not needed:
            return
        if len(self._prefetch_q) >= self.p.prefetch_depth:
            self.stats.prefetch_dropped += 1
            return
        for line in needed:
            self._pending[line] = _Pending(prefetch=True)
        self.stats.prefetch_cmds += 1
        self._prefetch_q.append(_MediaCmd("prefetch", lines=tuple(needed)))
        self._kick_media()

    # -- media --------------------------------------------------------------

    def _read_latency(self, nbytes: int) -> int:
        return self.p.read_ns + int(nbytes / self.p.bytes_per_ns)

    def _write_latency(self, nbytes: int) -> int:
        return self.p.write_ns + int(nbytes / self.p.bytes_per_ns)

    def _kick_media(self) -> None:
        if self._media_busy:
            return
        if self._gc_pending:
            self._start_gc()
            return
        if self._demand_q:
            cmd = self._demand_q.popleft()
        elif self._prefetch_q:
            cmd = self._prefetch_q.popleft()
        else:
            return
        self._media_busy = True
        if cmd.kind == "write":
            latency = self._write_latency(cmd.msg.payload_len)
        elif cmd.kind == "read64":
            latency = self._read_latency(cmd.msg.payload_len)
        else:
            latency = self._read_latency(len(cmd.lines) * self.cache.line_size)
        self.engine.after(latency, lambda: self._media_done(cmd))

    def _media_done(self, cmd: _MediaCmd) -> None:
        if cmd.kind == "write":
            self.account_write(cmd.msg.payload_len)
            self._respond_write(cmd.msg)
        elif cmd.kind == "read64":
            self._respond_read_after(0, cmd.msg)
        else:
            for line in cmd.lines:
                pending = self._pending.pop(line)
                self.cache.fill(line)
                if pending.prefetch:
                    self.stats.prefetch_fills += 1
                for waiter in pending.waiters:
                    self._respond_read_after(self.p.cache_hit_ns, waiter)
        self._media_busy = False
        self._kick_media()

    def account_write(self, nbytes: int) -> None:
        """Accumulate media write volume; schedules a GC on threshold crossing."""
        self.stats.bytes_written += nbytes
        if not self.p.runs_gc:
            return
        self._written_since_gc += nbytes
        if self._written_since_gc >= self._gc_threshold:
            # Announced before the collection itself is scheduled; DevLoad
            # reports severe from this point on.
            self._gc_pending = True
            self._written_since_gc = 0

    def _start_gc(self) -> None:
        self._gc_pending = False
        self._gc_active = True
        self._media_busy = True
        start = self.engine.now
        end = start + self.p.gc.duration_ns
        self.stats.gc_windows.append((start, end))
        self.engine.at(end, self._gc_done)

    def _gc_done(self) -> None:
        self._gc_active = False
        self._media_busy = False
        self._kick_media()

    # -- responses ----------------------------------------------------------

    def _respond_read_after(self, delay: int, msg: FlitMsg) -> None:
        def send() -> None:
            resp = FlitMsg(MsgKind.RD_RESP, msg.hpa, 64, msg.tag, self.devload())
            value = self.image.get(msg.hpa, 0)
            self._release_slot()
            self.respond(resp, value)
        self.engine.after(delay, send)

    def _respond_write(self, msg: FlitMsg) -> None:
        resp = FlitMsg(MsgKind.WR_RESP, msg.hpa, 0, msg.tag, self.devload())
        self._release_slot()
        self.respond(resp, 0)

    # -- inspection ---------------------------------------------------------

    @property
    def gc_count(self) -> int:
        return len(self.stats.gc_windows)

    def final_value(self, hpa: int) -> int:
        return self.image.get(hpa, 0)
