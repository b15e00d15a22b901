"""GPU-side system model: memory map, HDM decode and the last-level cache.

The memory map is built by a modeled enumeration step: GPU-local memory
sits at address zero, the host-facing PCIe window above it, and one HDM
region per expansion port above that, assigned contiguously unless a config
entry pins an explicit base.

The LLC is set-associative, write-back, LRU. Demand requests equal the
line size (64B), so store misses allocate without fetching and a dirty
eviction is the only downstream write traffic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .config import ConfigError, EndpointParams, LlcParams
from .protocol import REQ_GRAIN


class ReqKind(Enum):
    LOAD = "load"
    STORE = "store"


@dataclass(slots=True)
class MemRequest:
    kind: ReqKind
    hpa: int
    issue_time: int
    tag: int
    sm_id: int = 0
    size: int = REQ_GRAIN
    value: int = 0  # store payload / load return slot, for integrity checks

    def __post_init__(self) -> None:
        if self.size != REQ_GRAIN or self.hpa % REQ_GRAIN:
            raise ValueError(f"requests are 64B-aligned 64B ops, got {self.hpa:#x}")


class Target(Enum):
    GPU_LOCAL = "GPU_LOCAL"
    PCIE_EP_HOST = "PCIE_EP_HOST"
    CXL_PORT = "CXL_PORT"


@dataclass(frozen=True)
class Region:
    base: int
    size: int
    target: Target
    port: Optional[int] = None  # CXL_PORT only

    @property
    def end(self) -> int:
        return self.base + self.size

    def describe(self) -> dict:
        name = self.target.value if self.port is None else f"CXL_PORT({self.port})"
        return {"base": self.base, "size": self.size, "target": name}


class UnmappedAddress(Exception):
    def __init__(self, hpa: int):
        super().__init__(f"no region maps hpa {hpa:#x}")
        self.hpa = hpa


class MemoryMap:
    def __init__(self, regions: list[Region]):
        regions = sorted(regions, key=lambda r: r.base)
        for a, b in zip(regions, regions[1:]):
            if a.end > b.base:
                raise ConfigError(
                    f"regions overlap: [{a.base:#x},{a.end:#x}) and [{b.base:#x},{b.end:#x})")
        self.regions = regions

    def decode(self, hpa: int) -> tuple[Region, int]:
        """Route an address to its owning region and device offset."""
        for region in self.regions:
            if region.base <= hpa < region.end:
                return region, hpa - region.base
        raise UnmappedAddress(hpa)

    def region_for(self, target: Target, port: Optional[int] = None) -> Region:
        for region in self.regions:
            if region.target is target and region.port == port:
                return region
        raise ConfigError(f"no region with target {target.value} port {port}")

    def describe(self) -> list[dict]:
        return [r.describe() for r in self.regions]


def enumerate_endpoints(endpoints: list[EndpointParams], local_bytes: int,
                        host_bytes: int) -> MemoryMap:
    """Modeled enumeration: assign HDM ranges and build the decoder map."""
    regions = [Region(0, local_bytes, Target.GPU_LOCAL)]
    if host_bytes:
        regions.append(Region(local_bytes, host_bytes, Target.PCIE_EP_HOST))
    next_base = local_bytes + host_bytes
    seen_bases = set()
    for idx, ep in enumerate(endpoints):
        base = ep.base if ep.base is not None else next_base
        if base in seen_bases:
            raise ConfigError(f"endpoints[{idx}]: duplicate HDM base {base:#x}")
        seen_bases.add(base)
        regions.append(Region(base, ep.size_bytes, Target.CXL_PORT, port=idx))
        next_base = max(next_base, base + ep.size_bytes)
    return MemoryMap(regions)


@dataclass
class _PendingLine:
    # (callback, value override) pairs; the override is the newest merged
    # store at the time the load arrived, so merge order respects program order
    waiters: list = field(default_factory=list)
    store_value: Optional[int] = None


class Llc:
    """Set-associative write-back LRU cache in front of the system bus.

    Misses to in-flight lines merge onto the pending fill instead of issuing
    a second downstream read. Values are tracked per line so loads return
    the newest store payload.
    """

    def __init__(self, params: LlcParams):
        self.line = params.line
        self.ways = params.ways
        self.sets = max(1, params.capacity // (params.line * params.ways))
        self.hit_ns = params.hit_ns
        # per set: {line_addr: [value, dirty]} in LRU order (oldest first)
        self._sets: list[dict[int, list]] = [dict() for _ in range(self.sets)]
        self._pending: dict[int, _PendingLine] = {}
        self.hits = 0
        self.misses = 0
        self.writebacks = 0

    def _set_for(self, line_addr: int) -> dict:
        return self._sets[(line_addr // self.line) % self.sets]

    def lookup_value(self, addr: int) -> Optional[int]:
        """Value a load would observe right now, or None if not resident."""
        entry = self._set_for(addr).get(addr)
        return entry[0] if entry else None

    def access_load(self, addr: int, on_value: Callable[[int], None]):
        """Returns None on a hit (on_value called inline) or 'miss'/'merge'."""
        ways = self._set_for(addr)
        entry = ways.get(addr)
        if entry is not None:
            self.hits += 1
            ways[addr] = ways.pop(addr)  # LRU touch
            on_value(entry[0])
            return None
        self.misses += 1
        pending = self._pending.get(addr)
        if pending is not None:
            pending.waiters.append((on_value, pending.store_value))
            return "merge"
        self._pending[addr] = _PendingLine(waiters=[(on_value, None)])
        return "miss"

    def access_store(self, addr: int, value: int) -> Optional[tuple[int, int]]:
        """Apply a full-line store; returns a (addr, value) writeback or None."""
        ways = self._set_for(addr)
        entry = ways.get(addr)
        if entry is not None:
            self.hits += 1
            entry[0] = value
            entry[1] = True
            ways[addr] = ways.pop(addr)
            return None
        self.misses += 1
        pending = self._pending.get(addr)
        if pending is not None:
            pending.store_value = value  # lands when the fill returns
            return None
        # Full-line store: allocate without fetching.
        return self._insert(ways, addr, value, dirty=True)

    def fill(self, addr: int, value: int) -> tuple[Optional[tuple[int, int]], list]:
        """Complete a pending demand fill; returns (writeback, waiters_with_value)."""
        pending = self._pending.pop(addr)
        if pending.store_value is not None:
            value_now = pending.store_value
            dirty = True
        else:
            value_now = value
            dirty = False
        writeback = self._insert(self._set_for(addr), addr, value_now, dirty)
        waiters = [(cb, value if override is None else override)
                   for cb, override in pending.waiters]
        return writeback, waiters

    def _insert(self, ways: dict, addr: int, value: int, dirty: bool):
        writeback = None
        if len(ways) >= self.ways:
            victim_addr, victim = next(iter(ways.items()))
            del ways[victim_addr]
            if victim[1]:
                self.writebacks += 1
                writeback = (victim_addr, victim[0])
        ways[addr] = [value, dirty]
        return writeback

    def drain_dirty(self) -> list[tuple[int, int]]:
        """Flush every dirty line; used when a run finishes."""
        out = []
        for ways in self._sets:
            for addr, (value, dirty) in ways.items():
                if dirty:
                    out.append((addr, value))
                    ways[addr][1] = False
        return out

    @property
    def accesses(self) -> int:
        return self.hits + self.misses
