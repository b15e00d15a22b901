"""Host-runtime page migration baselines.

Models the two fault-mediated expansion paths: a unified-memory style one
backed by host DRAM and a direct-storage one backed by SSD media. Both
share the same machinery; only the backing transfer differs. A fault costs
the host intervention time, an optional dirty-victim writeback, and the
page transfer; faults serialize through a single runtime server queue, so
fault-heavy phases collapse the same way on both paths.
"""

from __future__ import annotations

from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .config import EndpointParams, LinkParams, UvmParams
from .engine import Engine
from .fabric import MemRequest, ReqKind


@dataclass
class PageStats:
    accesses: int = 0
    resident_hits: int = 0
    faults: int = 0
    dirty_writebacks: int = 0
    fault_latencies: list[int] = field(default_factory=list)
    merged_latencies: list[int] = field(default_factory=list)  # joined an in-flight fault
    resident_latencies: list[int] = field(default_factory=list)


class PageRuntime:
    """On-demand page migration with an LRU-managed GPU residency budget."""

    def __init__(self, engine: Engine, params: UvmParams, link: LinkParams,
                 page_budget: int, local_read_ns: int, local_write_ns: int,
                 storage: Optional[EndpointParams] = None):
        self.engine = engine
        self.p = params
        self.link = link
        self.page_budget = max(1, page_budget)
        self.local_read_ns = local_read_ns
        self.local_write_ns = local_write_ns
        self.storage = storage  # None: host-DRAM backing; else SSD media

        self.resident: OrderedDict[int, bool] = OrderedDict()  # page -> dirty
        self._pending: dict[int, list] = {}
        self._fault_q: deque[int] = deque()
        self._server_busy = False
        self._page_values: dict[int, dict[int, int]] = {}
        self._backing: dict[int, int] = {}
        self.stats = PageStats()

    # -- access path ----------------------------------------------------------

    def access(self, req: MemRequest,
               complete: Callable[[MemRequest, int], None]) -> None:
        self.stats.accesses += 1
        page = req.hpa // self.p.page_bytes
        if page in self.resident:
            self.stats.resident_hits += 1
            self.resident.move_to_end(page)
            self._serve_local(req, complete, bucket="resident")
            return
        waiter = (req, complete)
        if page in self._pending:
            self._pending[page].append(waiter)
        else:
            self.stats.faults += 1
            self._pending[page] = [waiter]
            self._fault_q.append(page)
            self._kick_server()

    def _serve_local(self, req: MemRequest,
                     complete: Callable[[MemRequest, int], None],
                     bucket: str) -> None:
        page = req.hpa // self.p.page_bytes
        if req.kind is ReqKind.STORE:
            self.resident[page] = True
            self._page_values.setdefault(page, {})[req.hpa] = req.value
            latency = self.local_write_ns
            value = req.value
        else:
            latency = self.local_read_ns
            values = self._page_values.get(page, {})
            value = values.get(req.hpa, self._backing.get(req.hpa, 0))
        issued = req.issue_time

        series = {"resident": self.stats.resident_latencies,
                  "fault": self.stats.fault_latencies,
                  "merged": self.stats.merged_latencies}[bucket]

        def done() -> None:
            series.append(self.engine.now - issued)
            complete(req, value)

        self.engine.after(latency, done)

    # -- fault service ------------------------------------------------------------

    def _transfer_ns(self, nbytes: int) -> int:
        return self.link.pcie_hop_ns + int(nbytes / self.link.bytes_per_ns)

    def _backing_read_ns(self, nbytes: int) -> int:
        if self.storage is None:
            return self._transfer_ns(nbytes)
        media = self.storage.read_ns + int(nbytes / self.storage.bytes_per_ns)
        return media + self._transfer_ns(nbytes)  # media read, then DMA to GPU

    def _kick_server(self) -> None:
        if self._server_busy or not self._fault_q:
            return
        self._server_busy = True
        page = self._fault_q.popleft()

        cost = self.p.intervention_ns
        if len(self.resident) >= self.page_budget:
            victim, dirty = self.resident.popitem(last=False)
            spilled = self._page_values.pop(victim, {})
            if dirty:
                self.stats.dirty_writebacks += 1
                self._backing.update(spilled)
                cost += self._transfer_ns(self.p.page_bytes)
        cost += self._backing_read_ns(self.p.page_bytes)
        self.engine.after(cost, lambda: self._fault_done(page))

    def _fault_done(self, page: int) -> None:
        self.resident[page] = False
        self._page_values.setdefault(page, {})
        for idx, (req, complete) in enumerate(self._pending.pop(page)):
            self._serve_local(req, complete, bucket="fault" if idx == 0 else "merged")
        self._server_busy = False
        self._kick_server()

    # -- accounting -------------------------------------------------------------------

    def final_value(self, hpa: int) -> int:
        page = hpa // self.p.page_bytes
        if page in self.resident:
            values = self._page_values.get(page, {})
            if hpa in values:
                return values[hpa]
        return self._backing.get(hpa, 0)
