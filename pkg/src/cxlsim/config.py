"""Scenario configuration: schema, defaults, and validation.

A scenario is described by a JSON document with a ``schema_version`` field.
Every knob has a default; a config file only needs to override what differs.
Unknown keys are rejected so typos fail loudly instead of silently running
the default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

SCHEMA_VERSION = 1

KiB = 1024
MiB = 1024 * 1024


class ConfigError(ValueError):
    """Scenario document failed validation."""


class Mode(Enum):
    GPU_DRAM = "GPU_DRAM"
    UVM = "UVM"
    GDS = "GDS"
    CXL = "CXL"
    CXL_SR = "CXL_SR"
    CXL_DS = "CXL_DS"


class MediaKind(Enum):
    DRAM_DDR5 = "DRAM_DDR5"
    OPTANE = "OPTANE"
    ZNAND = "ZNAND"
    NAND = "NAND"


class SrPolicy(Enum):
    """Speculative-read issue policy.

    WINDOW is the full mechanism (granularity feedback + address window).
    NAIVE blindly hints the 256B unit of every load. DYN adapts granularity
    but always starts the window at the request address. MAX pins the
    largest granularity with no feedback.
    """

    WINDOW = "window"
    DYN = "dyn"
    NAIVE = "naive"
    MAX = "max"


# Flash-like media run garbage collection; byte-addressable media do not.
GC_MEDIA = frozenset({MediaKind.ZNAND, MediaKind.NAND})

# Media timing presets: (read_ns, write_ns, bytes_per_ns, erase_unit).
# Class-level numbers for public device families; orderings matter here,
# absolute values are config-exposed and never asserted on.
MEDIA_PRESETS = {
    MediaKind.DRAM_DDR5: (40, 40, 44.0, None),
    MediaKind.OPTANE: (3_000, 8_000, 6.0, None),
    MediaKind.ZNAND: (12_000, 35_000, 3.0, 256 * KiB),
    MediaKind.NAND: (90_000, 300_000, 2.0, 1 * MiB),
}


@dataclass
class LlcParams:
    capacity: int = 64 * KiB
    line: int = 64
    ways: int = 4
    hit_ns: int = 4


@dataclass
class GpuParams:
    local_mem_bytes: int = 256 * KiB
    local_read_ns: int = 40
    local_write_ns: int = 40
    max_outstanding: int = 64  # one miss register per SM thread context, 8x8
    llc: LlcParams = field(default_factory=LlcParams)


@dataclass
class LinkParams:
    hop_ns: int = 40           # per direction; 80ns controller round trip
    bytes_per_ns: float = 32.0  # PCIe 5.0 x8
    pcie_hop_ns: int = 250     # host path used by the page-fault baselines


@dataclass
class GcParams:
    region_bytes: int = 64 * MiB
    threshold_frac: float = 0.25
    duration_ns: int = 2_000_000


@dataclass
class EndpointParams:
    media: MediaKind = MediaKind.DRAM_DDR5
    size_bytes: int = 64 * MiB
    base: Optional[int] = None      # explicit HDM base override, normally None
    read_ns: int = 0                # 0 means take the media preset
    write_ns: int = 0
    bytes_per_ns: float = 0.0
    erase_unit: Optional[int] = None
    cache_bytes: int = 2 * MiB      # internal DRAM cache, SSD-backed media only
    cache_line: int = 256
    cache_hit_ns: int = 100
    ingress_capacity: int = 32
    frontend_ns: int = 10
    prefetch_depth: int = 4         # pending prefetch commands before hints drop
    gc: GcParams = field(default_factory=GcParams)

    def __post_init__(self) -> None:
        preset = MEDIA_PRESETS[self.media]
        if self.read_ns <= 0:
            self.read_ns = preset[0]
        if self.write_ns <= 0:
            self.write_ns = preset[1]
        if self.bytes_per_ns <= 0:
            self.bytes_per_ns = preset[2]
        if self.erase_unit is None:
            self.erase_unit = preset[3]

    @property
    def has_cache(self) -> bool:
        return self.media is not MediaKind.DRAM_DDR5 and self.cache_bytes > 0

    @property
    def runs_gc(self) -> bool:
        return self.media in GC_MEDIA


@dataclass
class SrParams:
    policy: SrPolicy = SrPolicy.WINDOW
    queue_capacity: int = 32
    ring_capacity: int = 64
    initial_granularity: int = 256


@dataclass
class DsParams:
    slow_threshold_mult: float = 2.0  # x nominal media write latency
    buffer_bytes: int = 1 * MiB
    flush_budget: int = 4
    poll_ns: int = 10_000
    memq_reserve: int = 4             # flush yields while fewer slots are free


@dataclass
class UvmParams:
    intervention_ns: int = 500_000
    page_bytes: int = 4096
    page_budget: Optional[int] = None  # None: footprint/10 pages, min 1
    fault_servers: int = 1


@dataclass
class WorkloadParams:
    pattern: str = "Seq"               # Seq | Around | Rand
    compute_ratio: float = 0.0
    load_ratio: float = 1.0
    footprint_bytes: int = 1 * MiB
    op_count: int = 10_000
    seed: Optional[int] = None         # None: scenario seed


@dataclass
class ScenarioConfig:
    mode: Mode = Mode.CXL
    seed: int = 1
    workload: Optional[WorkloadParams] = field(default_factory=WorkloadParams)
    gpu: GpuParams = field(default_factory=GpuParams)
    link: LinkParams = field(default_factory=LinkParams)
    endpoints: list[EndpointParams] = field(default_factory=lambda: [EndpointParams()])
    sr: SrParams = field(default_factory=SrParams)
    ds: DsParams = field(default_factory=DsParams)
    uvm: UvmParams = field(default_factory=UvmParams)

    def manifest(self) -> dict[str, Any]:
        """Canonical config echo embedded in every report."""
        return {"schema_version": SCHEMA_VERSION, **_to_plain(self)}


def _to_plain(obj: Any) -> Any:
    if isinstance(obj, Enum):
        return obj.value
    if hasattr(obj, "__dataclass_fields__"):
        return {k: _to_plain(getattr(obj, k)) for k in obj.__dataclass_fields__}
    if isinstance(obj, list):
        return [_to_plain(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# Validation of the JSON document form.

def _expect(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _get_enum(enum_cls, value, where):
    try:
        return enum_cls(value)
    except ValueError:
        valid = ", ".join(e.value for e in enum_cls)
        raise ConfigError(f"{where}: {value!r} is not one of {valid}") from None


def _check_keys(doc: dict, allowed: set[str], where: str) -> None:
    unknown = set(doc) - allowed
    _expect(not unknown, f"{where}: unknown keys {sorted(unknown)}")


def _num(doc, key, where, default, minimum=None, integer=True):
    value = doc.get(key, default)
    kinds = (int,) if integer else (int, float)
    _expect(isinstance(value, kinds) and not isinstance(value, bool),
            f"{where}.{key}: expected a number, got {value!r}")
    if minimum is not None:
        _expect(value >= minimum, f"{where}.{key}: must be >= {minimum}")
    return value


def _sub(doc, key):
    value = doc.get(key, {})
    _expect(isinstance(value, dict), f"{key}: expected an object")
    return value


def _parse_workload(doc: dict, where: str = "workload") -> WorkloadParams:
    _check_keys(doc, {"pattern", "compute_ratio", "load_ratio",
                      "footprint_bytes", "op_count", "seed"}, where)
    pattern = doc.get("pattern", "Seq")
    _expect(pattern in ("Seq", "Around", "Rand"),
            f"{where}.pattern: {pattern!r} is not Seq/Around/Rand")
    wl = WorkloadParams(
        pattern=pattern,
        compute_ratio=_num(doc, "compute_ratio", where, 0.0, 0, integer=False),
        load_ratio=_num(doc, "load_ratio", where, 1.0, 0, integer=False),
        footprint_bytes=_num(doc, "footprint_bytes", where, 1 * MiB, 4096),
        op_count=_num(doc, "op_count", where, 10_000, 1),
        seed=doc.get("seed"),
    )
    _expect(wl.compute_ratio <= 1.0, f"{where}.compute_ratio: must be <= 1")
    _expect(wl.load_ratio <= 1.0, f"{where}.load_ratio: must be <= 1")
    if wl.seed is not None:
        _expect(isinstance(wl.seed, int), f"{where}.seed: expected an integer")
    return wl


def _parse_endpoint(doc: dict, idx: int) -> EndpointParams:
    where = f"endpoints[{idx}]"
    _check_keys(doc, {"media", "size_bytes", "base", "read_ns", "write_ns",
                      "bytes_per_ns", "erase_unit", "cache_bytes", "cache_line",
                      "cache_hit_ns", "ingress_capacity", "frontend_ns",
                      "prefetch_depth", "gc"}, where)
    gc_doc = _sub(doc, "gc")
    _check_keys(gc_doc, {"region_bytes", "threshold_frac", "duration_ns"}, f"{where}.gc")
    gc = GcParams(
        region_bytes=_num(gc_doc, "region_bytes", f"{where}.gc", 64 * MiB, 4096),
        threshold_frac=_num(gc_doc, "threshold_frac", f"{where}.gc", 0.25, 0.0, integer=False),
        duration_ns=_num(gc_doc, "duration_ns", f"{where}.gc", 2_000_000, 1),
    )
    base = doc.get("base")
    if base is not None:
        _expect(isinstance(base, int) and base >= 0, f"{where}.base: expected address")
    ep = EndpointParams(
        media=_get_enum(MediaKind, doc.get("media", "DRAM_DDR5"), f"{where}.media"),
        size_bytes=_num(doc, "size_bytes", where, 64 * MiB, 4096),
        base=base,
        read_ns=_num(doc, "read_ns", where, 0, 0),
        write_ns=_num(doc, "write_ns", where, 0, 0),
        bytes_per_ns=_num(doc, "bytes_per_ns", where, 0.0, 0, integer=False),
        erase_unit=doc.get("erase_unit"),
        cache_bytes=_num(doc, "cache_bytes", where, 2 * MiB, 0),
        cache_line=_num(doc, "cache_line", where, 256, 64),
        cache_hit_ns=_num(doc, "cache_hit_ns", where, 100, 1),
        ingress_capacity=_num(doc, "ingress_capacity", where, 32, 1),
        frontend_ns=_num(doc, "frontend_ns", where, 10, 1),
        prefetch_depth=_num(doc, "prefetch_depth", where, 4, 1),
        gc=gc,
    )
    _expect(ep.write_ns >= ep.read_ns or ep.media is MediaKind.DRAM_DDR5,
            f"{where}: write_ns must be >= read_ns for SSD media")
    return ep


def parse_config(doc: Any) -> ScenarioConfig:
    """Validate a JSON document and build a ScenarioConfig."""
    _expect(isinstance(doc, dict), "config root: expected an object")
    _check_keys(doc, {"schema_version", "mode", "seed", "workload", "gpu",
                      "link", "endpoints", "sr", "ds", "uvm"}, "config")
    version = doc.get("schema_version", SCHEMA_VERSION)
    _expect(version == SCHEMA_VERSION,
            f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")

    mode = _get_enum(Mode, doc.get("mode", "CXL"), "mode")
    seed = _num(doc, "seed", "config", 1, 0)

    workload = None
    if "workload" in doc and doc["workload"] is not None:
        workload = _parse_workload(_sub(doc, "workload"))

    gpu_doc = _sub(doc, "gpu")
    _check_keys(gpu_doc, {"local_mem_bytes", "local_read_ns", "local_write_ns",
                          "max_outstanding", "llc"}, "gpu")
    llc_doc = _sub(gpu_doc, "llc")
    _check_keys(llc_doc, {"capacity", "line", "ways", "hit_ns"}, "gpu.llc")
    llc = LlcParams(
        capacity=_num(llc_doc, "capacity", "gpu.llc", 64 * KiB, 64),
        line=_num(llc_doc, "line", "gpu.llc", 64, 64),
        ways=_num(llc_doc, "ways", "gpu.llc", 4, 1),
        hit_ns=_num(llc_doc, "hit_ns", "gpu.llc", 4, 0),
    )
    _expect(llc.line == 64, "gpu.llc.line: demand granularity is fixed at 64")
    gpu = GpuParams(
        local_mem_bytes=_num(gpu_doc, "local_mem_bytes", "gpu", 256 * KiB, 4096),
        local_read_ns=_num(gpu_doc, "local_read_ns", "gpu", 40, 1),
        local_write_ns=_num(gpu_doc, "local_write_ns", "gpu", 40, 1),
        max_outstanding=_num(gpu_doc, "max_outstanding", "gpu", 64, 1),
        llc=llc,
    )

    link_doc = _sub(doc, "link")
    _check_keys(link_doc, {"hop_ns", "bytes_per_ns", "pcie_hop_ns"}, "link")
    link = LinkParams(
        hop_ns=_num(link_doc, "hop_ns", "link", 40, 1),
        bytes_per_ns=_num(link_doc, "bytes_per_ns", "link", 32.0, 0.001, integer=False),
        pcie_hop_ns=_num(link_doc, "pcie_hop_ns", "link", 250, 1),
    )

    eps_doc = doc.get("endpoints", [{}])
    _expect(isinstance(eps_doc, list) and eps_doc, "endpoints: expected a non-empty list")
    endpoints = [_parse_endpoint(ep if isinstance(ep, dict) else _bad_ep(i), i)
                 for i, ep in enumerate(eps_doc)]

    sr_doc = _sub(doc, "sr")
    _check_keys(sr_doc, {"policy", "queue_capacity", "ring_capacity",
                         "initial_granularity"}, "sr")
    sr = SrParams(
        policy=_get_enum(SrPolicy, sr_doc.get("policy", "window"), "sr.policy"),
        queue_capacity=_num(sr_doc, "queue_capacity", "sr", 32, 1),
        ring_capacity=_num(sr_doc, "ring_capacity", "sr", 64, 1),
        initial_granularity=_num(sr_doc, "initial_granularity", "sr", 256, 256),
    )
    _expect(sr.initial_granularity in (256, 512, 1024),
            "sr.initial_granularity: must be 256, 512 or 1024")

    ds_doc = _sub(doc, "ds")
    _check_keys(ds_doc, {"slow_threshold_mult", "buffer_bytes", "flush_budget",
                         "poll_ns", "memq_reserve"}, "ds")
    ds = DsParams(
        slow_threshold_mult=_num(ds_doc, "slow_threshold_mult", "ds", 2.0, 1.0, integer=False),
        buffer_bytes=_num(ds_doc, "buffer_bytes", "ds", 1 * MiB, 64),
        flush_budget=_num(ds_doc, "flush_budget", "ds", 4, 1),
        poll_ns=_num(ds_doc, "poll_ns", "ds", 10_000, 1),
        memq_reserve=_num(ds_doc, "memq_reserve", "ds", 4, 0),
    )

    uvm_doc = _sub(doc, "uvm")
    _check_keys(uvm_doc, {"intervention_ns", "page_bytes", "page_budget",
                          "fault_servers"}, "uvm")
    budget = uvm_doc.get("page_budget")
    if budget is not None:
        _expect(isinstance(budget, int) and budget >= 1, "uvm.page_budget: must be >= 1")
    uvm = UvmParams(
        intervention_ns=_num(uvm_doc, "intervention_ns", "uvm", 500_000, 0),
        page_bytes=_num(uvm_doc, "page_bytes", "uvm", 4096, 64),
        page_budget=budget,
        fault_servers=_num(uvm_doc, "fault_servers", "uvm", 1, 1),
    )

    return ScenarioConfig(mode=mode, seed=seed, workload=workload, gpu=gpu,
                          link=link, endpoints=endpoints, sr=sr, ds=ds, uvm=uvm)


def _bad_ep(idx: int):
    raise ConfigError(f"endpoints[{idx}]: expected an object")


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(doc)
