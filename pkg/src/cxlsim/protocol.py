"""CXL.mem-style messages used by the simulated expansion fabric.

Demand traffic operates at 64B granularity. Speculative-read hints repurpose
the two least significant bits of the address word as a unit count, with the
remaining bits holding a 256B offset, so a single hint covers one to four
256B units. Responses carry a two-bit endpoint load field (DevLoad).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Optional

REQ_GRAIN = 64        # demand request granularity (bytes)
SPEC_UNIT = 256       # speculative-read offset unit (bytes)
SPEC_MAX_UNITS = 4


class CodecError(ValueError):
    """Message cannot be represented in the wire format."""


class MsgKind(Enum):
    MEM_RD = "MemRd"
    MEM_WR = "MemWr"
    MEM_SPEC_RD = "MemSpecRd"
    RD_RESP = "RdResp"
    WR_RESP = "WrResp"


RESPONSE_KINDS = frozenset({MsgKind.RD_RESP, MsgKind.WR_RESP})

_SPEC_LENGTHS = frozenset({SPEC_UNIT * n for n in range(1, SPEC_MAX_UNITS + 1)})


class DevLoad(IntEnum):
    """Endpoint load telemetry, two bits, ordered by severity."""

    LL = 0  # light load
    OL = 1  # optimal load
    MO = 2  # moderate overload
    SO = 3  # severe overload


def encode_devload(state: DevLoad) -> int:
    return int(state)


def decode_devload(value: int) -> DevLoad:
    if not 0 <= value < 4:
        raise CodecError(f"devload field is 2 bits, got {value}")
    return DevLoad(value)


def encode_specrd(window_start: int, window_len: int) -> int:
    """Pack a speculative-read window into its wire word.

    The word is ``(window_start / 256) << 2 | (window_len / 256 - 1)``.
    """
    if window_start < 0 or window_start % SPEC_UNIT:
        raise CodecError(f"window start {window_start:#x} not 256B-aligned")
    if window_len not in _SPEC_LENGTHS:
        raise CodecError(f"window length {window_len} not in 256..1024 by 256")
    return (window_start // SPEC_UNIT) << 2 | (window_len // SPEC_UNIT - 1)


def decode_specrd(word: int) -> tuple[int, int]:
    """Inverse of :func:`encode_specrd`; total over all 64-bit words."""
    return (word >> 2) * SPEC_UNIT, ((word & 0x3) + 1) * SPEC_UNIT


@dataclass
class FlitMsg:
    """One fabric message. Alignment invariants are checked at construction."""

    kind: MsgKind
    hpa: int
    payload_len: int
    tag: int
    devload: Optional[DevLoad] = None

    def __post_init__(self) -> None:
        if self.kind in (MsgKind.MEM_RD, MsgKind.MEM_WR):
            if self.hpa % REQ_GRAIN:
                raise CodecError(f"{self.kind.value} hpa {self.hpa:#x} not 64B-aligned")
            if self.payload_len != REQ_GRAIN:
                raise CodecError(f"{self.kind.value} payload must be 64B")
        elif self.kind is MsgKind.MEM_SPEC_RD:
            if self.hpa % SPEC_UNIT:
                raise CodecError(f"MemSpecRd hpa {self.hpa:#x} not 256B-aligned")
            if self.payload_len not in _SPEC_LENGTHS:
                raise CodecError(f"MemSpecRd payload {self.payload_len} invalid")
        if (self.devload is not None) != (self.kind in RESPONSE_KINDS):
            raise CodecError("exactly responses carry a DevLoad value")

    def spec_word(self) -> int:
        if self.kind is not MsgKind.MEM_SPEC_RD:
            raise CodecError("only MemSpecRd has a spec wire word")
        return encode_specrd(self.hpa, self.payload_len)
