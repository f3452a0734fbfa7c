"""Wire framing and the transcript record.

Frames are length-prefixed: 4-byte big-endian payload length, 1-byte
message type, payload. The transcript records every frame with its
information content in bits (which can be smaller than the wire size:
the confirmation and activation flags carry 1 bit in a 1-byte payload).

The post-measurement leakage ledger counts the syndrome, the error
correction hash, the two authentication tags, the activation tag and
the two single-bit flags: m + 64 + 64 + 1 + 64 + 1 + 64 = m + 258 bits.
Basis and round-type announcements are recorded but accounted
separately, as the security analysis conditions on them explicitly.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import List, Tuple


class FrameType(enum.IntEnum):
    ROUND_T = 1
    BASES_X = 2
    SYNDROME = 3
    HASH_EC = 4
    TAG_B = 5
    CONFIRM_C = 6
    TAG_A = 7
    FLAG_F = 8
    TAG_F = 9
    # engine control frame, so the peer learns a typed abort reason;
    # aborted runs produce no key and are excluded from the leakage ledger
    ABORT = 10


LEAKAGE_FRAME_TYPES = frozenset(
    {
        FrameType.SYNDROME,
        FrameType.HASH_EC,
        FrameType.TAG_B,
        FrameType.CONFIRM_C,
        FrameType.TAG_A,
        FrameType.FLAG_F,
        FrameType.TAG_F,
    }
)

HEADER = struct.Struct(">IB")
MAX_PAYLOAD = 1 << 30


@dataclass(frozen=True)
class MessageFrame:
    msg_type: FrameType
    payload: bytes

    def encode(self) -> bytes:
        return HEADER.pack(len(self.payload), int(self.msg_type)) + self.payload


def decode_header(data: bytes) -> Tuple[int, FrameType]:
    length, raw_type = HEADER.unpack(data)
    if length > MAX_PAYLOAD:
        raise ValueError(f"payload length {length} exceeds maximum")
    try:
        return length, FrameType(raw_type)
    except ValueError as exc:
        raise ValueError(f"unknown frame type {raw_type}") from exc


@dataclass
class Transcript:
    """Ordered record of (direction, type, wire bytes, information bits)."""

    frames: List[Tuple[str, FrameType, int, int]] = field(default_factory=list)

    def record(self, direction: str, frame: MessageFrame, info_bits: int) -> None:
        self.frames.append((direction, frame.msg_type, len(frame.payload), info_bits))

    @property
    def leakage_bits(self) -> int:
        return sum(
            bits for (_, ftype, _, bits) in self.frames
            if ftype in LEAKAGE_FRAME_TYPES
        )

    def write_log(self, path, ledger: dict) -> None:
        """One `dir type bytes` line per frame plus a final ledger block."""
        with open(path, "w") as f:
            for direction, ftype, nbytes, _ in self.frames:
                f.write(f"{direction} {ftype.name} {nbytes}\n")
            f.write("--- ledger ---\n")
            for key, value in ledger.items():
                f.write(f"{key}={value}\n")
