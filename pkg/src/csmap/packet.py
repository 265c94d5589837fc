"""Bit-exact codec for the 500,000-bit experiment frame.

Field layout (MSB first within every multi-bit field)::

    guard bit      1 bit    constant 1
    sync number   16 bit    constant 0xE98A
    header        16 bit    constant 0xFFAA
    body length   32 bit    constant 499887
    source        16 bit    varies
    destination   16 bit    constant 3
    packet id     16 bit    varies
    body      499887 bit    fixed pattern

The 113 header bits plus the body make exactly 500,000 bits.  The body
pattern is not pinned down by the experiment documentation, so a frozen
PRBS-9 sequence (x^9 + x^5 + 1, seed 0x1FF) is used; BER counts are only
meaningful because every frame carries the identical body.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

GUARD_BIT = 1
SYNC_NUMBER = 0xE98A
HEADER = 0xFFAA
BODY_LENGTH = 499_887
DESTINATION = 3
FRAME_BITS = 500_000
HEADER_BITS = 113

# (name, width) in wire order; constants filled at encode time.
_FIELDS = (
    ("guard", 1),
    ("sync", 16),
    ("header", 16),
    ("body_length", 32),
    ("source", 16),
    ("destination", 16),
    ("packet_id", 16),
)

_SOURCE_OFFSET = 1 + 16 + 16 + 32
_PACKET_ID_OFFSET = _SOURCE_OFFSET + 16 + 16


class FrameError(ValueError):
    """Raised for field overflow or malformed frame bits."""


def _int_to_bits(value: int, width: int) -> np.ndarray:
    if not 0 <= value < (1 << width):
        raise FrameError(f"value {value} does not fit in {width} bits")
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


def _bits_to_int(bits: np.ndarray) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


@lru_cache(maxsize=1)
def body_pattern() -> np.ndarray:
    """The frozen body bits: a PRBS-9 period repeated to 499,887 bits."""
    state = 0x1FF
    period = np.empty(511, dtype=np.uint8)
    for i in range(511):
        feedback = ((state >> 8) ^ (state >> 4)) & 1
        period[i] = state >> 8
        state = ((state << 1) | feedback) & 0x1FF
    reps = -(-BODY_LENGTH // 511)
    out = np.tile(period, reps)[:BODY_LENGTH].copy()
    out.setflags(write=False)
    return out


@lru_cache(maxsize=1)
def _frame_template() -> np.ndarray:
    bits = np.zeros(FRAME_BITS, dtype=np.uint8)
    pos = 0
    for name, width in _FIELDS:
        value = {
            "guard": GUARD_BIT,
            "sync": SYNC_NUMBER,
            "header": HEADER,
            "body_length": BODY_LENGTH,
            "source": 0,
            "destination": DESTINATION,
            "packet_id": 0,
        }[name]
        bits[pos : pos + width] = _int_to_bits(value, width)
        pos += width
    assert pos == HEADER_BITS
    bits[HEADER_BITS:] = body_pattern()
    bits.setflags(write=False)
    return bits


def encode_frame(source: int, packet_id: int) -> np.ndarray:
    """Encode a frame; returns a fresh 500,000-element uint8 bit array."""
    bits = _frame_template().copy()
    bits[_SOURCE_OFFSET : _SOURCE_OFFSET + 16] = _int_to_bits(source, 16)
    bits[_PACKET_ID_OFFSET : _PACKET_ID_OFFSET + 16] = _int_to_bits(packet_id, 16)
    return bits


@dataclass(frozen=True)
class DecodedFrame:
    guard: int
    sync: int
    header: int
    body_length: int
    source: int
    destination: int
    packet_id: int
    body_error_count: int
    header_valid: bool


def decode_frame(bits: np.ndarray) -> DecodedFrame:
    """Parse a received frame and count body errors against the fixed pattern."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape != (FRAME_BITS,):
        raise FrameError(f"frame must be exactly {FRAME_BITS} bits, got {bits.shape}")
    pos = 0
    values = {}
    for name, width in _FIELDS:
        values[name] = _bits_to_int(bits[pos : pos + width])
        pos += width
    body_errors = int(np.count_nonzero(bits[HEADER_BITS:] != body_pattern()))
    header_valid = values["sync"] == SYNC_NUMBER and values["header"] == HEADER
    return DecodedFrame(
        guard=values["guard"],
        sync=values["sync"],
        header=values["header"],
        body_length=values["body_length"],
        source=values["source"],
        destination=values["destination"],
        packet_id=values["packet_id"],
        body_error_count=body_errors,
        header_valid=header_valid,
    )


def packet_ber(decoded: DecodedFrame) -> float:
    """Per-packet bit error rate over the body."""
    return decoded.body_error_count / BODY_LENGTH


def pack_frame(bits: np.ndarray) -> bytes:
    """Serialize the exact bit image, MSB first, to 62,500 bytes."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape != (FRAME_BITS,):
        raise FrameError(f"frame must be exactly {FRAME_BITS} bits")
    return np.packbits(bits).tobytes()


def unpack_frame(data: bytes) -> np.ndarray:
    if len(data) != FRAME_BITS // 8:
        raise FrameError(f"packed frame must be {FRAME_BITS // 8} bytes, got {len(data)}")
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def apply_bit_errors(bits: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Return a copy of ``bits`` with the given positions flipped."""
    out = bits.copy()
    if len(positions):
        out[positions] ^= 1
    return out
