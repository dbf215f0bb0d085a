"""Broadcast frame codec, CRC-16 payload integrity and link timing arithmetic.

Wire layout (13 bytes, 14 when a retransmitter tag is appended)::

    offset  size  field
    0       1     preamble          0xAA
    1       4     access address    D6 BE 89 8E (0x8E89BED6, LSB first)
    5       2     header            02 03 (non-connectable advert, 3-byte payload)
    7       1     state code        1..13, binary
    8       2     payload CRC-16    CCITT-FALSE of the state byte, big-endian
    10      3     link CRC-24       over header + payload, big-endian
    13      1     retransmitter tag (optional, outside both CRCs)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

from .intersection import NUMBER_OF_STATES

PREAMBLE = b"\xaa"
ACCESS_ADDRESS = bytes.fromhex("d6be898e")
HEADER = bytes([0x02, 0x03])

FRAME_SIZE = 13
TAGGED_FRAME_SIZE = 14
PAYLOAD_SLICE = slice(7, 10)
LINK_CRC_SLICE = slice(10, 13)


class FrameError(ValueError):
    pass


class FrameLengthError(FrameError):
    pass


class IntegrityError(FrameError):
    """Frame failed a checksum or sync-word check and must be discarded."""


class StateRangeError(ValueError):
    pass


def _make_table(poly: int, width: int) -> list[int]:
    top = 1 << (width - 1)
    mask = (1 << width) - 1
    table = []
    for byte in range(256):
        reg = byte << (width - 8)
        for _ in range(8):
            reg = ((reg << 1) ^ poly) if reg & top else (reg << 1)
        table.append(reg & mask)
    return table


_CRC16_TABLE = _make_table(0x1021, 16)
_CRC24_TABLE = _make_table(0x00065B, 24)


def crc16(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xorout."""
    crc = 0xFFFF
    for byte in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC16_TABLE[(crc >> 8) ^ byte]
    return crc


def crc24(data: bytes) -> int:
    # poly 0x00065B, init 0x555555, MSB first
    crc = 0x555555
    for byte in data:
        crc = ((crc << 8) & 0xFFFFFF) ^ _CRC24_TABLE[(crc >> 16) ^ byte]
    return crc


class DecodedFrame(NamedTuple):
    state_id: int
    tag: Optional[int]
    payload_crc: int


def encode_frame(state_id: int, *, access_address: bytes = ACCESS_ADDRESS,
                 header: bytes = HEADER) -> bytes:
    if not isinstance(state_id, int) or not 1 <= state_id <= NUMBER_OF_STATES:
        raise StateRangeError(f"state {state_id!r} outside 1..{NUMBER_OF_STATES}")
    if len(access_address) != 4 or len(header) != 2:
        raise FrameError("access address must be 4 bytes and header 2 bytes")
    state = bytes([state_id])
    payload = state + crc16(state).to_bytes(2, "big")
    link = crc24(header + payload).to_bytes(3, "big")
    return PREAMBLE + access_address + header + payload + link


def decode_frame(frame: bytes, *, access_address: bytes = ACCESS_ADDRESS) -> DecodedFrame:
    """Validate and unpack a received frame.

    Raises :class:`FrameLengthError` for anything other than 13 or 14 bytes and
    :class:`IntegrityError` when the sync word, link CRC or payload CRC does not
    verify, or the state code is outside the table.
    """
    frame = bytes(frame)
    if len(frame) not in (FRAME_SIZE, TAGGED_FRAME_SIZE):
        raise FrameLengthError(f"frame is {len(frame)} bytes, expected {FRAME_SIZE} or {TAGGED_FRAME_SIZE}")
    if frame[:1] != PREAMBLE or frame[1:5] != access_address:
        raise IntegrityError("preamble/access address mismatch")
    payload = frame[PAYLOAD_SLICE]
    if crc24(frame[5:10]) != int.from_bytes(frame[LINK_CRC_SLICE], "big"):
        raise IntegrityError("link CRC mismatch")
    received = int.from_bytes(payload[1:3], "big")
    if crc16(payload[:1]) != received:
        raise IntegrityError("payload CRC mismatch")
    state_id = payload[0]
    if not 1 <= state_id <= NUMBER_OF_STATES:
        raise IntegrityError(f"state code {state_id} outside 1..{NUMBER_OF_STATES}")
    tag = frame[13] if len(frame) == TAGGED_FRAME_SIZE else None
    return DecodedFrame(state_id, tag, received)


def tag_frame(frame: bytes, retransmitter_id: int) -> bytes:
    frame = bytes(frame)
    if len(frame) == TAGGED_FRAME_SIZE:
        raise FrameError("frame already carries a retransmitter tag")
    if len(frame) != FRAME_SIZE:
        raise FrameLengthError(f"frame is {len(frame)} bytes, expected {FRAME_SIZE}")
    if not 0 <= retransmitter_id <= 0xFF:
        raise ValueError("retransmitter id must fit in one byte")
    decode_frame(frame)
    return frame + bytes([retransmitter_id])


@dataclass(frozen=True)
class LinkTimingParams:
    bitrate: float = 1_000_000.0  # bit/s
    ack_time: float = 80.0  # us, empty acknowledgement packet
    inter_frame_space: float = 150.0  # us

    def __post_init__(self):
        if min(self.bitrate, self.ack_time, self.inter_frame_space) <= 0:
            raise ValueError("link timing parameters must be strictly positive")


DEFAULT_TIMING = LinkTimingParams()


def tx_time(frame_bytes: int, params: LinkTimingParams = DEFAULT_TIMING) -> float:
    """Air time of ``frame_bytes`` bytes in microseconds."""
    if frame_bytes <= 0:
        raise ValueError("frame size must be positive")
    return frame_bytes * 8 * 1_000_000 / params.bitrate


def effective_throughput(payload_bits: float, frame_time: float,
                         params: LinkTimingParams = DEFAULT_TIMING) -> float:
    """Payload bits per microsecond over one frame + IFS + ack + IFS exchange."""
    if payload_bits < 0 or frame_time <= 0:
        raise ValueError("payload bits must be >= 0 and frame time > 0")
    return payload_bits / (params.ack_time + params.inter_frame_space + frame_time + params.inter_frame_space)
