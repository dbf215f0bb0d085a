import binascii
import random

import pytest
from hypothesis import given, strategies as st

from oracles import crc16_bitwise, crc16_long_division
from pvtl.protocol import (
    ACCESS_ADDRESS,
    FRAME_SIZE,
    TAGGED_FRAME_SIZE,
    FrameError,
    FrameLengthError,
    IntegrityError,
    LinkTimingParams,
    StateRangeError,
    crc16,
    decode_frame,
    effective_throughput,
    encode_frame,
    tag_frame,
    tx_time,
)


def test_crc16_check_string():
    assert crc16(b"123456789") == 0x29B1
    assert crc16_long_division(b"123456789") == 0x29B1


def test_crc16_empty_input_is_init_value():
    assert crc16(b"") == 0xFFFF


def test_crc16_single_byte_matches_oracle():
    assert crc16(b"\x01") == crc16_long_division(b"\x01") == crc16_bitwise(b"\x01")


def test_crc16_agrees_with_oracles_on_random_strings():
    rng = random.Random(7)
    for _ in range(1000):
        data = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 64)))
        expected = crc16_long_division(data)
        assert crc16(data) == expected
        assert binascii.crc_hqx(data, 0xFFFF) == expected


@given(st.binary(max_size=200))
def test_crc16_matches_shift_register(data):
    assert crc16(data) == crc16_bitwise(data)


def test_encode_state_1_layout():
    frame = encode_frame(1)
    assert len(frame) == FRAME_SIZE == 13
    assert frame[0] == 0xAA and frame[1:5] == ACCESS_ADDRESS
    payload = frame[7:10]
    assert payload == bytes([0x01]) + crc16_long_division(b"\x01").to_bytes(2, "big")


def test_encode_state_13_first_payload_byte():
    assert encode_frame(13)[7] == 0x0D


@pytest.mark.parametrize("bad", [0, 14, -1, 255])
def test_encode_rejects_out_of_range_state(bad):
    with pytest.raises(StateRangeError):
        encode_frame(bad)


def test_golden_frames(fixtures_dir):
    for line in (fixtures_dir / "golden_frames.txt").read_text().splitlines():
        if line.startswith("#"):
            continue
        state, plain, tagged = line.split()
        state = int(state)
        assert encode_frame(state).hex() == plain
        assert tag_frame(encode_frame(state), 1).hex() == tagged
        raw = bytes.fromhex(plain)
        assert int.from_bytes(raw[8:10], "big") == crc16_long_division(bytes([state]))


@pytest.mark.parametrize("state", range(1, 14))
def test_round_trip(state):
    decoded = decode_frame(encode_frame(state))
    assert decoded.state_id == state and decoded.tag is None


def test_decode_tagged_frame():
    decoded = decode_frame(encode_frame(7) + b"\x2a")
    assert (decoded.state_id, decoded.tag) == (7, 0x2A)


def test_flipped_payload_byte_fails_integrity():
    frame = bytearray(encode_frame(7))
    frame[9] ^= 0x01
    with pytest.raises(IntegrityError):
        decode_frame(bytes(frame))


@pytest.mark.parametrize("state", range(1, 14))
def test_every_single_bit_flip_in_payload_is_detected(state):
    frame = encode_frame(state)
    for bit in range(24):
        buf = bytearray(frame)
        buf[7 + bit // 8] ^= 0x80 >> (bit % 8)
        with pytest.raises(IntegrityError):
            decode_frame(bytes(buf))


def test_payload_crc_alone_detects_single_bit_flips():
    # independent of the link-layer CRC: recompute the state CRC on the flipped payload
    for state in range(1, 14):
        payload = bytes([state]) + crc16(bytes([state])).to_bytes(2, "big")
        for bit in range(24):
            buf = bytearray(payload)
            buf[bit // 8] ^= 0x80 >> (bit % 8)
            assert crc16(bytes(buf[:1])) != int.from_bytes(buf[1:], "big")


def test_frame_length_errors():
    with pytest.raises(FrameLengthError):
        decode_frame(encode_frame(1)[:-1])
    with pytest.raises(FrameLengthError):
        decode_frame(encode_frame(1) + b"\x00\x00")


def test_wrong_access_address():
    with pytest.raises(IntegrityError):
        decode_frame(b"\xaa\x00\x00\x00\x00" + encode_frame(1)[5:])


def test_tag_frame():
    tagged = tag_frame(encode_frame(3), 0x01)
    assert len(tagged) == TAGGED_FRAME_SIZE and tagged[-1] == 0x01
    assert decode_frame(tagged).tag == 0x01


def test_tag_frame_rejects_tagged_input():
    with pytest.raises(FrameError):
        tag_frame(tag_frame(encode_frame(3), 1), 2)


@given(st.integers(1, 13), st.integers(0, 255))
def test_tag_round_trip_property(state, tag):
    decoded = decode_frame(tag_frame(encode_frame(state), tag))
    assert (decoded.state_id, decoded.tag) == (state, tag)


@given(st.binary(min_size=13, max_size=14))
def test_random_bytes_never_decode_to_out_of_range_state(data):
    try:
        decoded = decode_frame(data)
    except FrameError:
        return
    assert 1 <= decoded.state_id <= 13


def test_tx_time():
    assert tx_time(13) == 104
    assert tx_time(14) == 112
    assert tx_time(10) == 80 == LinkTimingParams().ack_time


def test_effective_throughput():
    assert effective_throughput(24, 104) == pytest.approx(24 / 484)
    assert abs(effective_throughput(24, 104) - 0.050) / 0.050 < 0.01
    assert effective_throughput(0, 104) == 0
    assert effective_throughput(24, 112) == pytest.approx(24 / 492)


def test_timing_params_must_be_positive():
    with pytest.raises(ValueError):
        LinkTimingParams(bitrate=0)
