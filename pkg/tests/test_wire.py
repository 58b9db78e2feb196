import struct
from types import SimpleNamespace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from palmsense.errors import ChannelOutOfRange
from palmsense.types import TactileFrame
from palmsense.wire import FRAME_SIZE, DecoderState, crc16, decode_frame, decode_stream, encode_frame


def crc16_bitwise(data: bytes) -> int:
    """Reference CRC-16/CCITT-FALSE, one bit at a time."""
    crc = 0xFFFF
    for byte in data:
        for bit in range(7, -1, -1):
            top = (crc >> 15) & 1
            crc = (crc << 1) & 0xFFFF
            if top ^ ((byte >> bit) & 1):
                crc ^= 0x1021
    return crc


channels_st = st.lists(st.integers(0, 4095), min_size=16, max_size=16)
frames_st = st.builds(TactileFrame.at, st.integers(0, 65535), channels_st)


def test_crc_check_value():
    assert crc16_bitwise(b"123456789") == 0x29B1
    assert crc16(b"123456789") == 0x29B1


def test_crc_empty_is_init():
    assert crc16(b"") == 0xFFFF


def test_crc_single_zero_octet():
    assert crc16(b"\x00") == crc16_bitwise(b"\x00")


@given(st.binary(max_size=200))
def test_crc_matches_bitwise_reference(data):
    assert crc16(data) == crc16_bitwise(data)


def test_zero_frame_header():
    raw = encode_frame(TactileFrame.at(0, [0] * 16))
    assert len(raw) == FRAME_SIZE == 38
    assert raw[:4] == bytes([0xAA, 0x55, 0x00, 0x00])


def test_full_scale_channel_packing():
    raw = encode_frame(TactileFrame.at(7, [4095] * 16))
    assert raw[4:36] == bytes([0xFF, 0x0F]) * 16
    assert struct.unpack("<H", raw[2:4])[0] == 7
    assert struct.unpack("<H", raw[36:38])[0] == crc16_bitwise(raw[2:36])


def test_encode_rejects_out_of_range():
    bogus = SimpleNamespace(sequence=0, channels=(4096,) + (0,) * 15)
    with pytest.raises(ChannelOutOfRange):
        encode_frame(bogus)
    with pytest.raises(ChannelOutOfRange):
        TactileFrame.at(0, [0] * 15 + [5000])


@given(frames_st)
def test_round_trip(frame):
    assert decode_frame(encode_frame(frame)) == frame
    frames, _ = decode_stream(encode_frame(frame))
    assert frames == [frame]


def test_two_concatenated_frames():
    a, b = TactileFrame.at(1, range(16)), TactileFrame.at(2, range(100, 116))
    frames, state = decode_stream(encode_frame(a) + encode_frame(b))
    assert frames == [a, b]
    assert state.corrupted == 0


def test_flipped_payload_bit_is_rejected():
    raw = bytearray(encode_frame(TactileFrame.at(3, [0] * 16)))
    raw[20] ^= 0x04
    assert crc16_bitwise(bytes(raw[2:36])) != struct.unpack("<H", raw[36:38])[0]
    frames, state = decode_stream(bytes(raw))
    assert frames == []
    assert state.corrupted == 1


def test_frame_split_across_calls():
    frame = TactileFrame.at(9, [1234] * 16)
    raw = encode_frame(frame)
    frames, state = decode_stream(raw[:10])
    assert frames == []
    frames, state = decode_stream(raw[10:], state)
    assert frames == [frame]


def test_sequence_unwraps_across_16_bits():
    frames_in = [TactileFrame.at(s, [0] * 16) for s in (65534, 65535, 0, 1)]
    out, _ = decode_stream(b"".join(encode_frame(f) for f in frames_in))
    assert [f.sequence for f in out] == [65534, 65535, 65536, 65537]
    assert out[-1].timestamp == pytest.approx(65537 / 200)


@given(st.binary(max_size=120).filter(lambda g: b"\xaa\x55" not in g),
       st.lists(frames_st, min_size=1, max_size=5))
def test_resync_after_garbage(garbage, frames):
    # stream order must be monotone for the unwrapped counters to match
    frames = [TactileFrame.at(i, f.channels) for i, f in enumerate(frames)]
    blob = garbage + b"".join(encode_frame(f) for f in frames)
    out, _ = decode_stream(blob)
    assert out == frames


@settings(max_examples=200)
@given(st.lists(st.binary(max_size=300), max_size=6))
def test_arbitrary_octets_never_crash_and_buffer_stays_bounded(chunks):
    state = DecoderState()
    for chunk in chunks:
        frames, state = decode_stream(chunk, state)
        assert len(state.buffer) < FRAME_SIZE
        for f in frames:
            raw = encode_frame(f)
            assert crc16(raw[2:36]) == struct.unpack("<H", raw[36:38])[0]


def test_byte_at_a_time_feed():
    frames_in = [TactileFrame.at(i, [i * 10] * 16) for i in range(4)]
    blob = b"\x00\xaa" + b"".join(encode_frame(f) for f in frames_in) + b"\xaa"
    state = DecoderState()
    out = []
    for b in blob:
        got, state = decode_stream(bytes([b]), state)
        out.extend(got)
    assert out == frames_in
