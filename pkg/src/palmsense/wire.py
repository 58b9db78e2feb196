"""Binary framing for the palm's serial telemetry.

Frame layout (38 octets, little-endian)::

    0   2  sync      0xAA 0x55
    2   2  sequence  u16, wraps at 65536
    4  32  channels  16 x u16, low 12 bits significant
    36  2  crc       CRC-16/CCITT-FALSE over octets 2..35

The wire carries no clock. Decoded frames are stamped with
``sequence / 200`` seconds after unwrapping the 16-bit counter.
"""

from __future__ import annotations

import binascii
import struct
from dataclasses import dataclass, field

from .errors import ChannelOutOfRange
from .types import ADC_MAX, SAMPLE_RATE_HZ, TactileFrame

SYNC = b"\xaa\x55"
FRAME_SIZE = 38
_BODY = struct.Struct("<H16H")
_CRC = struct.Struct("<H")
_SEQ_MOD = 1 << 16


def crc16(payload: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor."""
    # crc_hqx is the unreflected 0x1021 CRC with a caller-supplied init value
    return binascii.crc_hqx(bytes(payload), 0xFFFF)


def encode_frame(frame: TactileFrame) -> bytes:
    if any(c > ADC_MAX or c < 0 for c in frame.channels):
        raise ChannelOutOfRange(f"channel values must lie in [0, {ADC_MAX}]")
    body = _BODY.pack(frame.sequence % _SEQ_MOD, *frame.channels)
    return SYNC + body + _CRC.pack(crc16(body))


def encode_frames(frames) -> bytes:
    return b"".join(encode_frame(f) for f in frames)


def _parse(raw: bytes) -> tuple[int, tuple[int, ...]] | None:
    """Validate one 38-octet candidate; return (raw sequence, channels) or None."""
    body = raw[2:36]
    if _CRC.unpack_from(raw, 36)[0] != crc16(body):
        return None
    seq, *channels = _BODY.unpack(body)
    if any(c > ADC_MAX for c in channels):
        return None
    return seq, tuple(channels)


def decode_frame(raw: bytes, rate: float = SAMPLE_RATE_HZ) -> TactileFrame:
    """Decode exactly one frame without any stream context."""
    raw = bytes(raw)
    if len(raw) != FRAME_SIZE or raw[:2] != SYNC:
        raise ValueError("not a 38-octet frame starting with the sync pattern")
    parsed = _parse(raw)
    if parsed is None:
        raise ValueError("frame failed CRC or range check")
    seq, channels = parsed
    return TactileFrame(seq, seq / rate, channels)


@dataclass
class DecoderState:
    """Streaming state carried between :func:`decode_stream` calls.

    ``buffer`` never holds more than one frame's worth of octets between calls.
    """

    buffer: bytearray = field(default_factory=bytearray)
    rate: float = SAMPLE_RATE_HZ
    frames_decoded: int = 0
    corrupted: int = 0
    skipped_octets: int = 0
    last_sequence: int | None = None

    def _unwrap(self, raw_seq: int) -> int:
        if self.last_sequence is None:
            seq = raw_seq
        else:
            seq = self.last_sequence + (raw_seq - self.last_sequence) % _SEQ_MOD
        self.last_sequence = seq
        return seq


def decode_stream(octets: bytes, state: DecoderState | None = None) -> tuple[list[TactileFrame], DecoderState]:
    """Decode every complete, CRC-valid frame in ``octets``.

    Partial frames at the end are kept in ``state`` for the next call.
    Candidates that fail verification are counted in ``state.corrupted`` and
    the scan resumes one octet later.
    """
    if state is None:
        state = DecoderState()
    buf = state.buffer
    buf.extend(octets)
    frames = []
    pos = 0
    n = len(buf)
    while True:
        start = buf.find(SYNC, pos)
        if start < 0:
            # a trailing 0xAA may be the first half of a sync pattern
            keep = n - 1 if n > pos and buf[n - 1] == SYNC[0] else n
            state.skipped_octets += keep - pos
            pos = keep
            break
        state.skipped_octets += start - pos
        pos = start
        if n - pos < FRAME_SIZE:
            break
        parsed = _parse(bytes(buf[pos:pos + FRAME_SIZE]))
        if parsed is None:
            state.corrupted += 1
            state.skipped_octets += 1
            pos += 1
            continue
        raw_seq, channels = parsed
        seq = state._unwrap(raw_seq)
        frames.append(TactileFrame(seq, seq / state.rate, channels))
        state.frames_decoded += 1
        pos += FRAME_SIZE
    del buf[:pos]
    return frames, state


def iter_decode(chunks, state: DecoderState | None = None):
    """Yield frames from an iterable of byte chunks."""
    if state is None:
        state = DecoderState()
    for chunk in chunks:
        frames, state = decode_stream(chunk, state)
        yield from frames

