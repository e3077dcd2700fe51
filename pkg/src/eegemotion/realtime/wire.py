"""Framed little-endian EEG stream.

Once per connection (or capture file)::

    magic      4 bytes  b"EEG1"
    fs         u32      sampling rate in Hz
    n_channels u16
    names      n_channels x (u16 byte length, UTF-8 bytes)

then repeated frames::

    seq        u64      frame counter, +1 per frame
    t_us       u64      capture time in microseconds (monotonic clock)
    samples    f32 x n_channels, microvolts
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterator

import numpy as np

MAGIC = b"EEG1"
_HEAD = struct.Struct("<4sIH")
_NAME_LEN = struct.Struct("<H")
_FRAME_HEAD = struct.Struct("<QQ")


class WireFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


@dataclass(frozen=True)
class StreamHeader:
    fs: int
    channels: tuple[str, ...]

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def frame_size(self) -> int:
        return _FRAME_HEAD.size + 4 * self.n_channels


@dataclass(frozen=True, eq=False)
class StreamFrame:
    seq: int
    t: float
    samples: np.ndarray = field(repr=False)


def encode_header(header: StreamHeader) -> bytes:
    parts = [_HEAD.pack(MAGIC, int(header.fs), header.n_channels)]
    for name in header.channels:
        raw = name.encode("utf-8")
        parts.append(_NAME_LEN.pack(len(raw)) + raw)
    return b"".join(parts)


def encode_frame(frame: StreamFrame) -> bytes:
    t_us = int(round(frame.t * 1e6))
    return _FRAME_HEAD.pack(frame.seq, t_us) + np.asarray(frame.samples, dtype="<f4").tobytes()


class StreamDecoder:
    """Incremental decoder; feed bytes as they arrive and collect items."""

    def __init__(self):
        self._buf = bytearray()
        self._consumed = 0  # absolute offset of _buf[0]
        self.header: StreamHeader | None = None

    @property
    def offset(self) -> int:
        return self._consumed

    def feed(self, data: bytes) -> list:
        self._buf += data
        out = []
        if self.header is None:
            h = self._try_header()
            if h is None:
                return out
            out.append(h)
        size = self.header.frame_size
        n_ch = self.header.n_channels
        pos = 0
        while len(self._buf) - pos >= size:
            seq, t_us = _FRAME_HEAD.unpack_from(self._buf, pos)
            samples = np.frombuffer(bytes(self._buf[pos + 16 : pos + size]), dtype="<f4", count=n_ch).astype(np.float64)
            if not np.all(np.isfinite(samples)):
                raise WireFormatError("non-finite sample", self._consumed + pos + 16)
            out.append(StreamFrame(seq, t_us / 1e6, samples))
            pos += size
        del self._buf[:pos]
        self._consumed += pos
        return out

    def _try_header(self) -> StreamHeader | None:
        buf = self._buf
        if len(buf) < _HEAD.size:
            if len(buf) >= 4 and bytes(buf[:4]) != MAGIC:
                raise WireFormatError("bad magic", self._consumed)
            return None
        magic, fs, n = _HEAD.unpack_from(buf, 0)
        if magic != MAGIC:
            raise WireFormatError("bad magic", self._consumed)
        if fs == 0 or n == 0:
            raise WireFormatError("header needs fs > 0 and at least one channel", self._consumed + 4)
        pos = _HEAD.size
        names = []
        for _ in range(n):
            if len(buf) < pos + 2:
                return None
            (ln,) = _NAME_LEN.unpack_from(buf, pos)
            if len(buf) < pos + 2 + ln:
                return None
            try:
                names.append(bytes(buf[pos + 2 : pos + 2 + ln]).decode("utf-8"))
            except UnicodeDecodeError:
                raise WireFormatError("channel name is not UTF-8", self._consumed + pos + 2) from None
            pos += 2 + ln
        self.header = StreamHeader(int(fs), tuple(names))
        del self._buf[:pos]
        self._consumed += pos
        return self.header

    def finish(self) -> None:
        """Raise if the stream ended inside a header or frame."""
        if self.header is None:
            raise WireFormatError("stream ended before a complete header", self._consumed + len(self._buf) if self._buf else self._consumed)
        if self._buf:
            raise WireFormatError(f"truncated frame ({len(self._buf)} of {self.header.frame_size} bytes)", self._consumed)


def iter_stream(fh: BinaryIO, chunk: int = 65536) -> Iterator:
    """Yield the header and then frames from a binary file or socket file."""
    dec = StreamDecoder()
    while True:
        data = fh.read(chunk)
        if not data:
            break
        yield from dec.feed(data)
    dec.finish()


def write_capture(fh: BinaryIO, header: StreamHeader, frames) -> None:
    fh.write(encode_header(header))
    for fr in frames:
        fh.write(encode_frame(fr))


def frames_from_matrix(samples: np.ndarray, fs: float, seq0: int = 0, t0: float = 0.0) -> Iterator[StreamFrame]:
    """Frames for a [n_channels, n] matrix sampled at ``fs``."""
    samples = np.asarray(samples, dtype=np.float32)
    for i in range(samples.shape[1]):
        yield StreamFrame(seq0 + i, t0 + i / fs, samples[:, i].astype(np.float64))
