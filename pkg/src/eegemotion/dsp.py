"""Preprocessing: resampling, band-pass filtering, re-referencing, windowing.

Offline transforms filter forward-backward (zero phase) unless ``causal=True``;
:class:`StreamingFilter` is the stateful causal counterpart for live data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy import signal

from .core import DomainError

BANDPASS_ORDER = 4
ANTIALIAS_ORDER = 8
ANTIALIAS_FRACTION = 0.4


class UnsupportedRateError(DomainError):
    pass


@dataclass(frozen=True, eq=False)
class EegSegment:
    channels: tuple[str, ...]
    fs: float
    samples: np.ndarray = field(repr=False)
    start_s: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 2:
            raise DomainError("samples must be a [n_channels, n_samples] matrix")
        if samples.shape[0] != len(self.channels):
            raise DomainError(
                f"channels: {len(self.channels)} names for {samples.shape[0]} sample rows"
            )
        if not self.fs > 0:
            raise DomainError("fs must be positive")
        if not np.all(np.isfinite(samples)):
            raise DomainError("samples contain NaN or Inf")
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "samples", samples)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs

    def replace(self, samples: np.ndarray, fs: float | None = None) -> "EegSegment":
        return EegSegment(self.channels, self.fs if fs is None else fs, samples, self.start_s)

    def pick(self, channels: Sequence[str]) -> "EegSegment":
        idx = []
        for ch in channels:
            if ch not in self.channels:
                raise DomainError(f"channel {ch!r} not present in segment")
            idx.append(self.channels.index(ch))
        return EegSegment(tuple(channels), self.fs, self.samples[idx], self.start_s)


@dataclass(frozen=True)
class WindowSpec:
    length_s: float = 5.0
    step_s: float = 5.0

    def __post_init__(self):
        if not (0 < self.step_s <= self.length_s):
            raise DomainError("window step must satisfy 0 < step <= length")

    def in_samples(self, fs: float) -> tuple[int, int]:
        n_len = _exact_samples(self.length_s, fs, "length_s")
        n_step = _exact_samples(self.step_s, fs, "step_s")
        return n_len, n_step


def _exact_samples(seconds: float, fs: float, what: str) -> int:
    n = round(seconds * fs)
    if n < 1 or abs(n - seconds * fs) > 1e-6:
        raise DomainError(f"{what}={seconds} s is not a whole number of samples at {fs} Hz")
    return int(n)


def _integer_ratio(fs: float, target_fs: float) -> int:
    if target_fs <= 0:
        raise UnsupportedRateError("target rate must be positive")
    ratio = fs / target_fs
    q = round(ratio)
    if q < 1 or abs(ratio - q) > 1e-9:
        raise UnsupportedRateError(f"{fs} Hz is not an integer multiple of {target_fs} Hz")
    return int(q)


def antialias_sos(fs: float, target_fs: float) -> np.ndarray:
    return signal.butter(ANTIALIAS_ORDER, ANTIALIAS_FRACTION * target_fs, fs=fs, output="sos")


def downsample(seg: EegSegment, target_fs: float, causal: bool = False) -> EegSegment:
    q = _integer_ratio(seg.fs, target_fs)
    if q == 1:
        return seg
    sos = antialias_sos(seg.fs, target_fs)
    filtered = _apply(sos, seg.samples, causal)
    return seg.replace(filtered[:, ::q], fs=float(target_fs))


def bandpass_sos(fs: float, lo: float, hi: float) -> np.ndarray:
    if not (0 < lo < hi < fs / 2):
        raise DomainError(f"band edges must satisfy 0 < lo < hi < fs/2, got {lo}, {hi} at {fs} Hz")
    return signal.butter(BANDPASS_ORDER, [lo, hi], btype="bandpass", fs=fs, output="sos")


def bandpass(seg: EegSegment, lo: float, hi: float, causal: bool = False) -> EegSegment:
    sos = bandpass_sos(seg.fs, lo, hi)
    return seg.replace(_apply(sos, seg.samples, causal))


def _apply(sos: np.ndarray, x: np.ndarray, causal: bool) -> np.ndarray:
    if causal:
        # Start from the steady state for the first sample, as the streaming filter does.
        zi = signal.sosfilt_zi(sos)[:, None, :] * x[:, 0][None, :, None]
        y, _ = signal.sosfilt(sos, x, axis=-1, zi=zi)
        return y
    padlen = min(x.shape[-1] - 1, 3 * (2 * len(sos) + 1))
    return signal.sosfiltfilt(sos, x, axis=-1, padlen=padlen)


def common_average_reference(seg: EegSegment) -> EegSegment:
    if seg.n_channels < 2:
        raise DomainError("common average reference needs at least two channels")
    x = seg.samples
    return seg.replace(x - x.mean(axis=0, keepdims=True))


def preprocess(
    seg: EegSegment,
    target_fs: float = 128.0,
    band: tuple[float, float] = (0.4, 45.0),
    causal: bool = False,
) -> EegSegment:
    """Downsample, band-pass and re-reference, in that order."""
    out = downsample(seg, target_fs, causal=causal)
    out = bandpass(out, band[0], band[1], causal=causal)
    return common_average_reference(out)


def window_count(n_samples: int, n_len: int, n_step: int) -> int:
    if n_samples < n_len:
        return 0
    return (n_samples - n_len) // n_step + 1


def sliding_windows(seg: EegSegment, spec: WindowSpec) -> Iterator[EegSegment]:
    n_len, n_step = spec.in_samples(seg.fs)
    if seg.n_samples < n_len:
        raise DomainError(
            f"segment of {seg.duration_s:.3f} s is shorter than one {spec.length_s} s window"
        )
    for k in range(window_count(seg.n_samples, n_len, n_step)):
        a = k * n_step
        yield EegSegment(seg.channels, seg.fs, seg.samples[:, a : a + n_len], seg.start_s + a / seg.fs)


class StreamingFilter:
    """Causal SOS filter with per-channel state carried across calls.

    One instance serves one stream; it is not safe to share between threads.
    """

    def __init__(self, sos: np.ndarray, n_channels: int):
        self.sos = np.asarray(sos)
        self.n_channels = n_channels
        self._zi_unit = signal.sosfilt_zi(self.sos)
        self._zi: np.ndarray | None = None

    @classmethod
    def bandpass(cls, fs: float, lo: float, hi: float, n_channels: int) -> "StreamingFilter":
        return cls(bandpass_sos(fs, lo, hi), n_channels)

    def reset(self) -> None:
        self._zi = None

    def process(self, block: np.ndarray) -> np.ndarray:
        """Filter a [n_channels, n] block (n may be 1)."""
        block = np.asarray(block, dtype=float)
        if block.ndim == 1:
            block = block[:, None]
        if self._zi is None:
            self._zi = self._zi_unit[:, None, :] * block[:, 0][None, :, None]
        out, self._zi = signal.sosfilt(self.sos, block, axis=-1, zi=self._zi)
        return out


class StreamingDecimator:
    """Causal anti-alias low-pass followed by keeping every q-th sample."""

    def __init__(self, fs: float, target_fs: float, n_channels: int):
        self.q = _integer_ratio(fs, target_fs)
        self._filter = StreamingFilter(antialias_sos(fs, target_fs), n_channels) if self.q > 1 else None
        self._phase = 0

    def reset(self) -> None:
        self._phase = 0
        if self._filter is not None:
            self._filter.reset()

    def process(self, block: np.ndarray) -> np.ndarray:
        block = np.asarray(block, dtype=float)
        if block.ndim == 1:
            block = block[:, None]
        if self._filter is None:
            return block
        y = self._filter.process(block)
        n = y.shape[1]
        first = (-self._phase) % self.q
        kept = y[:, first :: self.q]
        self._phase = (self._phase + n) % self.q
        return kept
