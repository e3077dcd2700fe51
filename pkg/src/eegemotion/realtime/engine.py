"""Streaming inference: frames in, one EmotionEvent per cadence out."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..core import COMPONENTS, LEVELS, EmotionLabel, VadLevel, feature_names, map_emotion
from ..dsp import StreamingDecimator, StreamingFilter, bandpass_sos
from ..ensemble.forest import ContractError
from ..ensemble.modelset import VadModelSet
from ..features import band_power_matrix, feature_block
from .buffer import RollingBuffer
from .wire import StreamFrame, StreamHeader

log = logging.getLogger(__name__)

EVENT_SCHEMA = "eegemotion.event/1"
EVENT_FIELDS = ("schema", "window_end_t", "vad_level", "vad_probs", "emotion", "is_passion", "latency_ms", "features_digest")


class SessionError(RuntimeError):
    """The stream violated the session contract (e.g. channel count changed)."""


@dataclass(frozen=True)
class WindowSnapshot:
    samples: np.ndarray  # [n_ch, n] preprocessed, not yet re-referenced
    end_t: float
    index: int


@dataclass(frozen=True)
class EmotionEvent:
    window_end_t: float
    vad_level: VadLevel
    vad_probs: dict[str, tuple[float, float, float]]
    emotion: EmotionLabel
    latency_ms: float
    features_digest: str

    def payload(self) -> dict:
        """Everything except the wall-clock-dependent latency."""
        return {
            "schema": EVENT_SCHEMA,
            "window_end_t": round(self.window_end_t, 6),
            "vad_level": {c: getattr(self.vad_level, c) for c in COMPONENTS},
            "vad_probs": {c: list(self.vad_probs[c]) for c in COMPONENTS},
            "emotion": self.emotion.name,
            "is_passion": self.emotion.is_passion,
            "features_digest": self.features_digest,
        }

    def to_json(self) -> str:
        d = self.payload()
        d["latency_ms"] = round(self.latency_ms, 3)
        return json.dumps({k: d[k] for k in EVENT_FIELDS}, separators=(",", ":"))


def validate_event_line(line: str) -> dict:
    """Parse one event line and check it against the published schema."""
    d = json.loads(line)
    if set(d) != set(EVENT_FIELDS):
        raise ValueError(f"event fields {sorted(d)} differ from {sorted(EVENT_FIELDS)}")
    if d["schema"] != EVENT_SCHEMA:
        raise ValueError(f"unknown schema {d['schema']!r}")
    for c in COMPONENTS:
        if d["vad_level"][c] not in LEVELS:
            raise ValueError(f"bad level for {c}")
        p = d["vad_probs"][c]
        if len(p) != 3 or abs(sum(p) - 1.0) > 1e-9 or min(p) < 0:
            raise ValueError(f"bad probabilities for {c}")
    if not isinstance(d["emotion"], str) or not isinstance(d["is_passion"], bool):
        raise ValueError("bad emotion fields")
    if not (isinstance(d["latency_ms"], (int, float)) and d["latency_ms"] >= 0):
        raise ValueError("bad latency")
    return d


@dataclass
class EngineStats:
    frames: int = 0
    windows: int = 0
    gaps: int = 0
    dropped: int = 0
    events: int = 0
    last_latency_ms: float = 0.0
    latencies_ms: deque = field(default_factory=lambda: deque(maxlen=1024), repr=False)


class StreamEngine:
    """Owns the filters and the ring; ``ingest`` runs on the reader side and
    ``infer`` on the inference side.

    The models fix the channels, sampling rate, band and window length they
    were trained with; the stream may carry extra channels and may run at an
    integer multiple of the model rate.
    """

    def __init__(self, models: VadModelSet, header: StreamHeader, cadence_s: float | None = None):
        meta = models.metadata
        try:
            self.channels = tuple(meta["channels"])
            self.fs = float(meta["fs"])
            self.length_s = float(meta["window_length_s"])
            lo, hi = (float(v) for v in meta["band"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractError(f"model metadata lacks preprocessing settings: {exc}") from None
        self.models = models
        self.names = feature_names(self.channels)
        models.check_feature_space(self.names)

        missing = [c for c in self.channels if c not in header.channels]
        if missing:
            raise ContractError(f"stream lacks channels required by the model: {', '.join(missing)}")
        self.header = header
        self._pick = np.array([header.channels.index(c) for c in self.channels])
        ratio = header.fs / self.fs
        if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
            raise ContractError(f"stream rate {header.fs} Hz is not an integer multiple of the model rate {self.fs:g} Hz")

        self.capacity = _samples(self.length_s, self.fs, "window length")
        cadence_s = self.length_s if cadence_s is None else float(cadence_s)
        if cadence_s <= 0:
            raise ContractError("cadence must be positive")
        self.cadence_s = cadence_s
        self.cadence = _samples(cadence_s, self.fs, "cadence")

        n = len(self.channels)
        self._decimator = StreamingDecimator(header.fs, self.fs, n)
        self._filter = StreamingFilter(bandpass_sos(self.fs, lo, hi), n)
        self.ring = RollingBuffer(n, self.capacity)
        self._until_next = self.capacity
        self._last_seq: int | None = None
        self.stats = EngineStats()
        # Column order for each component's model, resolved once.
        index = {name: i for i, name in enumerate(self.names)}
        self._cols = {c: np.array([index[f] for f in models.features(c)]) for c in COMPONENTS}

    def warmup(self) -> None:
        """Run one inference on a zero window so the first real event is not
        charged for lazy initialisation; statistics are left untouched."""
        f = self.features(np.zeros((len(self.channels), self.capacity)))
        for c in COMPONENTS:
            self.models.models[c].predict_proba(f[self._cols[c]][None, :])

    def reset(self) -> None:
        self.ring.reset()
        self._filter.reset()
        self._decimator.reset()
        self._until_next = self.capacity

    def ingest(self, frame: StreamFrame) -> WindowSnapshot | None:
        """Add one frame; return a window snapshot when one is due."""
        x = np.asarray(frame.samples, dtype=float)
        if x.shape != (self.header.n_channels,):
            raise SessionError(f"frame {frame.seq} has {x.size} channels, session has {self.header.n_channels}")
        if self._last_seq is not None and frame.seq != self._last_seq + 1:
            self.stats.gaps += 1
            log.warning("seq gap: %d -> %d; buffer invalidated until refilled", self._last_seq, frame.seq)
            self.reset()
        self._last_seq = frame.seq
        self.stats.frames += 1

        y = self._decimator.process(x[self._pick])
        if y.shape[1] == 0:
            return None
        y = self._filter.process(y)
        self.ring.push(y)
        self._until_next -= y.shape[1]
        if self._until_next > 0 or not self.ring.full:
            return None
        self._until_next += self.cadence
        self.stats.windows += 1
        # the triggering frame carries the newest kept sample, which spans one model-rate period
        return WindowSnapshot(self.ring.snapshot(), frame.t + 1.0 / self.fs, self.stats.windows - 1)

    def features(self, window: np.ndarray) -> np.ndarray:
        x = window - window.mean(axis=0, keepdims=True)
        bp = band_power_matrix(x, self.fs)  # [ch, 5]
        return feature_block(bp)

    def infer(self, snap: WindowSnapshot) -> EmotionEvent:
        t0 = time.perf_counter()
        f = self.features(snap.samples)
        probs = {}
        levels = {}
        for c in COMPONENTS:
            m = self.models.models[c]
            p = m.predict_proba(f[self._cols[c]][None, :])[0]
            full = [0.0, 0.0, 0.0]
            for cls, pv in zip(m.classes, p):
                full[LEVELS.index(int(cls))] = float(pv)
            probs[c] = tuple(full)
            levels[c] = int(m.classes[int(np.argmax(p))])
        level = VadLevel(**levels)
        digest = hashlib.sha256(np.ascontiguousarray(f, dtype="<f8").tobytes()).hexdigest()
        latency = (time.perf_counter() - t0) * 1000.0
        self.stats.events += 1
        self.stats.last_latency_ms = latency
        self.stats.latencies_ms.append(latency)
        return EmotionEvent(snap.end_t, level, probs, map_emotion(level), latency, digest)


def _samples(seconds: float, fs: float, what: str) -> int:
    n = seconds * fs
    if n < 1 or not math.isclose(n, round(n), abs_tol=1e-9):
        raise ContractError(f"{what} of {seconds:g} s is not a whole number of samples at {fs:g} Hz")
    return int(round(n))
