"""Domain vocabulary: channels, lobes, bands, VAD levels and the emotion map."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable

import numpy as np

COMPONENTS = ("valence", "arousal", "dominance")
LEVELS = (-1, 0, 1)


class DomainError(ValueError):
    """Input outside the domain an operation is defined on."""


# Lobe grouping of the 32 DEAP electrodes. The concatenation of these rows is
# the canonical channel order used for tie-breaking and default layouts.
LOBES: dict[str, tuple[str, ...]] = {
    "Frontal": ("Fp1", "Fp2", "F3", "F4", "F7", "F8", "Fz", "AF3", "AF4"),
    "Temporal": ("T7", "T8"),
    "Parietal": ("P3", "P4", "P7", "P8", "Pz", "PO3", "PO4"),
    "Occipital": ("O1", "O2", "Oz"),
    "Central": ("FC5", "FC1", "C3", "C4", "FC2", "FC6", "Cz"),
    "Central-Parietal": ("CP5", "CP1", "CP2", "CP6"),
}
LOBE_ABBREV = {
    "Frontal": "F",
    "Temporal": "T",
    "Parietal": "P",
    "Occipital": "O",
    "Central": "C",
    "Central-Parietal": "CP",
}

DEAP_CHANNELS: tuple[str, ...] = tuple(ch for row in LOBES.values() for ch in row)

# OpenBCI Cyton default montage and the emotion-optimised montage.
OPENBCI_DEFAULT_CHANNELS = ("Fp1", "Fp2", "C3", "C4", "P7", "P8", "O1", "O2")
SELECTED_CHANNELS = ("Fp1", "F7", "FC5", "FC6", "T7", "T8", "P7", "O2")

RUNTIME_CHANNELS = tuple(dict.fromkeys(OPENBCI_DEFAULT_CHANNELS + SELECTED_CHANNELS))
KNOWN_CHANNELS = frozenset(DEAP_CHANNELS) | frozenset(RUNTIME_CHANNELS)


def check_channel(name: str) -> str:
    if name not in KNOWN_CHANNELS:
        raise DomainError(f"unknown channel {name!r}")
    return name


def lobe_of(channel: str) -> str:
    for lobe, chans in LOBES.items():
        if channel in chans:
            return lobe
    raise DomainError(f"channel {channel!r} is not assigned to a lobe")


@dataclass(frozen=True)
class FrequencyBand:
    name: str
    lo_hz: float
    hi_hz: float
    closed_top: bool = False

    def contains(self, f: np.ndarray | float) -> np.ndarray:
        f = np.asarray(f)
        upper = f <= self.hi_hz if self.closed_top else f < self.hi_hz
        return (f >= self.lo_hz) & upper


BANDS: tuple[FrequencyBand, ...] = (
    FrequencyBand("delta", 0.5, 4.0),
    FrequencyBand("theta", 4.0, 8.0),
    FrequencyBand("alpha", 8.0, 12.0),
    FrequencyBand("beta", 12.0, 30.0),
    FrequencyBand("gamma", 30.0, 45.0, closed_top=True),
)
BAND_NAMES = tuple(b.name for b in BANDS)
BAND_BY_NAME = {b.name: b for b in BANDS}
# Centre frequencies used by the synthetic generator.
BAND_CENTERS = {"delta": 2.0, "theta": 6.0, "alpha": 10.0, "beta": 20.0, "gamma": 38.0}

INDEX_NAMES = ("relaxation", "excitement", "fatigue", "engagement")


@dataclass(frozen=True)
class VadRating:
    """Self-assessment on the 1-9 scale."""

    valence: float
    arousal: float
    dominance: float

    def __post_init__(self):
        for name in COMPONENTS:
            v = getattr(self, name)
            if not (1.0 <= v <= 9.0):
                raise DomainError(f"{name} rating {v} outside [1, 9]")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.valence, self.arousal, self.dominance)


@dataclass(frozen=True)
class VadLevel:
    valence: int
    arousal: int
    dominance: int

    def __post_init__(self):
        for name in COMPONENTS:
            if getattr(self, name) not in LEVELS:
                raise DomainError(f"{name} level {getattr(self, name)} not in {{-1, 0, 1}}")

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.valence, self.arousal, self.dominance)


PASSIONS = frozenset({"Admiration", "Love", "Hate", "Desire", "Joy", "Sadness"})


@dataclass(frozen=True)
class EmotionLabel:
    name: str

    @property
    def is_passion(self) -> bool:
        return self.name in PASSIONS

    def __str__(self) -> str:
        return self.name


# Cut points sit in the middle of the gaps between the published ranges
# (1-3.6 low, 3.7-6.3 medium, 6.4-9 high).
LOW_CUT = 3.65
HIGH_CUT = 6.35


def discretize_value(v: float) -> int:
    if not (1.0 <= v <= 9.0) or np.isnan(v):
        raise DomainError(f"rating {v} outside [1, 9]")
    if v < LOW_CUT:
        return -1
    if v < HIGH_CUT:
        return 0
    return 1


def discretize_vad(rating: VadRating) -> VadLevel:
    return VadLevel(*(discretize_value(v) for v in rating.as_tuple()))


def discretize_array(values: np.ndarray) -> np.ndarray:
    """Vectorised form of :func:`discretize_value`; returns int8 levels."""
    values = np.asarray(values, dtype=float)
    if np.any(~np.isfinite(values)) or np.any((values < 1.0) | (values > 9.0)):
        raise DomainError("ratings must lie in [1, 9]")
    return (np.digitize(values, [LOW_CUT, HIGH_CUT]) - 1).astype(np.int8)


# Rows keyed by (arousal, valence, dominance), in the published row order.
# The published table repeats (0, 1, 1) -> Other; it is stored once.
EMOTION_ROWS: tuple[tuple[int, int, int, str], ...] = (
    (0, 0, 0, "Neutral"),
    (0, 0, 1, "Other"),
    (0, 0, -1, "Other"),
    (0, 1, 0, "Desire"),
    (0, 1, 1, "Other"),
    (0, 1, -1, "Satisfaction"),
    (0, -1, 0, "Other"),
    (0, -1, 1, "Pessimism"),
    (0, -1, -1, "Other"),
    (1, 0, 0, "Admiration"),
    (1, 0, 1, "Other"),
    (1, 0, -1, "Other"),
    (1, 1, 0, "Joy"),
    (1, 1, 1, "Generosity"),
    (1, 1, -1, "Love"),
    (1, -1, 0, "Distressed"),
    (1, -1, 1, "Anxious"),
    (1, -1, -1, "Hate"),
    (-1, 0, 0, "Other"),
    (-1, 0, 1, "Calm"),
    (-1, 0, -1, "Other"),
    (-1, 1, 0, "Relaxed"),
    (-1, 1, 1, "Overconfident"),
    (-1, 1, -1, "Relief"),
    (-1, -1, 0, "Sadness"),
    (-1, -1, 1, "Rejected"),
    (-1, -1, -1, "Other"),
)
_EMOTION_MAP = {(a, v, d): name for a, v, d, name in EMOTION_ROWS}
EMOTION_MAP_VERSION = 1


def map_emotion(level: VadLevel) -> EmotionLabel:
    return EmotionLabel(_EMOTION_MAP[(level.arousal, level.valence, level.dominance)])


def emotion_for(arousal: int, valence: int, dominance: int) -> EmotionLabel:
    """Lookup with explicit (arousal, valence, dominance) argument order."""
    return map_emotion(VadLevel(valence=valence, arousal=arousal, dominance=dominance))


def emotion_map_table() -> str:
    """Tab-separated export of the 27-row map, preceded by a version comment."""
    out = io.StringIO()
    out.write(f"# emotion-map v{EMOTION_MAP_VERSION}\n")
    out.write("arousal\tvalence\tdominance\temotion\tis_passion\n")
    for a, v, d, name in EMOTION_ROWS:
        out.write(f"{a}\t{v}\t{d}\t{name}\t{int(name in PASSIONS)}\n")
    return out.getvalue()


def parse_emotion_map(text: str) -> dict[tuple[int, int, int], str]:
    rows = {}
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    for ln in lines[1:]:
        a, v, d, name, _ = ln.split("\t")
        rows[(int(a), int(v), int(d))] = name
    return rows


def feature_name(kind: str, channel: str) -> str:
    return f"{kind}_{channel}"


def feature_names(channels: Iterable[str]) -> list[str]:
    """Band-major, then ratio indexes, channels in the given order."""
    channels = list(channels)
    return [feature_name(k, ch) for k in BAND_NAMES + INDEX_NAMES for ch in channels]
