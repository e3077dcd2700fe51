"""Spectral features: per-window PSD, band powers and band-ratio indexes."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import signal

from .core import BAND_NAMES, BANDS, INDEX_NAMES, DomainError, feature_names
from .dsp import EegSegment

RATIO_EPS = 1e-12
TOTAL_RANGE = (BANDS[0].lo_hz, BANDS[-1].hi_hz)


@dataclass(frozen=True, eq=False)
class Spectrum:
    channel: str
    freqs: np.ndarray = field(repr=False)
    power: np.ndarray = field(repr=False)

    @property
    def df(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    def total_power(self, lo: float | None = None, hi: float | None = None) -> float:
        mask = np.ones_like(self.freqs, dtype=bool)
        if lo is not None:
            mask &= self.freqs >= lo
        if hi is not None:
            mask &= self.freqs <= hi
        return float(self.power[mask].sum() * self.df)


@dataclass(frozen=True)
class BandPowers:
    channel: str
    delta: float
    theta: float
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if min(self.values()) < 0:
            raise DomainError("band powers must be non-negative")

    def values(self) -> tuple[float, ...]:
        return (self.delta, self.theta, self.alpha, self.beta, self.gamma)

    @property
    def total(self) -> float:
        return float(sum(self.values()))


@dataclass(frozen=True)
class RatioIndexes:
    channel: str
    relaxation: float
    excitement: float
    fatigue: float
    engagement: float

    def values(self) -> tuple[float, ...]:
        return (self.relaxation, self.excitement, self.fatigue, self.engagement)


@dataclass(frozen=True)
class FeatureVector:
    names: tuple[str, ...]
    values: np.ndarray = field(repr=False)
    window_start_s: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def __len__(self) -> int:
        return len(self.names)


def _periodogram(x: np.ndarray, fs: float) -> tuple[np.ndarray, np.ndarray]:
    # Hann-tapered one-sided density; scipy applies the window power correction.
    return signal.periodogram(x, fs=fs, window="hann", detrend="constant", scaling="density", axis=-1)


def psd(window: EegSegment) -> list[Spectrum]:
    if window.duration_s < 1.0:
        raise DomainError(f"PSD window of {window.duration_s:.3f} s is shorter than 1 s")
    freqs, power = _periodogram(window.samples, window.fs)
    return [Spectrum(ch, freqs, p) for ch, p in zip(window.channels, power)]


def _band_masks(freqs: np.ndarray) -> np.ndarray:
    return np.stack([b.contains(freqs) for b in BANDS])


def band_powers(spec: Spectrum) -> BandPowers:
    lo, hi = TOTAL_RANGE
    if spec.freqs[0] > lo or spec.freqs[-1] < hi:
        raise DomainError(
            f"spectrum spans [{spec.freqs[0]}, {spec.freqs[-1]}] Hz, needs [{lo}, {hi}]"
        )
    values = _band_masks(spec.freqs) @ spec.power * spec.df
    return BandPowers(spec.channel, *map(float, values))


def ratio_values(delta, theta, alpha, beta):
    """Relaxation, excitement, fatigue and engagement; works on scalars or arrays."""
    guard = lambda d: np.maximum(d, RATIO_EPS)  # noqa: E731
    return (
        theta / guard(delta),
        beta / guard(alpha),
        alpha / guard(theta),
        beta / guard(theta + alpha),
    )


def ratio_indexes(bp: BandPowers) -> RatioIndexes:
    r = ratio_values(bp.delta, bp.theta, bp.alpha, bp.beta)
    return RatioIndexes(bp.channel, *map(float, r))


def band_power_matrix(samples: np.ndarray, fs: float) -> np.ndarray:
    """Band powers for a batch of windows.

    ``samples`` has shape [..., n_samples]; the result has shape [..., 5].
    """
    freqs, power = _periodogram(samples, fs)
    df = freqs[1] - freqs[0]
    return power @ _band_masks(freqs).T.astype(float) * df


def feature_block(bp: np.ndarray) -> np.ndarray:
    """Map band powers [..., n_channels, 5] to features [..., n_channels * 9].

    Output order matches :func:`eegemotion.core.feature_names`: kind-major,
    channel-minor.
    """
    delta, theta, alpha, beta = (bp[..., i] for i in range(4))
    ratios = np.stack(ratio_values(delta, theta, alpha, beta), axis=-1)
    full = np.concatenate([bp, ratios], axis=-1)  # [..., ch, 9]
    full = np.swapaxes(full, -1, -2)  # [..., 9, ch]
    return full.reshape(*full.shape[:-2], -1)


def assemble_features(windows: Sequence[EegSegment]) -> list[FeatureVector]:
    if not windows:
        return []
    first = windows[0]
    for w in windows[1:]:
        if w.channels != first.channels or w.fs != first.fs:
            raise DomainError("all windows must share channel set and sampling rate")
    names = tuple(feature_names(first.channels))
    for w in windows:
        if w.duration_s < 1.0:
            raise DomainError("PSD window shorter than 1 s")
    stacked = np.stack([w.samples for w in windows])
    feats = feature_block(band_power_matrix(stacked, first.fs))
    return [FeatureVector(names, row, w.start_s) for row, w in zip(feats, windows)]


@dataclass
class FeatureTable:
    """Windows x features, with per-row trial metadata and optional labels.

    ``ratings`` holds continuous (valence, arousal, dominance) self-reports; NaN
    rows are unlabeled.
    """

    names: list[str]
    X: np.ndarray
    trial_id: np.ndarray
    subject_id: np.ndarray
    window_start_s: np.ndarray
    ratings: np.ndarray | None = None
    meta: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.X.shape[0]

    def columns(self, names: Sequence[str]) -> np.ndarray:
        index = {n: i for i, n in enumerate(self.names)}
        missing = [n for n in names if n not in index]
        if missing:
            raise KeyError(f"missing features: {missing}")
        return self.X[:, [index[n] for n in names]]

    def subset(self, mask: np.ndarray) -> "FeatureTable":
        return FeatureTable(
            self.names,
            self.X[mask],
            self.trial_id[mask],
            self.subject_id[mask],
            self.window_start_s[mask],
            None if self.ratings is None else self.ratings[mask],
            dict(self.meta),
        )


META_PREFIX = "# "
TAIL_COLUMNS = ("window_start_s", "trial_id", "subject_id", "valence", "arousal", "dominance")


def write_feature_table(path, table: FeatureTable) -> None:
    """Tab-separated: ``# key=value`` metadata lines, a header row, one row per window."""
    with open(path, "w", newline="") as fh:
        for k in sorted(table.meta):
            fh.write(f"{META_PREFIX}{k}={table.meta[k]}\n")
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(list(table.names) + list(TAIL_COLUMNS))
        ratings = table.ratings if table.ratings is not None else np.full((len(table), 3), np.nan)
        for i in range(len(table)):
            row = [repr(float(v)) for v in table.X[i]]
            row += [repr(float(table.window_start_s[i])), str(table.trial_id[i]), str(table.subject_id[i])]
            row += ["" if np.isnan(v) else repr(float(v)) for v in ratings[i]]
            w.writerow(row)


def read_feature_table(path) -> FeatureTable:
    meta: dict[str, str] = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for ln in lines:
        if ln.startswith(META_PREFIX) and not body:
            k, _, v = ln[len(META_PREFIX):].partition("=")
            meta[k] = v
        else:
            body.append(ln)
    rows = list(csv.reader(body, delimiter="\t"))
    header, data = rows[0], rows[1:]
    if tuple(header[-len(TAIL_COLUMNS):]) != TAIL_COLUMNS:
        raise DomainError(f"{path}: header must end with {TAIL_COLUMNS}")
    n_feat = len(header) - len(TAIL_COLUMNS)
    X = np.array([[float(v) for v in r[:n_feat]] for r in data], dtype=float).reshape(len(data), n_feat)
    ratings = np.array(
        [[float(v) if v else np.nan for v in r[n_feat + 3:]] for r in data], dtype=float
    ).reshape(len(data), 3)
    return FeatureTable(
        header[:n_feat],
        X,
        np.array([r[n_feat + 1] for r in data], dtype=object),
        np.array([r[n_feat + 2] for r in data], dtype=object),
        np.array([float(r[n_feat]) for r in data]),
        None if np.all(np.isnan(ratings)) else ratings,
        meta,
    )


def describe_features(names: Sequence[str]) -> Mapping[str, list[str]]:
    """Group feature names by band or index kind."""
    groups: dict[str, list[str]] = {k: [] for k in BAND_NAMES + INDEX_NAMES}
    for n in names:
        kind, _, ch = n.partition("_")
        groups.setdefault(kind, []).append(ch)
    return {k: v for k, v in groups.items() if v}
