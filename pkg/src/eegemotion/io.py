"""Recording files, dataset directories and the synthetic generator.

Recording file layout (little-endian)::

    magic       4 bytes  b"EEGR"
    version     u16      (1)
    header_len  u32
    header      header_len bytes of UTF-8 JSON with keys
                fs, channels, subject_id, trial_id, n_samples, has_label
    samples     f32[n_channels * n_samples], channel-major
    label       optional: b"LBL1" then f64 valence, arousal, dominance

A dataset directory holds recording files plus ``manifest.tsv``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import (
    BAND_BY_NAME,
    BAND_CENTERS,
    COMPONENTS,
    DEAP_CHANNELS,
    DomainError,
    VadRating,
    check_channel,
)
from .dsp import EegSegment

log = logging.getLogger(__name__)

MAGIC = b"EEGR"
LABEL_MAGIC = b"LBL1"
FORMAT_VERSION = 1
MANIFEST = "manifest.tsv"
MANIFEST_COLUMNS = ("file", "subject_id", "trial_id", "fs", "n_channels", "n_samples", "valence", "arousal", "dominance")


class RecordingFormatError(ValueError):
    def __init__(self, message: str, offset: int | None = None, field: str | None = None):
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.offset = offset
        self.field = field


@dataclass(eq=False)
class Recording:
    fs: float
    channels: tuple[str, ...]
    samples: np.ndarray = field(repr=False)
    subject_id: str = "s00"
    trial_id: str = "t00"
    label: VadRating | None = None

    def __post_init__(self):
        self.channels = tuple(self.channels)
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 2 or self.samples.shape[0] != len(self.channels):
            raise DomainError(
                f"channels: header lists {len(self.channels)} channels but samples have shape {self.samples.shape}"
            )
        if not np.all(np.isfinite(self.samples)):
            raise DomainError("samples contain NaN or Inf")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs

    def segment(self) -> EegSegment:
        return EegSegment(self.channels, self.fs, self.samples)


def dumps_recording(rec: Recording) -> bytes:
    header = {
        "fs": rec.fs,
        "channels": list(rec.channels),
        "subject_id": rec.subject_id,
        "trial_id": rec.trial_id,
        "n_samples": rec.n_samples,
        "has_label": rec.label is not None,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(blob)), blob]
    parts.append(np.ascontiguousarray(rec.samples, dtype="<f4").tobytes())
    if rec.label is not None:
        parts.append(LABEL_MAGIC + struct.pack("<3d", *rec.label.as_tuple()))
    return b"".join(parts)


def loads_recording(data: bytes) -> Recording:
    if len(data) == 0:
        raise RecordingFormatError("empty recording", offset=0, field="magic")
    if len(data) < 10 or data[:4] != MAGIC:
        raise RecordingFormatError("bad magic", offset=0, field="magic")
    version, hlen = struct.unpack_from("<HI", data, 4)
    if version != FORMAT_VERSION:
        raise RecordingFormatError(f"unsupported version {version}", offset=4, field="version")
    off = 10
    if off + hlen > len(data):
        raise RecordingFormatError("truncated header", offset=off, field="header")
    try:
        header = json.loads(data[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RecordingFormatError(f"header is not valid JSON: {exc}", offset=off, field="header") from None
    for key in ("fs", "channels", "subject_id", "trial_id", "n_samples", "has_label"):
        if key not in header:
            raise RecordingFormatError("missing header key", offset=off, field=key)
    fs = header["fs"]
    if not isinstance(fs, (int, float)) or fs <= 0:
        raise RecordingFormatError("fs must be a positive number", offset=off, field="fs")
    channels = header["channels"]
    if not isinstance(channels, list) or not channels:
        raise RecordingFormatError("channels must be a non-empty list", offset=off, field="channels")
    n = header["n_samples"]
    if not isinstance(n, int) or n < 0:
        raise RecordingFormatError("n_samples must be a non-negative integer", offset=off, field="n_samples")
    off += hlen

    label_len = len(LABEL_MAGIC) + 24 if header["has_label"] else 0
    available = len(data) - off - label_len
    row_bytes = 4 * n
    expected = row_bytes * len(channels)
    if available != expected:
        if row_bytes and available > 0 and available % row_bytes == 0:
            raise RecordingFormatError(
                f"header lists {len(channels)} channels but the sample block holds {available // row_bytes} rows",
                offset=off,
                field="channels",
            )
        raise RecordingFormatError(
            f"sample block is {available} bytes, expected {expected}", offset=off + max(available, 0), field="samples"
        )
    samples = np.frombuffer(data, dtype="<f4", count=n * len(channels), offset=off).reshape(len(channels), n)
    if not np.all(np.isfinite(samples)):
        bad = int(np.flatnonzero(~np.isfinite(samples.ravel()))[0])
        raise RecordingFormatError("NaN or Inf sample", offset=off + 4 * bad, field="samples")
    off += expected
    label = None
    if header["has_label"]:
        if data[off : off + 4] != LABEL_MAGIC:
            raise RecordingFormatError("bad label marker", offset=off, field="label")
        vals = struct.unpack_from("<3d", data, off + 4)
        try:
            label = VadRating(*vals)
        except DomainError as exc:
            raise RecordingFormatError(str(exc), offset=off + 4, field="label") from None
    return Recording(
        float(fs), tuple(channels), samples.astype(np.float64), str(header["subject_id"]), str(header["trial_id"]), label
    )


def write_recording(path, rec: Recording) -> None:
    Path(path).write_bytes(dumps_recording(rec))


def read_recording(path) -> Recording:
    return loads_recording(Path(path).read_bytes())


def recording_filename(rec: Recording) -> str:
    return f"{rec.subject_id}_{rec.trial_id}.eegr"


def write_dataset(directory, recordings: Sequence[Recording]) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rows = []
    for rec in recordings:
        name = recording_filename(rec)
        write_recording(d / name, rec)
        lab = rec.label.as_tuple() if rec.label else ("", "", "")
        rows.append([name, rec.subject_id, rec.trial_id, repr(rec.fs), len(rec.channels), rec.n_samples, *map(str, lab)])
    with open(d / MANIFEST, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        w.writerows(rows)
    return d


def read_dataset(directory) -> list[Recording]:
    d = Path(directory)
    manifest = d / MANIFEST
    if not manifest.exists():
        raise RecordingFormatError(f"{manifest} not found", field="manifest")
    with open(manifest, newline="") as fh:
        rows = list(csv.DictReader(fh, delimiter="\t"))
    out = []
    for line_no, row in enumerate(rows, start=2):
        try:
            rec = read_recording(d / row["file"])
        except RecordingFormatError as exc:
            raise RecordingFormatError(f"{row['file']}: {exc}", exc.offset, exc.field) from None
        if rec.subject_id != row["subject_id"] or rec.trial_id != row["trial_id"]:
            raise RecordingFormatError(f"{MANIFEST} line {line_no}: ids disagree with {row['file']}", field="manifest")
        out.append(rec)
    return out


# -- synthetic data ---------------------------------------------------------

RATING_RANGES = {-1: (1.0, 3.6), 0: (3.7, 6.3), 1: (6.4, 9.0)}


@dataclass(frozen=True)
class Signature:
    band: str
    channels: tuple[str, ...]
    amplitude: float

    def __post_init__(self):
        if self.band not in BAND_BY_NAME:
            raise DomainError(f"unknown band {self.band!r}")
        if self.amplitude <= 0:
            raise DomainError("signature amplitude must be positive")


@dataclass(frozen=True)
class SyntheticSpec:
    """Labelled sine-plus-pink-noise trials.

    For each component, a sinusoid at the signature band's centre frequency is
    added to the signature channels with amplitude ``amplitude * (level + 2) / 2``
    (0.5x, 1x, 1.5x for low, medium, high). The signal-to-noise ratio is
    ``amplitude / noise_sigma``. Alternate signature channels get the wave with
    opposite sign, so an even number of them leaves the channel mean (and hence
    the common average reference) untouched.
    """

    n_subjects: int = 2
    n_trials: int = 27
    trial_length_s: float = 30.0
    fs: float = 128.0
    channels: tuple[str, ...] = DEAP_CHANNELS
    signatures: Mapping[str, Signature] = field(
        default_factory=lambda: {
            "valence": Signature("theta", ("T7", "T8"), 10.0),
            "arousal": Signature("gamma", ("T7", "T8"), 10.0),
            "dominance": Signature("beta", ("T7", "T8"), 10.0),
        }
    )
    noise_sigma: float = 1.0
    label_noise: float = 0.0  # per component, chance the stored rating names a wrong level
    levels: tuple[int, ...] | None = None  # force one level triple for every trial

    def __post_init__(self):
        if self.n_subjects < 1 or self.n_trials < 1:
            raise DomainError("need at least one subject and one trial")
        if self.trial_length_s <= 0 or self.fs <= 0:
            raise DomainError("trial length and fs must be positive")
        if self.noise_sigma < 0:
            raise DomainError("noise_sigma must be >= 0")
        if not 0.0 <= self.label_noise <= 1.0:
            raise DomainError("label_noise must be in [0, 1]")
        for ch in self.channels:
            check_channel(ch)
        for comp, sig in self.signatures.items():
            if comp not in COMPONENTS:
                raise DomainError(f"unknown component {comp!r}")
            extra = set(sig.channels) - set(self.channels)
            if extra:
                raise DomainError(f"{comp} signature channels {sorted(extra)} not in channel set")

    def with_snr(self, snr: float) -> "SyntheticSpec":
        """Copy with every amplitude set to ``snr * noise_sigma`` (snr = 0 drops the signatures)."""
        from dataclasses import replace

        if snr <= 0:
            return replace(self, signatures={})
        sigs = {c: Signature(s.band, s.channels, snr * self.noise_sigma) for c, s in self.signatures.items()}
        return replace(self, signatures=sigs)


def pink_noise(rng: np.random.Generator, shape: tuple[int, int], fs: float) -> np.ndarray:
    """Unit-variance 1/f noise along the last axis."""
    n = shape[-1]
    white = rng.standard_normal(shape)
    spec = np.fft.rfft(white, axis=-1)
    f = np.fft.rfftfreq(n, 1.0 / fs)
    scale = np.zeros_like(f)
    scale[1:] = 1.0 / np.sqrt(f[1:])
    x = np.fft.irfft(spec * scale, n=n, axis=-1)
    x -= x.mean(axis=-1, keepdims=True)
    sd = x.std(axis=-1, keepdims=True)
    return x / np.where(sd > 0, sd, 1.0)


def _trial(spec: SyntheticSpec, seed: int, s: int, t: int) -> Recording:
    rng = np.random.default_rng(np.random.SeedSequence([seed, s, t]))
    if spec.levels is not None:
        levels = tuple(int(v) for v in spec.levels)
    else:
        levels = tuple(int(v) for v in rng.integers(-1, 2, size=3))
    # Draws are made unconditionally so label_noise never shifts the other streams.
    flip = rng.random(3) < spec.label_noise
    shift = rng.integers(1, 3, size=3)  # move to one of the two other levels
    labelled = tuple((lv + 1 + int(d)) % 3 - 1 if f else lv for lv, d, f in zip(levels, shift, flip))
    rating = VadRating(*(rng.uniform(*RATING_RANGES[lv]) for lv in labelled))
    n = int(round(spec.trial_length_s * spec.fs))
    x = spec.noise_sigma * pink_noise(rng, (len(spec.channels), n), spec.fs) if spec.noise_sigma > 0 else np.zeros((len(spec.channels), n))
    tt = np.arange(n) / spec.fs
    for comp in COMPONENTS:
        sig = spec.signatures.get(comp)
        if sig is None:
            continue
        level = levels[COMPONENTS.index(comp)]
        amp = sig.amplitude * (level + 2) / 2.0
        phase = rng.uniform(0, 2 * math.pi)
        wave = amp * np.sin(2 * math.pi * BAND_CENTERS[sig.band] * tt + phase)
        for j, ch in enumerate(sig.channels):
            x[spec.channels.index(ch)] += wave if j % 2 == 0 else -wave
    # stored as float32 on disk; round now so files round-trip exactly
    x = x.astype(np.float32).astype(np.float64)
    return Recording(spec.fs, spec.channels, x, f"s{s + 1:02d}", f"t{t + 1:02d}", rating)


def generate_synthetic(spec: SyntheticSpec, seed: int = 0) -> list[Recording]:
    return [_trial(spec, seed, s, t) for s in range(spec.n_subjects) for t in range(spec.n_trials)]


# -- converted upstream dataset ---------------------------------------------


@dataclass
class ImportReport:
    subjects: list[str]
    missing: list[str]
    drop_first_s: float


def import_matrix_dataset(
    directory,
    drop_first_s: float = 3.0,
    expected_subjects: Sequence[str] | None = None,
) -> tuple[list[Recording], ImportReport]:
    """Load per-subject ``sNN.npz`` files.

    Each file holds ``data`` [trials, channels, samples], ``labels``
    [trials, >=3] (valence, arousal, dominance first), ``channels`` and ``fs``.
    Missing subjects are reported and skipped.
    """
    d = Path(directory)
    expected = list(expected_subjects) if expected_subjects else [f"s{i:02d}" for i in range(1, 33)]
    present = sorted(p.stem for p in d.glob("s*.npz"))
    missing = [s for s in expected if s not in present]
    if missing:
        log.warning("missing subjects: %s; continuing with %d present", ", ".join(missing), len(present))
    if not present:
        raise DomainError(f"no subject files in {d}")
    recordings = []
    for subj in present:
        with np.load(d / f"{subj}.npz", allow_pickle=False) as z:
            data = np.asarray(z["data"], dtype=float)
            labels = np.asarray(z["labels"], dtype=float)
            channels = [str(c) for c in z["channels"]]
            fs = float(z["fs"])
        if data.ndim != 3 or data.shape[1] != len(channels):
            raise DomainError(f"{subj}: data must be [trials, {len(channels)} channels, samples]")
        if labels.shape[0] != data.shape[0] or labels.shape[1] < 3:
            raise DomainError(f"{subj}: labels must be [trials, >=3]")
        if np.any((labels[:, :3] < 1) | (labels[:, :3] > 9)):
            raise DomainError(f"{subj}: label outside [1, 9]")
        skip = int(round(drop_first_s * fs))
        for t in range(data.shape[0]):
            recordings.append(
                Recording(fs, tuple(channels), data[t, :, skip:], subj, f"t{t + 1:02d}", VadRating(*labels[t, :3]))
            )
    return recordings, ImportReport(present, missing, drop_first_s)
