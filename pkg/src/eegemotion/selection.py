"""Channel selection.

Two stages: a per-lobe first principal component correlated against the VAD
ratings (mean absolute Pearson r over subjects), then random-forest regression
importances on one band's per-channel powers, averaged over subjects and seeds
and combined across components into an emotion importance index (EII).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .core import BAND_NAMES, COMPONENTS, DEAP_CHANNELS, LOBE_ABBREV, LOBES, DomainError
from .ensemble.forest import EnsembleSpec, fit

log = logging.getLogger(__name__)

SIGNIFICANCE_ALPHA = 0.05
SIGNIFICANT_SUBJECT_FRACTION = 0.95
RANKING_SPEC = EnsembleSpec(mode="rf-regressor", n_trees=100, max_features="third", min_samples_leaf=5)


class DegenerateDataError(DomainError):
    pass


@dataclass(frozen=True, eq=False)
class PcaProjection:
    w: np.ndarray
    z: np.ndarray
    explained_variance_ratio: float
    lobe: str | None = None
    band: str | None = None
    subject: str | None = None


def first_principal_component(X, lobe=None, band=None, subject=None) -> PcaProjection:
    """Leading right singular vector of the column-centred ``X`` and the projection on it.

    The sign is fixed so that the largest-magnitude loading is positive.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 2:
        raise DomainError("PCA needs a samples x channels matrix with at least two channels")
    if X.shape[0] < X.shape[1] + 1:
        raise DomainError(f"PCA needs at least {X.shape[1] + 1} samples, got {X.shape[0]}")
    Xc = X - X.mean(axis=0)
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    total = float(np.sum(s**2))
    if total <= 0 or s[0] <= 1e-300:
        raise DegenerateDataError("rank-0 input: every column is constant")
    w = vt[0].copy()
    if w[np.argmax(np.abs(w))] < 0:
        w = -w
    return PcaProjection(w, Xc @ w, float(s[0] ** 2 / total), lobe, band, subject)


def pearson_r(z: np.ndarray, y: np.ndarray) -> float:
    zc = z - z.mean()
    yc = y - y.mean()
    den = np.sqrt(np.dot(zc, zc) * np.dot(yc, yc))
    return float(np.dot(zc, yc) / den)


def pearson_pvalue(r: float, n: int) -> float:
    """Two-sided t-test of r with n - 2 degrees of freedom."""
    if abs(r) >= 1.0:
        return 0.0
    t = r * np.sqrt((n - 2) / (1.0 - r * r))
    return float(2.0 * stats.t.sf(abs(t), n - 2))


@dataclass
class PearsonResult:
    r: float
    per_subject_r: list[float]
    p_values: list[float]
    excluded: list[tuple[int, str]] = field(default_factory=list)

    @property
    def significant_fraction(self) -> float:
        if not self.p_values:
            return 0.0
        return float(np.mean(np.asarray(self.p_values) < SIGNIFICANCE_ALPHA))


def mean_abs_pearson(z_by_subject: Sequence[np.ndarray], y_by_subject: Sequence[np.ndarray]) -> PearsonResult:
    if len(z_by_subject) != len(y_by_subject):
        raise DomainError("z and y must cover the same subjects")
    rs, ps, excluded = [], [], []
    for s, (z, y) in enumerate(zip(z_by_subject, y_by_subject)):
        z = np.asarray(z, dtype=float)
        y = np.asarray(y, dtype=float)
        if z.shape != y.shape or z.ndim != 1:
            raise DomainError(f"subject {s}: z and y must be equal-length sequences")
        if len(z) < 3:
            excluded.append((s, "fewer than 3 samples"))
            continue
        if np.ptp(z) == 0 or np.ptp(y) == 0:
            excluded.append((s, "zero variance"))
            continue
        r = pearson_r(z, y)
        rs.append(r)
        ps.append(pearson_pvalue(r, len(z)))
    for s, why in excluded:
        log.warning("subject %d excluded from correlation: %s", s, why)
    r = float(np.mean(np.abs(rs))) if rs else float("nan")
    return PearsonResult(r, rs, ps, excluded)


@dataclass
class CorrelationTable:
    """Mean |r| indexed [band, lobe, component]."""

    bands: tuple[str, ...]
    lobes: tuple[str, ...]
    r: np.ndarray
    significant_fraction: np.ndarray
    n_subjects: int

    @property
    def sum(self) -> np.ndarray:
        return self.r.sum(axis=2)

    @property
    def significant(self) -> np.ndarray:
        return self.significant_fraction > SIGNIFICANT_SUBJECT_FRACTION

    def best_band_per_lobe(self) -> dict[str, str]:
        return {lobe: self.bands[int(np.argmax(self.sum[:, j]))] for j, lobe in enumerate(self.lobes)}

    def best_for_component(self, component: str) -> tuple[str, str]:
        k = COMPONENTS.index(component)
        b, j = np.unravel_index(np.argmax(self.r[:, :, k]), self.r.shape[:2])
        return self.bands[b], self.lobes[j]

    def to_tsv(self) -> str:
        lines = ["band\tlobe\tarousal\tvalence\tdominance\tsum\tsig_arousal\tsig_valence\tsig_dominance"]
        order = [COMPONENTS.index(c) for c in ("arousal", "valence", "dominance")]
        for b, band in enumerate(self.bands):
            for j, lobe in enumerate(self.lobes):
                vals = [f"{self.r[b, j, k]:.4f}" for k in order]
                sig = [f"{self.significant_fraction[b, j, k]:.4f}" for k in order]
                lines.append("\t".join([band, LOBE_ABBREV.get(lobe, lobe), *vals, f"{self.sum[b, j]:.4f}", *sig]))
        return "\n".join(lines) + "\n"


def build_correlation_table(
    band_powers: Mapping[str, np.ndarray],
    ratings: Mapping[str, np.ndarray],
    channels: Sequence[str] = DEAP_CHANNELS,
    lobes: Mapping[str, Sequence[str]] = LOBES,
    bands: Sequence[str] = BAND_NAMES,
) -> CorrelationTable:
    """``band_powers[subject]`` is [n_windows, n_channels, n_bands]; ``ratings[subject]`` is [n_windows, 3]."""
    index = {ch: i for i, ch in enumerate(channels)}
    for lobe, chans in lobes.items():
        missing = [c for c in chans if c not in index]
        if missing:
            raise DomainError(f"lobe {lobe}: missing channels {missing}")
    subjects = sorted(band_powers)
    if not subjects:
        raise DomainError("no subjects")
    r = np.zeros((len(bands), len(lobes), len(COMPONENTS)))
    sig = np.zeros_like(r)
    for b, band in enumerate(bands):
        for j, (lobe, chans) in enumerate(lobes.items()):
            cols = [index[c] for c in chans]
            zs = []
            for s in subjects:
                X = np.asarray(band_powers[s])[:, cols, b]
                zs.append(first_principal_component(X, lobe, band, s).z)
            for k in range(len(COMPONENTS)):
                res = mean_abs_pearson(zs, [np.asarray(ratings[s])[:, k] for s in subjects])
                r[b, j, k] = res.r
                sig[b, j, k] = (
                    np.sum(np.asarray(res.p_values) < SIGNIFICANCE_ALPHA) / len(subjects)
                )
    return CorrelationTable(tuple(bands), tuple(lobes), r, sig, len(subjects))


@dataclass
class ChannelRanking:
    """Gini importances [channel, component] (columns in ``COMPONENTS`` order) and EII."""

    channels: tuple[str, ...]
    gi: np.ndarray
    per_subject: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def eii(self) -> np.ndarray:
        return self.gi.mean(axis=1)

    def gi_of(self, channel: str, component: str) -> float:
        return float(self.gi[self.channels.index(channel), COMPONENTS.index(component)])

    def to_tsv(self) -> str:
        lines = ["rank\tchannel\tarousal\tvalence\tdominance\teii"]
        order = [COMPONENTS.index(c) for c in ("arousal", "valence", "dominance")]
        eii = self.eii
        for rank, ch in enumerate(select_top_channels(self, len(self.channels)), 1):
            i = self.channels.index(ch)
            vals = "\t".join(f"{self.gi[i, k]:.4f}" for k in order)
            lines.append(f"{rank}\t{ch}\t{vals}\t{eii[i]:.4f}")
        return "\n".join(lines) + "\n"


def emotion_importance_index(gi: np.ndarray) -> np.ndarray:
    """Mean over components of a [channel, component] importance matrix."""
    return np.asarray(gi, dtype=float).mean(axis=1)


def gini_channel_ranking(
    X_by_subject: Mapping[str, np.ndarray],
    ratings_by_subject: Mapping[str, np.ndarray],
    channels: Sequence[str] = DEAP_CHANNELS,
    iterations: int = 10,
    spec: EnsembleSpec = RANKING_SPEC,
    seed: int = 0,
    n_jobs: int = 1,
) -> ChannelRanking:
    """Average normalised regressor importances over subjects and ``iterations`` seeds.

    Iteration i uses seed ``seed + i``. Subjects and iterations are reduced in
    sorted-subject, ascending-iteration order.
    """
    if iterations < 1:
        raise DomainError("iterations must be >= 1")
    subjects = sorted(X_by_subject)
    if not subjects:
        raise DomainError("no subjects")
    C = len(channels)
    per_subject = {}
    for s in subjects:
        X = np.asarray(X_by_subject[s], dtype=float)
        Y = np.asarray(ratings_by_subject[s], dtype=float)
        if X.shape[1] != C:
            raise DomainError(f"subject {s}: expected {C} channel columns, got {X.shape[1]}")
        if X.shape[0] < C:
            raise DomainError(f"subject {s}: {X.shape[0]} samples is fewer than {C} channels")
        gi = np.zeros((C, len(COMPONENTS)))
        for k in range(len(COMPONENTS)):
            y = Y[:, k]
            if np.ptp(y) == 0:
                # a constant target carries no ranking information
                gi[:, k] = 1.0 / C
                log.warning("subject %s: constant %s rating; uniform importances used", s, COMPONENTS[k])
                continue
            for i in range(iterations):
                m = fit(spec, X, y, seed=seed + i, feature_names=channels, n_jobs=n_jobs)
                gi[:, k] += m.gini_importances()
            gi[:, k] /= iterations
        per_subject[s] = gi
    total = np.zeros((C, len(COMPONENTS)))
    for s in subjects:
        total += per_subject[s]
    return ChannelRanking(tuple(channels), total / len(subjects), per_subject)


def _canonical_position(channel: str) -> int:
    try:
        return DEAP_CHANNELS.index(channel)
    except ValueError:
        return len(DEAP_CHANNELS)


def select_top_channels(ranking: ChannelRanking, k: int) -> list[str]:
    """First ``k`` channels by descending EII; ties fall back to the canonical lobe-table order."""
    if k > len(ranking.channels):
        raise DomainError(f"cannot select {k} of {len(ranking.channels)} channels")
    eii = ranking.eii
    order = sorted(
        range(len(ranking.channels)),
        key=lambda i: (-eii[i], _canonical_position(ranking.channels[i]), i),
    )
    return [ranking.channels[i] for i in order[:k]]
