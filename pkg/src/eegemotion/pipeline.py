"""Offline experiment flow: preprocess, featurise, select channels, train, report."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import __version__
from .config import PipelineConfig
from .core import BAND_NAMES, COMPONENTS, DEAP_CHANNELS, DomainError, discretize_array, feature_names
from .dsp import EegSegment, WindowSpec, preprocess, window_count
from .ensemble.forest import EnsembleSpec, fit
from .ensemble.metrics import MetricsReport, report_from_confusion, confusion_matrix
from .ensemble.modelset import VadModelSet
from .ensemble.sweep import SweepResult, feature_count_sweep, rank_features
from .features import FeatureTable, band_power_matrix, feature_block
from .io import Recording
from .selection import (
    ChannelRanking,
    CorrelationTable,
    build_correlation_table,
    gini_channel_ranking,
    select_top_channels,
)

log = logging.getLogger(__name__)

RUN_SUBDIRS = ("config", "tables", "models", "logs", "figures")


# -- feature extraction -----------------------------------------------------


def preprocess_recording(rec: Recording, channels: Sequence[str], cfg: PipelineConfig) -> EegSegment:
    """Pick ``channels`` and run the standard chain; re-referencing uses only those channels."""
    seg = rec.segment().pick(channels)
    p = cfg.preprocess
    return preprocess(seg, p.target_fs, (p.band_lo, p.band_hi), causal=p.causal)


def window_band_powers(seg: EegSegment, window: WindowSpec) -> tuple[np.ndarray, np.ndarray]:
    """Band powers [n_windows, n_channels, 5] and window start times."""
    n_len, n_step = window.in_samples(seg.fs)
    n_win = window_count(seg.n_samples, n_len, n_step)
    if n_win == 0:
        raise DomainError(f"segment of {seg.duration_s:.2f} s is shorter than a {window.length_s} s window")
    views = sliding_window_view(seg.samples, n_len, axis=1)[:, ::n_step][:, :n_win]  # [ch, win, n_len]
    bp = band_power_matrix(np.swapaxes(views, 0, 1), seg.fs)
    starts = seg.start_s + np.arange(n_win) * n_step / seg.fs
    return bp, starts


def extract_band_powers(recordings: Sequence[Recording], channels: Sequence[str], window: WindowSpec, cfg: PipelineConfig):
    """Per-recording band powers, with the rating of the recording repeated per window."""
    out = []
    for rec in recordings:
        seg = preprocess_recording(rec, channels, cfg)
        bp, starts = window_band_powers(seg, window)
        out.append((rec, bp, starts))
    return out


def extract_features(
    recordings: Sequence[Recording],
    channels: Sequence[str],
    window: WindowSpec,
    cfg: PipelineConfig,
) -> FeatureTable:
    names = feature_names(channels)
    blocks, trials, subjects, starts, ratings = [], [], [], [], []
    for rec, bp, st in extract_band_powers(recordings, channels, window, cfg):
        blocks.append(feature_block(bp))
        n = len(st)
        trials += [f"{rec.subject_id}/{rec.trial_id}"] * n
        subjects += [rec.subject_id] * n
        starts.append(st)
        lab = rec.label.as_tuple() if rec.label is not None else (np.nan,) * 3
        ratings.append(np.tile(lab, (n, 1)))
    if not blocks:
        return FeatureTable(names, np.zeros((0, len(names))), np.array([], dtype=object), np.array([], dtype=object), np.zeros(0))
    meta = {
        "window_length_s": repr(window.length_s),
        "window_step_s": repr(window.step_s),
        "filter": "causal" if cfg.preprocess.causal else "zero-phase",
        "fs": repr(cfg.preprocess.target_fs),
        "channels": ",".join(channels),
    }
    return FeatureTable(
        names,
        np.vstack(blocks),
        np.array(trials, dtype=object),
        np.array(subjects, dtype=object),
        np.concatenate(starts),
        np.vstack(ratings),
        meta,
    )


def level_labels(table: FeatureTable) -> np.ndarray:
    if table.ratings is None or np.any(np.isnan(table.ratings)):
        raise DomainError("feature table has unlabeled windows")
    return discretize_array(table.ratings).astype(np.int64)


# -- splits -----------------------------------------------------------------


def block_fold_of_trials(trial_ids: Sequence[str], n_folds: int) -> dict[str, int]:
    """Contiguous blocks of trials within each subject; every trial lands in one fold."""
    by_subject: dict[str, list[str]] = {}
    for t in sorted(set(trial_ids)):
        by_subject.setdefault(t.split("/")[0], []).append(t)
    folds = {}
    for trials in by_subject.values():
        n = len(trials)
        for k, t in enumerate(trials):
            folds[t] = k * n_folds // n
    return folds


def window_random_folds(n_rows: int, n_folds: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    perm = rng.permutation(n_rows)
    folds = np.empty(n_rows, dtype=np.int64)
    folds[perm] = np.arange(n_rows) % n_folds
    return folds


@dataclass
class Split:
    """Fold assignment for a training table and an evaluation table."""

    train_folds: np.ndarray
    eval_folds: np.ndarray
    n_folds: int
    mode: str


def make_split(train: FeatureTable, evaluation: FeatureTable, mode: str, n_folds: int, seed: int) -> Split:
    if mode == "block":
        fmap = block_fold_of_trials(list(train.trial_id) + list(evaluation.trial_id), n_folds)
        tf = np.array([fmap[t] for t in train.trial_id], dtype=np.int64)
        ef = np.array([fmap[t] for t in evaluation.trial_id], dtype=np.int64)
        return Split(tf, ef, n_folds, mode)
    if mode == "window-random":
        f = window_random_folds(len(train), n_folds, seed)
        return Split(f, f, n_folds, mode)
    raise DomainError(f"unknown split mode {mode!r}")


def tables_for_split(cfg: PipelineConfig, recordings, channels, length_s: float | None = None):
    """Training and evaluation tables.

    Block mode evaluates on non-overlapping windows (``eval_step_s``, or the
    window length when sweeping lengths); window-random mode evaluates on the
    training windows themselves.
    """
    if length_s is None:
        length = cfg.windows.length_s
        eval_step = min(cfg.windows.eval_step_s, length)
    else:
        length = eval_step = length_s
    train = extract_features(recordings, channels, WindowSpec(length, min(cfg.windows.train_step_s, length)), cfg)
    if cfg.split.mode == "block":
        evaluation = extract_features(recordings, channels, WindowSpec(length, eval_step), cfg)
    else:
        evaluation = train
    return train, evaluation


def cross_validate(
    train: FeatureTable,
    evaluation: FeatureTable,
    split: Split,
    spec: EnsembleSpec,
    seed: int,
    columns: dict[str, list[str]] | None = None,
    n_jobs: int = 1,
) -> dict[str, MetricsReport]:
    """Per-component metrics from confusion counts summed over folds."""
    y_train = level_labels(train)
    y_eval = level_labels(evaluation)
    out = {}
    for k, comp in enumerate(COMPONENTS):
        cols = columns[comp] if columns else list(train.names)
        Xt = train.columns(cols)
        Xe = evaluation.columns(cols)
        cm = np.zeros((3, 3), dtype=np.int64)
        for f in range(split.n_folds):
            tr = split.train_folds != f
            te = split.eval_folds == f
            if not te.any() or not tr.any():
                continue
            if len(np.unique(y_train[tr, k])) < 2:
                log.warning("fold %d: single %s class in training data; predicting it", f, comp)
                pred = np.full(te.sum(), y_train[tr, k][0])
            else:
                m = fit(spec, Xt[tr], y_train[tr, k], seed=seed, feature_names=cols, n_jobs=n_jobs)
                pred = m.predict(Xe[te])
            cm += confusion_matrix(y_eval[te, k], pred)
        out[comp] = report_from_confusion(cm)
    return out


# -- reports ----------------------------------------------------------------


@dataclass
class ExperimentReport:
    config_hash: str
    seed: int
    tables: dict[str, list[dict]] = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)

    @property
    def provenance(self) -> dict:
        return {"config_hash": self.config_hash, "seed": self.seed, "version": __version__}

    def add_table(self, name: str, rows: list[dict]) -> None:
        self.tables[name] = [{**r, "seed": self.seed, "config_hash": self.config_hash} for r in rows]

    def write(self, run_dir: Path) -> None:
        tdir = Path(run_dir) / "tables"
        tdir.mkdir(parents=True, exist_ok=True)
        for name, rows in self.tables.items():
            write_tsv(tdir / f"{name}.tsv", rows, self.provenance)
        (tdir / "provenance.json").write_text(json.dumps(self.provenance, sort_keys=True, indent=2) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6f}"
    return str(v)


def write_tsv(path: Path, rows: list[dict], provenance: dict | None = None) -> None:
    lines = []
    for k, v in sorted((provenance or {}).items()):
        lines.append(f"# {k}={v}")
    if rows:
        cols = list(rows[0])
        lines.append("\t".join(cols))
        lines += ["\t".join(_fmt(r.get(c, "")) for c in cols) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def metrics_rows(reports: dict[str, MetricsReport], **extra) -> list[dict]:
    rows = []
    for comp, r in reports.items():
        rows.append({**extra, "component": comp, **r.as_dict()})
    return rows


def confusion_rows(reports: dict[str, MetricsReport]) -> list[dict]:
    rows = []
    for comp, r in reports.items():
        for i, true in enumerate(r.labels):
            row = {"component": comp, "true": true}
            row.update({f"pred_{p}": int(r.confusion[i, j]) for j, p in enumerate(r.labels)})
            rows.append(row)
    return rows


def prepare_run_dir(run_dir, force: bool = False) -> Path:
    d = Path(run_dir)
    if d.exists() and any(d.iterdir()) and not force:
        raise FileExistsError(f"{d} is not empty; pass --force to overwrite")
    for sub in RUN_SUBDIRS:
        (d / sub).mkdir(parents=True, exist_ok=True)
    return d


# -- stages -----------------------------------------------------------------


def _check_length(recordings: Sequence[Recording], length_s: float) -> None:
    short = [f"{r.subject_id}/{r.trial_id}" for r in recordings if r.duration_s < length_s]
    if short:
        raise DomainError(f"recordings shorter than the {length_s} s window: {short[:5]}")


@dataclass
class WindowSweepResult:
    rows: list[dict]
    selected_length_s: float


def select_window_length(averages: dict[float, float], tolerance: float = 0.005) -> float:
    """Shortest length whose average accuracy is within ``tolerance`` of the best."""
    best = max(averages.values())
    return min(length for length, acc in averages.items() if acc >= best - tolerance)


def run_time_window_sweep(cfg: PipelineConfig, recordings: Sequence[Recording], lengths: Sequence[float] | None = None) -> WindowSweepResult:
    lengths = list(lengths if lengths is not None else cfg.windows.sweep_lengths)
    _check_length(recordings, max(lengths))
    spec = EnsembleSpec("rf-classifier", n_trees=cfg.model.n_trees)
    rows = []
    averages = {}
    for length in lengths:
        train, evaluation = tables_for_split(cfg, recordings, cfg.channels.standard, length_s=length)
        split = make_split(train, evaluation, cfg.split.mode, cfg.split.folds, cfg.run.seed)
        reports = cross_validate(train, evaluation, split, spec, cfg.run.seed, n_jobs=cfg.run.jobs)
        accs = {c: reports[c].accuracy for c in COMPONENTS}
        averages[length] = float(np.mean(list(accs.values())))
        rows.append({"window_length_s": length, **accs, "average": averages[length]})
        log.info("window %.3g s: average accuracy %.4f", length, averages[length])
    return WindowSweepResult(rows, select_window_length(averages))


@dataclass
class ChannelSelectionResult:
    correlation: CorrelationTable
    ranking: ChannelRanking
    selected: list[str]


def _by_subject(extracted, band_index=None):
    bp_by, y_by = {}, {}
    for rec, bp, _ in extracted:
        bp_by.setdefault(rec.subject_id, []).append(bp if band_index is None else bp[:, :, band_index])
        y_by.setdefault(rec.subject_id, []).append(np.tile(rec.label.as_tuple(), (len(bp), 1)))
    return {s: np.concatenate(v) for s, v in bp_by.items()}, {s: np.concatenate(v) for s, v in y_by.items()}


def run_channel_selection(cfg: PipelineConfig, recordings: Sequence[Recording]) -> ChannelSelectionResult:
    if any(r.label is None for r in recordings):
        raise DomainError("channel selection needs labeled recordings")
    channels = [ch for ch in DEAP_CHANNELS if all(ch in r.channels for r in recordings)]
    if len(channels) != len(DEAP_CHANNELS):
        missing = sorted(set(DEAP_CHANNELS) - set(channels))
        raise DomainError(f"channel selection needs all 32 channels; missing {missing}")
    window = WindowSpec(cfg.windows.length_s, cfg.windows.selection_step_s)
    _check_length(recordings, window.length_s)
    extracted = extract_band_powers(recordings, channels, window, cfg)
    bp_by, y_by = _by_subject(extracted)
    corr = build_correlation_table(bp_by, y_by, channels)
    b = BAND_NAMES.index(cfg.selection.band)
    X_by = {s: v[:, :, b] for s, v in bp_by.items()}
    spec = EnsembleSpec("rf-regressor", n_trees=cfg.selection.n_trees, max_features="third", min_samples_leaf=5)
    ranking = gini_channel_ranking(
        X_by, y_by, channels, iterations=cfg.selection.iterations, spec=spec, seed=cfg.run.seed, n_jobs=cfg.run.jobs
    )
    return ChannelSelectionResult(corr, ranking, select_top_channels(ranking, cfg.channels.n_select))


@dataclass
class TrainResult:
    models: VadModelSet
    cv: dict[str, MetricsReport]
    sweep: SweepResult | None
    top_features: dict[str, list[str]]


def train_final(cfg: PipelineConfig, recordings: Sequence[Recording], channels: Sequence[str] | None = None) -> TrainResult:
    channels = list(channels or cfg.channels.runtime)
    _check_length(recordings, cfg.windows.length_s)
    seed, jobs = cfg.run.seed, cfg.run.jobs
    spec = EnsembleSpec("extra-trees-classifier", n_trees=cfg.model.n_trees)
    train, evaluation = tables_for_split(cfg, recordings, channels)
    y = level_labels(train)
    names = list(train.names)

    full = {}
    for k, comp in enumerate(COMPONENTS):
        full[comp] = fit(spec, train.X, y[:, k], seed=seed, feature_names=names, n_jobs=jobs)
    ranked = {c: [names[i] for i in rank_features(full[c])] for c in COMPONENTS}

    split = make_split(train, evaluation, cfg.split.mode, cfg.split.folds, seed)
    sweep = None
    if cfg.model.run_sweep:
        tr = split.train_folds != 0
        te = split.eval_folds == 0
        y_eval = level_labels(evaluation)
        n_range = range(cfg.model.sweep_min, cfg.model.sweep_max + 1)
        sweep = feature_count_sweep(
            train.X[tr], y[tr], evaluation.X[te], y_eval[te], names, n_range,
            spec=spec, seed=seed, n_jobs=jobs,
        )
    top_n = cfg.model.top_n
    top = {c: ranked[c][:top_n] for c in COMPONENTS}
    cv = cross_validate(train, evaluation, split, spec, seed, columns=top, n_jobs=jobs)

    models = {}
    for k, comp in enumerate(COMPONENTS):
        models[comp] = fit(spec, train.columns(top[comp]), y[:, k], seed=seed, feature_names=top[comp], n_jobs=jobs)
    metadata = {
        "window_length_s": cfg.windows.length_s,
        "fs": cfg.preprocess.target_fs,
        "band": [cfg.preprocess.band_lo, cfg.preprocess.band_hi],
        "causal_filter": cfg.preprocess.causal,
        "channels": channels,
        "seed": seed,
        "top_n": top_n,
        "config_hash": cfg.config_hash(),
        "version": __version__,
    }
    return TrainResult(VadModelSet(models, metadata), cv, sweep, top)


def train_per_subject(cfg: PipelineConfig, recordings: Sequence[Recording], channels: Sequence[str] | None = None):
    """One model set per subject; cross-validation confusions are summed over subjects."""
    by_subject: dict[str, list[Recording]] = {}
    for rec in recordings:
        by_subject.setdefault(rec.subject_id, []).append(rec)
    results = {s: train_final(cfg, by_subject[s], channels) for s in sorted(by_subject)}
    cv = {}
    for c in COMPONENTS:
        cm = sum(np.asarray(r.cv[c].confusion) for r in results.values())
        cv[c] = report_from_confusion(cm)
    return results, cv


def evaluate_model_set(models: VadModelSet, recordings: Sequence[Recording], cfg: PipelineConfig) -> dict[str, MetricsReport]:
    channels = models.metadata.get("channels") or list(cfg.channels.runtime)
    length = float(models.metadata.get("window_length_s", cfg.windows.length_s))
    table = extract_features(recordings, channels, WindowSpec(length, min(cfg.windows.eval_step_s, length)), cfg)
    y = level_labels(table)
    preds = models.predict_matrix(table.X, table.names)
    return {c: report_from_confusion(confusion_matrix(y[:, k], preds[c])) for k, c in enumerate(COMPONENTS)}
