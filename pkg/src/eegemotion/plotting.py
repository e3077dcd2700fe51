"""Report figures. Rendered with the Agg canvas directly (no pyplot state), and
saved without PNG metadata so identical inputs give identical files."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .core import COMPONENTS, LEVELS, LOBE_ABBREV
from .ensemble.metrics import MetricsReport
from .ensemble.sweep import SweepResult
from .selection import ChannelRanking, CorrelationTable

_LEVEL_NAMES = {-1: "low", 0: "medium", 1: "high"}


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    FigureCanvasAgg(fig)
    fig.savefig(path, format="png", dpi=100, metadata={"Software": None})
    return path


def confusion_figure(reports: Mapping[str, MetricsReport], path) -> Path:
    fig = Figure(figsize=(10, 3.4))
    for i, comp in enumerate(COMPONENTS):
        ax = fig.add_subplot(1, 3, i + 1)
        rep = reports[comp]
        cm = np.asarray(rep.confusion)
        labels = [_LEVEL_NAMES.get(int(lv), str(lv)) for lv in getattr(rep, "labels", LEVELS)]
        ax.imshow(cm, cmap="Blues")
        for (r, c), v in np.ndenumerate(cm):
            ax.text(c, r, str(int(v)), ha="center", va="center", fontsize=8)
        ax.set_xticks(range(len(labels)), labels)
        ax.set_yticks(range(len(labels)), labels)
        ax.set_xlabel("predicted")
        if i == 0:
            ax.set_ylabel("true")
        ax.set_title(f"{comp} (acc {rep.accuracy:.3f})")
    fig.tight_layout()
    return _save(fig, path)


def eii_figure(ranking: ChannelRanking, selected: Sequence[str], path) -> Path:
    eii = ranking.eii
    order = np.argsort(-eii, kind="stable")
    names = [ranking.channels[i] for i in order]
    fig = Figure(figsize=(10, 3.5))
    ax = fig.add_subplot(1, 1, 1)
    colors = ["tab:orange" if n in selected else "tab:gray" for n in names]
    ax.bar(range(len(names)), eii[order], color=colors)
    ax.set_xticks(range(len(names)), names, rotation=90, fontsize=7)
    ax.set_ylabel("emotion importance index")
    ax.set_title("channel ranking (selected in orange)")
    fig.tight_layout()
    return _save(fig, path)


def correlation_figure(table: CorrelationTable, path) -> Path:
    fig = Figure(figsize=(6, 3.6))
    ax = fig.add_subplot(1, 1, 1)
    im = ax.imshow(table.sum, cmap="viridis", aspect="auto")
    ax.set_yticks(range(len(table.bands)), table.bands)
    ax.set_xticks(range(len(table.lobes)), [LOBE_ABBREV.get(lb, lb) for lb in table.lobes])
    for (b, j), v in np.ndenumerate(table.sum):
        ax.text(j, b, f"{v:.2f}", ha="center", va="center", fontsize=7, color="w")
    ax.set_title("sum of mean |r| over valence, arousal, dominance")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    return _save(fig, path)


def window_sweep_figure(rows: Sequence[Mapping], selected_length_s: float, path) -> Path:
    lengths = [r["window_length_s"] for r in rows]
    fig = Figure(figsize=(5, 3.4))
    ax = fig.add_subplot(1, 1, 1)
    for comp in COMPONENTS:
        ax.plot(lengths, [r[comp] for r in rows], marker="o", label=comp)
    ax.plot(lengths, [r["average"] for r in rows], marker="s", color="k", label="average")
    ax.axvline(selected_length_s, color="gray", ls="--")
    ax.set_xlabel("window length (s)")
    ax.set_ylabel("accuracy")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def feature_sweep_figure(sweep: SweepResult, path) -> Path:
    ns = [r[0] for r in sweep.rows]
    fig = Figure(figsize=(5, 3.4))
    ax = fig.add_subplot(1, 1, 1)
    for k, comp in enumerate(sweep.components):
        ax.plot(ns, [r[1][k] for r in sweep.rows], marker="o", label=comp)
    ax.plot(ns, [r[2] for r in sweep.rows], marker="s", color="k", label="average")
    ax.axvline(sweep.chosen_n, color="gray", ls="--")
    ax.set_xlabel("number of features")
    ax.set_ylabel("accuracy")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)
