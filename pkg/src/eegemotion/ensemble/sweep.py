from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import DomainError
from .forest import EnsembleSpec, TreeEnsemble, fit


def rank_features(model: TreeEnsemble) -> list[int]:
    """Column indices by descending importance; ties keep column order."""
    gi = model.gini_importances()
    return sorted(range(len(gi)), key=lambda i: (-gi[i], i))


@dataclass
class SweepResult:
    components: tuple[str, ...]
    rows: list[tuple[int, tuple[float, ...], float]]  # (n, per-component accuracy, average)
    chosen_n: int
    rankings: dict[str, list[str]]

    def table(self) -> list[dict]:
        out = []
        for n, accs, avg in self.rows:
            row = {"n_features": n}
            row.update({c: a for c, a in zip(self.components, accs)})
            row["average"] = avg
            out.append(row)
        return out


def choose_best(rows: Sequence[tuple[int, float]]) -> int:
    """Highest average wins; among equal averages the smaller n."""
    best = max(avg for _, avg in rows)
    return min(n for n, avg in rows if avg == best)


def feature_count_sweep(
    X_train: np.ndarray,
    Y_train: np.ndarray,
    X_test: np.ndarray,
    Y_test: np.ndarray,
    feature_names: Sequence[str],
    n_range: Sequence[int] = range(25, 36),
    components: Sequence[str] = ("valence", "arousal", "dominance"),
    spec: EnsembleSpec = EnsembleSpec(),
    seed: int = 0,
    full_models: dict[str, TreeEnsemble] | None = None,
    n_jobs: int = 1,
) -> SweepResult:
    """Refit on the top-n features of each component for every n in ``n_range``.

    ``Y_*`` hold one label column per component.
    """
    Y_train = np.asarray(Y_train).reshape(len(X_train), -1)
    Y_test = np.asarray(Y_test).reshape(len(X_test), -1)
    n_range = list(n_range)
    d = X_train.shape[1]
    if not n_range:
        raise DomainError("empty feature-count range")
    if max(n_range) > d or min(n_range) < 1:
        raise DomainError(f"feature counts {n_range[0]}..{n_range[-1]} outside 1..{d}")
    names = list(feature_names)
    order = {}
    for k, comp in enumerate(components):
        full = (full_models or {}).get(comp)
        if full is None:
            full = fit(spec, X_train, Y_train[:, k], seed=seed, feature_names=names, n_jobs=n_jobs)
        order[comp] = rank_features(full)

    rows = []
    for n in n_range:
        accs = []
        for k, comp in enumerate(components):
            cols = order[comp][:n]
            m = fit(spec, X_train[:, cols], Y_train[:, k], seed=seed, n_jobs=n_jobs)
            accs.append(float(np.mean(m.predict(X_test[:, cols]) == Y_test[:, k])))
        rows.append((n, tuple(accs), float(np.mean(accs))))
    chosen = choose_best([(n, avg) for n, _, avg in rows])
    rankings = {c: [names[i] for i in order[c]] for c in components}
    return SweepResult(tuple(components), rows, chosen, rankings)
