"""Random-forest and extremely-randomized-tree ensembles."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import _tree

MODES = ("rf-regressor", "rf-classifier", "extra-trees-classifier")


class TrainingError(ValueError):
    pass


class ContractError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DecisionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_node_samples: np.ndarray
    impurity: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        return _tree.apply_tree(self.feature, self.threshold, self.left, self.right, X)

    def impurity_decrease(self, n_features: int) -> np.ndarray:
        """Unnormalised per-feature decrease, weighted by node sample fraction."""
        out = np.zeros(n_features)
        internal = np.flatnonzero(self.feature >= 0)
        n = self.n_node_samples.astype(float)
        for node in internal:
            l, r = self.left[node], self.right[node]
            dec = n[node] * self.impurity[node] - n[l] * self.impurity[l] - n[r] * self.impurity[r]
            out[self.feature[node]] += dec
        return out / n[0]


@dataclass(frozen=True)
class EnsembleSpec:
    mode: str = "extra-trees-classifier"
    n_trees: int = 100
    max_features: int | str | None = None
    min_samples_leaf: int | None = None
    max_depth: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown ensemble mode {self.mode!r}; expected one of {MODES}")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")

    @property
    def is_classifier(self) -> bool:
        return self.mode != "rf-regressor"

    @property
    def bootstrap(self) -> bool:
        return self.mode != "extra-trees-classifier"

    def resolved_max_features(self, d: int) -> int:
        mf = self.max_features
        if mf is None:
            mf = "sqrt" if self.is_classifier else "third"
        if mf == "sqrt":
            k = math.ceil(math.sqrt(d))
        elif mf == "third":
            k = math.ceil(d / 3)
        elif mf == "all":
            k = d
        else:
            k = int(mf)
        return max(1, min(d, k))

    def resolved_min_leaf(self) -> int:
        if self.min_samples_leaf is not None:
            return self.min_samples_leaf
        return 1 if self.is_classifier else 5


@dataclass(eq=False)
class TreeEnsemble:
    spec: EnsembleSpec
    feature_names: tuple[str, ...]
    seed: int
    trees: list[DecisionTree] = field(default_factory=list)
    classes: np.ndarray | None = None

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def is_classifier(self) -> bool:
        return self.spec.is_classifier

    def hyperparams(self) -> dict:
        return {
            "mode": self.spec.mode,
            "n_trees": self.spec.n_trees,
            "max_features": self.spec.resolved_max_features(self.n_features),
            "min_samples_leaf": self.spec.resolved_min_leaf(),
            "max_depth": -1 if self.spec.max_depth is None else self.spec.max_depth,
            "bootstrap": self.spec.bootstrap,
        }

    # -- prediction -------------------------------------------------------

    def _matrix(self, X) -> np.ndarray:
        if isinstance(X, Mapping):
            return self._from_mapping([X])
        if isinstance(X, Sequence) and X and isinstance(X[0], Mapping):
            return self._from_mapping(X)
        if hasattr(X, "names") and hasattr(X, "values") and not isinstance(X, np.ndarray):
            return self._from_mapping([dict(zip(X.names, np.asarray(X.values).tolist()))])
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ContractError(f"expected {self.n_features} feature columns, got {X.shape[1]}")
        return X

    def _from_mapping(self, rows) -> np.ndarray:
        missing = sorted({n for r in rows for n in self.feature_names if n not in r})
        if missing:
            raise ContractError(f"missing features: {', '.join(missing)}")
        return np.array([[float(r[n]) for n in self.feature_names] for r in rows])

    def _check_fitted(self):
        if not self.trees:
            raise ContractError("model is not fitted")

    def _accumulate(self, X: np.ndarray) -> np.ndarray:
        self._check_fitted()
        out = np.zeros((X.shape[0], self.trees[0].value.shape[1]))
        for t in self.trees:
            _tree.accumulate_tree(t.feature, t.threshold, t.left, t.right, t.value, X, out)
        return out / len(self.trees)

    def predict_proba(self, X) -> np.ndarray:
        if not self.is_classifier:
            raise ContractError("predict_proba needs a classifier")
        P = self._accumulate(self._matrix(X))
        return P / P.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        X = self._matrix(X)
        if not self.is_classifier:
            return self._accumulate(X)[:, 0]
        # argmax returns the first maximum; classes are sorted, so ties go to the lowest level
        return self.classes[np.argmax(self.predict_proba(X), axis=1)]

    def gini_importances(self) -> np.ndarray:
        self._check_fitted()
        acc = np.zeros(self.n_features)
        for t in self.trees:
            dec = t.impurity_decrease(self.n_features)
            s = dec.sum()
            if s > 0:
                acc += dec / s
        total = acc.sum()
        if total <= 0:
            return np.full(self.n_features, 1.0 / self.n_features)
        return acc / total


def tree_seeds(seed: int, n: int) -> np.ndarray:
    return np.random.SeedSequence(seed).generate_state(n, dtype=np.uint64)


def fit(
    spec: EnsembleSpec,
    X,
    y,
    seed: int = 0,
    feature_names: Sequence[str] | None = None,
    n_jobs: int = 1,
) -> TreeEnsemble:
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise TrainingError("empty training data")
    if X.shape[0] != y.shape[0]:
        raise TrainingError(f"{X.shape[0]} rows but {y.shape[0]} targets")
    if not np.all(np.isfinite(X)):
        raise TrainingError("training matrix contains NaN or Inf")
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(X.shape[1]))
    if len(names) != X.shape[1]:
        raise TrainingError("feature_names length does not match X")

    if spec.is_classifier:
        classes, y_cls = np.unique(y, return_inverse=True)
        if len(classes) < 2:
            raise TrainingError(f"single class: every label is {classes[0]!r}")
        y_cls = y_cls.astype(np.int64)
        y_reg = np.zeros(1)
        n_classes = len(classes)
    else:
        classes = None
        y_reg = y.astype(float)
        if not np.all(np.isfinite(y_reg)):
            raise TrainingError("regression targets contain NaN or Inf")
        y_cls = np.zeros(1, dtype=np.int64)
        n_classes = 0

    max_features = spec.resolved_max_features(X.shape[1])
    min_leaf = spec.resolved_min_leaf()
    max_depth = -1 if spec.max_depth is None else spec.max_depth
    extra = spec.mode == "extra-trees-classifier"
    seeds = tree_seeds(seed, spec.n_trees)

    def grow(s):
        arrays = _tree.build_tree(
            X, y_cls, y_reg, n_classes, X.shape[0], spec.bootstrap,
            max_features, min_leaf, max_depth, extra, s,
        )
        return DecisionTree(*arrays)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(grow, seeds))
    else:
        trees = [grow(s) for s in seeds]
    return TreeEnsemble(spec, names, int(seed), trees, classes)


def gini_importances(model: TreeEnsemble) -> np.ndarray:
    return model.gini_importances()


def predict(model: TreeEnsemble, x):
    """Label and probability vector for one sample (classifiers), or a value."""
    X = model._matrix(x)
    if model.is_classifier:
        p = model.predict_proba(X)[0]
        return model.classes[int(np.argmax(p))], p
    return float(model.predict(X)[0])
