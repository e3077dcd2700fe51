from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..core import COMPONENTS, VadLevel
from . import serialize
from .forest import ContractError, TreeEnsemble


@dataclass(eq=False)
class VadModelSet:
    """One classifier per VAD component, each with its own feature subset."""

    models: dict[str, TreeEnsemble]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        missing = [c for c in COMPONENTS if c not in self.models]
        if missing:
            raise ContractError(f"model set lacks components: {missing}")

    def features(self, component: str) -> tuple[str, ...]:
        return self.models[component].feature_names

    @property
    def required_features(self) -> list[str]:
        seen = dict.fromkeys(n for c in COMPONENTS for n in self.features(c))
        return list(seen)

    def check_feature_space(self, available) -> None:
        missing = [n for n in self.required_features if n not in set(available)]
        if missing:
            raise ContractError(f"features required by the model are unavailable: {', '.join(missing)}")

    def predict(self, x: Mapping[str, float]) -> tuple[VadLevel, dict[str, np.ndarray]]:
        levels = {}
        probs = {}
        for c in COMPONENTS:
            m = self.models[c]
            p = m.predict_proba(x)[0]
            probs[c] = p
            levels[c] = int(m.classes[int(np.argmax(p))])
        return VadLevel(**levels), probs

    def predict_matrix(self, X: np.ndarray, names) -> dict[str, np.ndarray]:
        index = {n: i for i, n in enumerate(names)}
        out = {}
        for c in COMPONENTS:
            m = self.models[c]
            missing = [n for n in m.feature_names if n not in index]
            if missing:
                raise ContractError(f"missing features: {', '.join(missing)}")
            out[c] = m.predict(X[:, [index[n] for n in m.feature_names]])
        return out

    def save(self, path) -> None:
        serialize.save(path, {c: self.models[c] for c in COMPONENTS}, self.metadata)

    @classmethod
    def load(cls, path) -> "VadModelSet":
        models, meta = serialize.load(path)
        return cls(models, meta)
