"""Binary model container.

Layout (all integers little-endian)::

    magic      8 bytes   b"VADMODEL"
    version    u16
    meta_len   u32
    meta       meta_len bytes of UTF-8 JSON (sorted keys)
    per ensemble, per tree:
        n_nodes  u32
        n_out    u16
        feature  i32[n_nodes]      (-1 marks a leaf)
        threshold f64[n_nodes]
        left     i32[n_nodes]
        right    i32[n_nodes]
        n_samples i64[n_nodes]
        impurity f64[n_nodes]
        value    f64[n_nodes * n_out]
    sha256     32 bytes over everything above

The JSON block carries, per ensemble, its name, mode, hyperparameters, seed,
feature-name table and class labels, plus free-form metadata.
"""

from __future__ import annotations

import hashlib
import json
import struct
from typing import Mapping

import numpy as np

from .forest import DecisionTree, EnsembleSpec, TreeEnsemble

MAGIC = b"VADMODEL"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


def _spec_from_hyperparams(hp: dict) -> EnsembleSpec:
    return EnsembleSpec(
        mode=hp["mode"],
        n_trees=hp["n_trees"],
        max_features=hp["max_features"],
        min_samples_leaf=hp["min_samples_leaf"],
        max_depth=None if hp["max_depth"] < 0 else hp["max_depth"],
    )


def dumps(ensembles: Mapping[str, TreeEnsemble], metadata: dict | None = None) -> bytes:
    meta = {
        "metadata": metadata or {},
        "ensembles": [
            {
                "name": name,
                "hyperparams": m.hyperparams(),
                "seed": m.seed,
                "feature_names": list(m.feature_names),
                "classes": None if m.classes is None else [int(c) for c in m.classes],
                "n_trees": len(m.trees),
            }
            for name, m in ensembles.items()
        ],
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(blob)), blob]
    for m in ensembles.values():
        for t in m.trees:
            n, n_out = t.node_count, t.value.shape[1]
            parts.append(struct.pack("<IH", n, n_out))
            parts.append(t.feature.astype("<i4").tobytes())
            parts.append(t.threshold.astype("<f8").tobytes())
            parts.append(t.left.astype("<i4").tobytes())
            parts.append(t.right.astype("<i4").tobytes())
            parts.append(t.n_node_samples.astype("<i8").tobytes())
            parts.append(t.impurity.astype("<f8").tobytes())
            parts.append(t.value.astype("<f8").tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def loads(data: bytes) -> tuple[dict[str, TreeEnsemble], dict]:
    if len(data) < len(MAGIC) + 6 + 32 or data[: len(MAGIC)] != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    body, digest = data[:-32], data[-32:]
    version, meta_len = struct.unpack_from("<HI", data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    if hashlib.sha256(body).digest() != digest:
        raise ModelFormatError("checksum mismatch")
    off = len(MAGIC) + 6
    meta = json.loads(body[off : off + meta_len].decode("utf-8"))
    off += meta_len

    def take(dtype, count):
        nonlocal off
        arr = np.frombuffer(body, dtype=dtype, count=count, offset=off)
        off += arr.nbytes
        return arr

    out = {}
    for entry in meta["ensembles"]:
        trees = []
        for _ in range(entry["n_trees"]):
            n, n_out = struct.unpack_from("<IH", body, off)
            off += 6
            feature = take("<i4", n).astype(np.int64)
            threshold = take("<f8", n).astype(np.float64)
            left = take("<i4", n).astype(np.int64)
            right = take("<i4", n).astype(np.int64)
            n_samples = take("<i8", n).astype(np.int64)
            impurity = take("<f8", n).astype(np.float64)
            value = take("<f8", n * n_out).astype(np.float64).reshape(n, n_out)
            trees.append(DecisionTree(feature, threshold, left, right, value, n_samples, impurity))
        classes = None if entry["classes"] is None else np.array(entry["classes"])
        out[entry["name"]] = TreeEnsemble(
            _spec_from_hyperparams(entry["hyperparams"]),
            tuple(entry["feature_names"]),
            entry["seed"],
            trees,
            classes,
        )
    if off != len(body):
        raise ModelFormatError(f"trailing bytes after tree data at offset {off}")
    return out, meta["metadata"]


def save(path, ensembles: Mapping[str, TreeEnsemble], metadata: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(ensembles, metadata))


def load(path) -> tuple[dict[str, TreeEnsemble], dict]:
    with open(path, "rb") as fh:
        return loads(fh.read())
