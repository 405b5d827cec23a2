"""Versioned JSON checkpoints: config, vocabularies, and raw tensor bytes.

Tensor data is base64 of the little-endian float64 buffer, so a save/load
round trip reproduces every parameter bit for bit.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .model import ModelConfig, ModelParameters, init_parameters
from .corpus import Vocabulary

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _encode(t: Tensor) -> dict:
    data = np.ascontiguousarray(t.data, dtype="<f8")
    return {"shape": list(t.shape), "data": base64.b64encode(data.tobytes()).decode("ascii")}


def _decode(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(obj["shape"]).astype(np.float64)


def save_checkpoint(path: str | Path, params: ModelParameters,
                    config: ModelConfig) -> None:
    labels = params.cgcn.label_table.labels if params.cgcn else []
    relations = params.dgcn.relation_table.relations if params.dgcn else []
    payload = {
        "format_version": FORMAT_VERSION,
        "config": config.to_dict(),
        "vocab": params.vocab.words,
        "labels": labels,
        "relations": relations,
        "tensors": {name: _encode(t) for name, t in params.named_tensors()},
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[ModelParameters, ModelConfig]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {version!r}")
    config = ModelConfig.from_dict(payload["config"])
    vocab = Vocabulary()
    vocab.words = list(payload["vocab"])
    vocab.index = {w: i for i, w in enumerate(vocab.words)}

    labels = list(payload["labels"])
    relations = payload["relations"]
    # The stored relation list already contains self/unknown/inverse rows;
    # keep only the base corpus relations when rebuilding.
    base_relations = [r for r in relations
                     if not r.startswith("inv:") and r not in ("self", "<unk>")]
    params = init_parameters(config, vocab, labels, base_relations,
                             rng=np.random.default_rng(0))
    if params.dgcn is not None and params.dgcn.relation_table.relations != relations:
        raise CheckpointError("relation vocabulary mismatch after rebuild")

    tensors = payload["tensors"]
    expected = {name for name, _ in params.named_tensors()}
    stored = set(tensors)
    if expected != stored:
        missing = sorted(expected - stored)
        extra = sorted(stored - expected)
        raise CheckpointError(f"tensor set mismatch: missing {missing}, extra {extra}")
    for name, tensor in params.named_tensors():
        data = _decode(tensors[name])
        if tuple(data.shape) != tensor.shape:
            raise CheckpointError(
                f"tensor {name!r} has shape {tuple(data.shape)}, expected {tensor.shape}")
        tensor.data = data
    return params, config
