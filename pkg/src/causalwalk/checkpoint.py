"""Versioned text checkpoints.

Layout, one record per line, fields separated by tabs::

    causalwalk-ckpt v1
    config  <json object: {"model": {...}, "train": {...}, "featurizer": {...}}>
    param   <name>  <shape, e.g. 64x256>  <row-major values, %.17g>
    ...
    dict    D_g     <N>x<k>x<d>           <row-major values, %.17g>

Seventeen significant digits make every float64 round-trip exactly.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import asdict
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .autodiff import Tensor
from .featurize import FeaturizerConfig
from .model import ConfounderDictionary, ModelConfig, WalkParams
from .training import TrainConfig

__all__ = ["HEADER", "Checkpoint", "save_checkpoint", "load_checkpoint", "dumps", "loads"]

HEADER = "causalwalk-ckpt v1"


class Checkpoint(NamedTuple):
    params: WalkParams
    dictionary: ConfounderDictionary
    model_config: ModelConfig
    train_config: TrainConfig | None
    featurizer: FeaturizerConfig


def _values(arr: np.ndarray) -> str:
    return " ".join(f"{v:.17g}" for v in np.asarray(arr, dtype=np.float64).reshape(-1))


def _shape(arr: np.ndarray) -> str:
    return "x".join(str(s) for s in arr.shape)


def dumps(params: WalkParams, dictionary: ConfounderDictionary, model_config: ModelConfig,
          train_config: TrainConfig | None = None, featurizer: FeaturizerConfig | None = None) -> str:
    model = asdict(model_config)
    model["labels"] = list(model["labels"])
    feat = asdict(featurizer or FeaturizerConfig(dim=model_config.feature_dim))
    feat["ngram_orders"] = sorted(feat["ngram_orders"])
    config = {"model": model, "train": asdict(train_config) if train_config else None, "featurizer": feat}
    lines = [HEADER, "config\t" + json.dumps(config, sort_keys=True)]
    for name, t in params.items():
        lines.append(f"param\t{name}\t{_shape(t.data)}\t{_values(t.data)}")
    lines.append(f"dict\tD_g\t{_shape(dictionary.D_g)}\t{_values(dictionary.D_g)}")
    return "\n".join(lines) + "\n"


def _parse_array(shape: str, values: str) -> np.ndarray:
    dims = tuple(int(s) for s in shape.split("x"))
    flat = np.array([float(v) for v in values.split()], dtype=np.float64)
    if flat.size != int(np.prod(dims)):
        raise ValueError(f"checkpoint record declares shape {dims} but has {flat.size} values")
    return flat.reshape(dims)


def loads(text: str) -> Checkpoint:
    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise ValueError(f"not a checkpoint: expected header {HEADER!r}")
    config = None
    tensors: OrderedDict[str, Tensor] = OrderedDict()
    D_g = None
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        kind, _, rest = line.partition("\t")
        if kind == "config":
            config = json.loads(rest)
        elif kind == "param":
            name, shape, values = rest.split("\t")
            tensors[name] = Tensor(_parse_array(shape, values), requires_grad=True)
        elif kind == "dict":
            _, shape, values = rest.split("\t")
            D_g = _parse_array(shape, values)
        else:
            raise ValueError(f"checkpoint line {lineno}: unknown record kind {kind!r}")
    if config is None or D_g is None:
        raise ValueError("checkpoint is missing its config or dictionary record")
    model_config = ModelConfig(**config["model"])
    train_config = TrainConfig(**config["train"]) if config.get("train") else None
    featurizer = FeaturizerConfig(**config.get("featurizer", {"dim": model_config.feature_dim}))
    if featurizer.dim != model_config.feature_dim:
        raise ValueError("checkpoint featurizer dim does not match the model feature_dim")
    expected = WalkParams.shapes(model_config)
    if list(expected) != list(tensors) or any(tensors[k].shape != s for k, s in expected.items()):
        raise ValueError("checkpoint parameters do not match the recorded model config")
    return Checkpoint(WalkParams(tensors), ConfounderDictionary(D_g, frozen=True), model_config, train_config, featurizer)


def save_checkpoint(path, params, dictionary, model_config, train_config=None, featurizer=None) -> None:
    Path(path).write_text(dumps(params, dictionary, model_config, train_config, featurizer), encoding="utf-8")


def load_checkpoint(path) -> Checkpoint:
    return loads(Path(path).read_text(encoding="utf-8"))
