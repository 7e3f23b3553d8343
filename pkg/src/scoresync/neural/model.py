"""Sequential toy models, SGD with momentum, and weight files."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import InputError
from .layers import (LAYER_TYPES, Conv2d, Dense, Flatten, MaxPool2d, MaxUnpool2d, Pad2d, ReLU,
                     Sasa)

GRID = 64


class ToyModel:
    """An ordered layer list with a parameter collection and its build config."""

    def __init__(self, layers, config: dict):
        self.layers = list(layers)
        self.config = dict(config)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    __call__ = forward

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def named_params(self):
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield f"{i}.{name}", layer, name

    def n_params(self) -> int:
        return sum(layer.params[name].size for _, layer, name in self.named_params())

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()


class SGD:
    """Stochastic gradient descent with classical momentum."""

    def __init__(self, model: ToyModel, lr: float, momentum: float = 0.9, clip: float | None = None,
                 weight_decay: float = 0.0):
        self.model, self.lr, self.momentum, self.clip = model, lr, momentum, clip
        self.weight_decay = weight_decay
        self.velocity = {key: np.zeros_like(layer.params[name]) for key, layer, name in model.named_params()}

    def step(self):
        items = list(self.model.named_params())
        scale = 1.0
        if self.clip is not None:
            norm = np.sqrt(sum(np.sum(layer.grads[name] ** 2) for _, layer, name in items))
            if norm > self.clip:
                scale = self.clip / norm
        for key, layer, name in items:
            v = self.velocity[key]
            v *= self.momentum
            v -= self.lr * (scale * layer.grads[name] + self.weight_decay * layer.params[name])
            layer.params[name] += v


def build_inflection_model(dilations=(1, 2, 3), channels=(4, 8, 8), out_len=8, hidden=64, seed=0):
    """Three conv + subsampling blocks (dilation per block), flatten, two dense layers."""
    rng = np.random.default_rng(seed)
    layers, in_ch, size = [], 1, GRID
    for d, ch in zip(dilations, channels):
        layers += [Pad2d(d), Conv2d(in_ch, ch, 3, d, rng), ReLU(), MaxPool2d()]
        in_ch, size = ch, size // 2
    layers += [Flatten(), Dense(in_ch * size * size, hidden, rng), ReLU(), Dense(hidden, out_len, rng)]
    config = {"task": "inflection", "dilations": list(dilations), "channels": list(channels),
              "out_len": out_len, "hidden": hidden, "seed": seed}
    return ToyModel(layers, config)


def build_path_model(attention=True, channels=(4, 8), out_len=GRID, hidden=64, extent=1, seed=0):
    """Conv/pool encoder, max-unpool with the stored mask, two SASA layers
    (or two equal-width 3x3 convolutions when ``attention`` is False), a 1x1
    channel merge and a dense head whose bias starts on the diagonal."""
    rng = np.random.default_rng(seed)
    c1, c2 = channels
    layers = [Pad2d(1), Conv2d(1, c1, 3, 1, rng), ReLU(), MaxPool2d(),
              Pad2d(1), Conv2d(c1, c2, 3, 1, rng), ReLU(), MaxPool2d()]
    pool_index = len(layers) - 1
    layers.append(MaxUnpool2d(layers[pool_index], pool_index))
    for _ in range(2):
        if attention:
            layers += [Sasa(c2, extent, 4, rng), ReLU()]
        else:
            layers += [Pad2d(1), Conv2d(c2, c2, 3, 1, rng), ReLU()]
    size = GRID // 2
    layers += [Conv2d(c2, 1, 1, 1, rng), Flatten(), Dense(size * size, hidden, rng), ReLU(),
               Dense(hidden, out_len, rng, bias_init=np.linspace(0, GRID - 1, out_len))]
    for layer in layers[-1:]:
        layer.params["weight"] *= 0.1
    config = {"task": "path", "attention": attention, "channels": list(channels), "out_len": out_len,
              "hidden": hidden, "extent": extent, "seed": seed}
    return ToyModel(layers, config)


def save_model(model: ToyModel, prefix) -> tuple[Path, Path]:
    """Write ``prefix.json`` (manifest) and ``prefix.bin`` (little-endian float64)."""
    prefix = Path(prefix)
    manifest_path, blob_path = prefix.with_suffix(".json"), prefix.with_suffix(".bin")
    chunks, layers, offset = [], [], 0
    for layer in model.layers:
        entry = {"type": type(layer).__name__, "args": layer.spec(), "params": {}}
        for name in sorted(layer.params):
            arr = np.ascontiguousarray(layer.params[name], dtype="<f8")
            entry["params"][name] = {"shape": list(arr.shape), "offset": offset}
            chunks.append(arr.tobytes())
            offset += arr.size
        layers.append(entry)
    manifest = {"format": "scoresync-toy-model/1", "config": model.config, "layers": layers,
                "n_values": offset, "blob": blob_path.name}
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    blob_path.write_bytes(b"".join(chunks))
    return manifest_path, blob_path


def load_model(prefix) -> ToyModel:
    prefix = Path(prefix)
    manifest_path = prefix if prefix.suffix == ".json" else prefix.with_suffix(".json")
    try:
        manifest = json.loads(manifest_path.read_text())
        blob = np.frombuffer((manifest_path.parent / manifest["blob"]).read_bytes(), dtype="<f8")
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot load model from {manifest_path}: {exc}") from exc
    if blob.size != manifest["n_values"]:
        raise InputError(f"{manifest_path}: weight blob has {blob.size} values, manifest says {manifest['n_values']}")
    layers = []
    for entry in manifest["layers"]:
        cls = LAYER_TYPES.get(entry["type"])
        if cls is None:
            raise InputError(f"unknown layer type {entry['type']!r}")
        args = dict(entry["args"])
        if cls is MaxUnpool2d:
            layer = MaxUnpool2d(layers[args["pool_index"]], args["pool_index"])
        elif cls is Conv2d:
            layer = Conv2d(args["in_ch"], args["out_ch"], args["m"], args["dilation"])
        elif cls is Dense:
            layer = Dense(args["n_in"], args["n_out"])
        elif cls is Sasa:
            layer = Sasa(args["channels"], args["extent"], args["heads"])
        elif cls is Pad2d:
            layer = Pad2d(args["pad"])
        else:
            layer = cls()
        for name, meta in entry["params"].items():
            size = int(np.prod(meta["shape"], dtype=np.int64))
            layer.params[name] = blob[meta["offset"]:meta["offset"] + size].reshape(meta["shape"]).copy()
        layer.zero_grad()
        layers.append(layer)
    return ToyModel(layers, manifest["config"])


__all__ = ["GRID", "SGD", "ToyModel", "build_inflection_model", "build_path_model", "load_model", "save_model",
           "Conv2d", "Dense", "Flatten", "MaxPool2d", "MaxUnpool2d", "Pad2d", "ReLU", "Sasa"]
