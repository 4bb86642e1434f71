"""Dense fixed-point networks: the classifier, the denoising autoencoder and
the per-layer latency model driven by the reuse factor."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ModelError
from . import fixed


@dataclass
class MlpModel:
    layer_sizes: list[int]
    weights: list[np.ndarray]          # raw Fx16, shape (n_in, n_out)
    biases: list[np.ndarray]           # raw Fx16, shape (n_out,)
    reuse_factor: int = 1
    pipeline_depth: int = 8
    relu_output: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ModelError("a model needs at least an input and an output layer")
        if self.reuse_factor < 1:
            raise ModelError(f"reuse_factor must be >= 1, got {self.reuse_factor}")
        n = len(self.layer_sizes) - 1
        if len(self.weights) != n or len(self.biases) != n:
            raise ModelError(f"{len(self.layer_sizes)} layer sizes need {n} weight/bias pairs")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if w.shape != shape or b.shape != (shape[1],):
                raise ModelError(f"layer {i}: weights {w.shape} / bias {b.shape}, expected {shape}")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @classmethod
    def random(cls, layer_sizes, seed=0, scale=1.0, **kw) -> "MlpModel":
        """Uniform Glorot-style init, quantized; reproducible from ``seed``."""
        rng = np.random.default_rng(seed)
        ws, bs = [], []
        for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            lim = scale * math.sqrt(6.0 / (n_in + n_out))
            ws.append(fixed.to_fx(rng.uniform(-lim, lim, size=(n_in, n_out))))
            bs.append(fixed.to_fx(rng.uniform(-0.1, 0.1, size=n_out)))
        return cls(list(layer_sizes), ws, bs, **kw)

    @classmethod
    def zeros(cls, layer_sizes, **kw) -> "MlpModel":
        pairs = list(zip(layer_sizes[:-1], layer_sizes[1:]))
        return cls(list(layer_sizes),
                   [np.zeros(p, dtype=np.int64) for p in pairs],
                   [np.zeros(p[1], dtype=np.int64) for p in pairs], **kw)

    def slice(self, start: int, stop: int, relu_output: bool | None = None) -> "MlpModel":
        """Layers ``[start, stop)`` as a model of their own (one partition tile)."""
        if not 0 <= start < stop <= self.n_layers:
            raise ModelError(f"bad layer slice [{start}, {stop}) of {self.n_layers} layers")
        if relu_output is None:
            relu_output = stop < self.n_layers or self.relu_output
        return MlpModel(self.layer_sizes[start:stop + 1], self.weights[start:stop],
                        self.biases[start:stop], self.reuse_factor, self.pipeline_depth,
                        relu_output)

    def save(self, path):
        arrays = {"layer_sizes": np.asarray(self.layer_sizes)}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"w{i}"] = w.astype(np.int16)
            arrays[f"b{i}"] = b.astype(np.int16)
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path, **kw) -> "MlpModel":
        with np.load(Path(path)) as f:
            sizes = [int(s) for s in f["layer_sizes"]]
            n = len(sizes) - 1
            ws = [f[f"w{i}"].astype(np.int64) for i in range(n)]
            bs = [f[f"b{i}"].astype(np.int64) for i in range(n)]
        return cls(sizes, ws, bs, **kw)


def _forward(model: MlpModel, x, relu_output: bool):
    x = np.asarray(x, dtype=np.int64)
    if x.shape != (model.layer_sizes[0],):
        raise ModelError(f"input of shape {x.shape}, model expects ({model.layer_sizes[0]},)")
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        x = fixed.dense(x, w, b)
        if i < model.n_layers - 1 or relu_output:
            x = np.maximum(x, 0)
    return x


def mlp_infer(model: MlpModel, x) -> np.ndarray:
    """Raw Fx16 logits; ReLU between layers, none after the last unless the
    model is an inner partition (``relu_output``)."""
    return _forward(model, x, model.relu_output)


def autoencoder_infer(model: MlpModel, x) -> np.ndarray:
    """Linear reconstruction clamped to the normalized pixel range [0, 1]."""
    return np.clip(_forward(model, x, False), 0, fixed.SCALE)


def pixels_to_fx(pixels) -> np.ndarray:
    return fixed.to_fx(np.asarray(pixels, dtype=np.float64) / 255.0)


def fx_to_pixels(raw) -> np.ndarray:
    raw = np.clip(np.asarray(raw, dtype=np.int64), 0, fixed.SCALE)
    return (raw * 255 + fixed.SCALE // 2) >> fixed.FRAC_BITS


def dense_multipliers(n_in: int, n_out: int, reuse_factor: int) -> int:
    return math.ceil(n_in * n_out / reuse_factor)


def dense_cycles(reuse_factor: int, pipeline_depth: int) -> int:
    return reuse_factor + pipeline_depth


def mlp_cycles(layer_sizes, reuse_factor: int, pipeline_depth: int) -> int:
    if reuse_factor < 1:
        raise ModelError("reuse_factor must be >= 1")
    return sum(dense_cycles(reuse_factor, pipeline_depth) for _ in layer_sizes[1:])
