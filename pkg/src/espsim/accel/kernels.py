"""Accelerator kernels as seen by the tile wrapper: one frame of words in, one
frame of words out, plus the compute latency for that frame."""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from ..errors import ModelError
from . import fixed, image
from .mlp import MlpModel, autoencoder_infer, fx_to_pixels, mlp_cycles, mlp_infer, pixels_to_fx

log = logging.getLogger(__name__)

CLASSIFIER_LAYERS = [1024, 256, 128, 64, 32, 10]
AUTOENCODER_LAYERS = [1024, 256, 128, 1024]

# per-pixel compute cost of the image kernels (uncalibrated)
PIXEL_CYCLES = {"noise_filter": 2, "histogram": 1, "hist_equalize": 1, "nightvision": 4}

_MASK32 = np.uint64(0xFFFFFFFF)


class Kernel:
    kind = "?"
    known_params: frozenset = frozenset()

    def __init__(self, params: dict):
        self.params = dict(params)
        unknown = set(params) - self.known_params - {"cycles"}
        if unknown:
            log.warning("%s: ignoring unknown params %s", self.kind, sorted(unknown))
        self._cycles = params.get("cycles")

    in_words: int
    out_words: int

    def compute(self, words: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def model_cycles(self) -> int:
        raise NotImplementedError

    def cycles(self) -> int:
        return int(self._cycles) if self._cycles is not None else self.model_cycles()

    def __call__(self, words):
        words = np.asarray(words, dtype=np.uint64)
        if words.shape != (self.in_words,):
            raise ModelError(f"{self.kind}: got {words.shape[0]} words, expects {self.in_words}")
        out = np.asarray(self.compute(words), dtype=np.uint64)
        assert out.shape == (self.out_words,)
        return out


class Identity(Kernel):
    kind = "identity"
    known_params = frozenset({"words"})

    def __init__(self, params):
        super().__init__(params)
        self.in_words = self.out_words = int(params.get("words", 1024))

    def compute(self, words):
        return words.copy()

    def model_cycles(self):
        return self.in_words


class Scramble(Kernel):
    """Position- and order-sensitive mixing; stands in for arbitrary kernels in
    randomized dataflows so that any misplaced word changes the output."""
    kind = "scramble"
    known_params = frozenset({"in_words", "out_words", "salt"})

    def __init__(self, params):
        super().__init__(params)
        self.in_words = int(params.get("in_words", 16))
        self.out_words = int(params.get("out_words", self.in_words))
        self.salt = np.uint64(int(params.get("salt", 1)) & 0xFFFFFFFF)
        if self.in_words < 1 or self.out_words < 1:
            raise ModelError("scramble needs at least one input and one output word")

    def compute(self, words):
        n = self.in_words
        j = np.arange(self.out_words, dtype=np.uint64)
        a = words[np.arange(self.out_words) % n]
        b = words[(3 * np.arange(self.out_words) + 1) % n]
        with np.errstate(over="ignore"):
            out = a * np.uint64(0x9E3779B1) + b + j * self.salt + self.salt
        return out & _MASK32

    def model_cycles(self):
        return self.in_words + self.out_words


class _ImageKernel(Kernel):
    known_params = frozenset({"width", "height"})

    def __init__(self, params):
        super().__init__(params)
        self.width = int(params.get("width", 32))
        self.height = int(params.get("height", 32))
        self.pixels = self.width * self.height
        self.in_words = self.out_words = self.pixels

    def _img(self, words):
        return words[:self.pixels].astype(np.int64).reshape(self.height, self.width)

    def model_cycles(self):
        return PIXEL_CYCLES[self.kind] * self.pixels


class NoiseFilter(_ImageKernel):
    kind = "noise_filter"

    def compute(self, words):
        return image.noise_filter(self._img(words)).ravel()


class Histogram(_ImageKernel):
    kind = "histogram"

    def __init__(self, params):
        super().__init__(params)
        self.out_words = image.N_BINS

    def compute(self, words):
        return image.histogram(self._img(words))


class HistEqualize(_ImageKernel):
    """Input is the image followed by its 256-bin histogram."""
    kind = "hist_equalize"

    def __init__(self, params):
        super().__init__(params)
        self.in_words = self.pixels + image.N_BINS

    def compute(self, words):
        hist = words[self.pixels:].astype(np.int64)
        return image.hist_equalize(self._img(words), hist).ravel()


class NightVision(_ImageKernel):
    kind = "nightvision"

    def compute(self, words):
        return image.night_vision(self._img(words)).ravel()


class _DenseKernel(Kernel):
    known_params = frozenset({"layers", "seed", "model_file", "layer_slice", "reuse_factor",
                              "pipeline_depth", "input", "scale"})
    default_layers: list[int] = CLASSIFIER_LAYERS

    def __init__(self, params, base_dir=None):
        super().__init__(params)
        rf = int(params.get("reuse_factor", 16))
        depth = int(params.get("pipeline_depth", 8))
        if "model_file" in params:
            path = Path(params["model_file"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            model = MlpModel.load(path, reuse_factor=rf, pipeline_depth=depth)
        else:
            model = MlpModel.random(params.get("layers", self.default_layers),
                                    seed=int(params.get("seed", 0)),
                                    scale=float(params.get("scale", 1.0)),
                                    reuse_factor=rf, pipeline_depth=depth)
        start, stop = params.get("layer_slice", (0, model.n_layers))
        if (start, stop) != (0, model.n_layers):
            model = model.slice(int(start), int(stop))
        self.model = model
        self.input = params.get("input", "pixel" if start == 0 else "fx16")
        if self.input not in ("pixel", "fx16"):
            raise ModelError(f"input format must be 'pixel' or 'fx16', got {self.input!r}")
        self.in_words = model.layer_sizes[0]
        self.out_words = model.layer_sizes[-1]

    def _x(self, words):
        if self.input == "pixel":
            return pixels_to_fx(words.astype(np.int64))
        return fixed.from_words(words)

    def model_cycles(self):
        return mlp_cycles(self.model.layer_sizes, self.model.reuse_factor,
                          self.model.pipeline_depth)


class Classifier(_DenseKernel):
    kind = "mlp"

    def compute(self, words):
        return fixed.to_words(mlp_infer(self.model, self._x(words)))


class Denoiser(_DenseKernel):
    kind = "autoencoder"
    default_layers = AUTOENCODER_LAYERS

    def compute(self, words):
        return fx_to_pixels(autoencoder_infer(self.model, self._x(words)))


KERNELS = {k.kind: k for k in (Identity, Scramble, NoiseFilter, Histogram, HistEqualize,
                                NightVision, Classifier, Denoiser)}


def make_kernel(kind: str, params: dict | None = None, base_dir=None) -> Kernel:
    try:
        cls = KERNELS[kind]
    except KeyError:
        raise ModelError(f"unknown kernel {kind!r}; known: {sorted(KERNELS)}") from None
    if issubclass(cls, _DenseKernel):
        return cls(params or {}, base_dir=base_dir)
    return cls(params or {})
