"""Dual-branch multi-task assessment network.

Spectrogram and scattering maps each go through their own conv stack;
the per-frame flattened outputs are concatenated and fed to two heads
(intelligibility, quality) that share nothing but that input. Each head
is BLSTM -> dense + ReLU -> dense(1), giving one score per frame; the
utterance score is the mean over frames.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import InvalidConfig, MissingForwardState, NonFiniteError
from .layers import BLSTM, Conv2d, Dense, ReLU, Sequential

INPUT_MODES = ("spec", "scat", "spec+scat")


@dataclass(frozen=True)
class ConvBlock:
    filters: int
    kernel: int = 3
    freq_stride: int = 3
    depth: int = 2


@dataclass(frozen=True)
class ModelConfig:
    # Fig. 1's exact sizes are not published; these are stand-ins.
    conv_blocks: tuple = (ConvBlock(16), ConvBlock(32), ConvBlock(64))
    blstm_hidden: int = 64
    dense_hidden: int = 64
    seed: int = 0
    inputs: str = "spec+scat"

    def __post_init__(self):
        blocks = tuple(b if isinstance(b, ConvBlock) else ConvBlock(**b) for b in self.conv_blocks)
        object.__setattr__(self, "conv_blocks", blocks)
        if not blocks:
            raise InvalidConfig("at least one conv block is required")
        for b in blocks:
            if min(b.filters, b.kernel, b.freq_stride, b.depth) < 1:
                raise InvalidConfig(f"invalid conv block {b}")
        if self.blstm_hidden < 1 or self.dense_hidden < 1:
            raise InvalidConfig("hidden sizes must be >= 1")
        if self.inputs not in INPUT_MODES:
            raise InvalidConfig(f"inputs must be one of {INPUT_MODES}, got {self.inputs!r}")

    def to_dict(self):
        d = asdict(self)
        d["conv_blocks"] = [asdict(b) for b in self.conv_blocks]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["conv_blocks"] = tuple(ConvBlock(**b) for b in d.get("conv_blocks", ()))
        return cls(**d)


@dataclass
class Predictions:
    frame_i: np.ndarray
    frame_q: np.ndarray
    I: float
    Q: float

    @property
    def frames(self):
        return self.frame_i.size


@dataclass
class OutputGrads:
    """Loss gradient w.r.t. every model output."""

    frame_i: np.ndarray
    I: float
    frame_q: np.ndarray
    Q: float

    def scaled(self, k):
        return OutputGrads(self.frame_i * k, self.I * k, self.frame_q * k, self.Q * k)


def _conv_stack(blocks, rng):
    layers, c_in = [], 1
    for block in blocks:
        for d in range(block.depth):
            stride = block.freq_stride if d == block.depth - 1 else 1
            layers += [Conv2d(c_in, block.filters, block.kernel, stride, rng), ReLU()]
            c_in = block.filters
    return Sequential(layers)


def _head(d_in, config, rng):
    return Sequential([
        BLSTM(d_in, config.blstm_hidden, rng),
        Dense(2 * config.blstm_hidden, config.dense_hidden, rng),
        ReLU(),
        Dense(config.dense_hidden, 1, rng),
    ])


class InQSSModel:
    """Parameter container plus forward/backward for one utterance at a time."""

    def __init__(self, config: ModelConfig, spec_bins: int, scat_paths: int):
        self.config = config
        self.spec_bins = int(spec_bins)
        self.scat_paths = int(scat_paths)
        rng = np.random.default_rng(config.seed)
        self.branches = {}
        width = 0
        for name, size in (("spec", self.spec_bins), ("scat", self.scat_paths)):
            if name in config.inputs.split("+"):
                stack = _conv_stack(config.conv_blocks, rng)
                self.branches[name] = stack
                width += self._branch_width(stack, size)
        self.feature_width = width
        self.heads = {"intel": _head(width, config, rng), "qual": _head(width, config, rng)}
        self._state = None

    @staticmethod
    def _branch_width(stack, size):
        for layer in stack.layers:
            if isinstance(layer, Conv2d):
                size = layer.output_bins(size)
                channels = layer.params["W"].shape[3]
        return size * channels

    def modules(self):
        out = {f"{k}_branch": v for k, v in self.branches.items()}
        out["intel_head"] = self.heads["intel"]
        out["qual_head"] = self.heads["qual"]
        return out

    def parameters(self):
        """Name -> array; arrays are the live parameter storage."""
        return {f"{m}.{k}": v for m, mod in self.modules().items() for k, v in mod.params.items()}

    def _inputs(self, sample):
        spec, scat = (sample.spec, sample.scat) if hasattr(sample, "spec") else sample
        return {"spec": np.asarray(spec, dtype=np.float64), "scat": np.asarray(scat, dtype=np.float64)}

    def forward(self, sample) -> Predictions:
        inputs = self._inputs(sample)
        parts, widths = [], []
        for name, stack in self.branches.items():
            out = stack.forward(inputs[name][:, :, None])
            widths.append(out.shape[1:])
            parts.append(out.reshape(out.shape[0], -1))
        feats = np.concatenate(parts, axis=1)
        frame_i = self.heads["intel"].forward(feats)[:, 0]
        frame_q = self.heads["qual"].forward(feats)[:, 0]
        if not (np.all(np.isfinite(frame_i)) and np.all(np.isfinite(frame_q))):
            raise NonFiniteError("non-finite model output")
        self._state = widths
        return Predictions(frame_i, frame_q, float(frame_i.mean()), float(frame_q.mean()))

    def backward(self, grads: OutputGrads):
        """Gradients of every parameter, given loss gradients w.r.t. the outputs."""
        if self._state is None:
            raise MissingForwardState("backward called without a preceding forward")
        widths, self._state = self._state, None
        T = grads.frame_i.size
        # utterance score is the frame mean
        g_i = (grads.frame_i + grads.I / T)[:, None]
        g_q = (grads.frame_q + grads.Q / T)[:, None]
        g_feats = self.heads["intel"].backward(g_i) + self.heads["qual"].backward(g_q)
        start = 0
        for (name, stack), shape in zip(self.branches.items(), widths):
            n = shape[0] * shape[1]
            stack.backward(g_feats[:, start:start + n].reshape(T, *shape))
            start += n
        out = {}
        for m, mod in self.modules().items():
            for k, v in mod.grads.items():
                out[f"{m}.{k}"] = v
        return out

    def predict(self, sample) -> Predictions:
        pred = self.forward(sample)
        self._state = None
        return pred
