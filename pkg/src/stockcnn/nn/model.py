"""Declarative layer stack, parameter initialization and model passes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import ConfigError
from ..rng import Prng
from . import functional as F

LAYER_KINDS = ("conv1d", "relu", "leaky_relu", "batchnorm1d", "dropout", "flatten", "dense", "softmax")

CONV_LADDER = (32, 64, 128, 256, 256, 512, 512, 1024)
DENSE_HIDDEN = 512


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    options: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")

    def __getitem__(self, key):
        return self.options[key]

    def to_json(self) -> dict:
        return {"kind": self.kind, **self.options}

    @classmethod
    def from_json(cls, obj: dict) -> LayerSpec:
        obj = dict(obj)
        return cls(obj.pop("kind"), obj)


@dataclass(frozen=True)
class ModelSpec:
    input_channels: int
    window_len: int
    layers: tuple[LayerSpec, ...]

    def to_json(self) -> dict:
        return {
            "input_channels": self.input_channels,
            "window_len": self.window_len,
            "layers": [layer.to_json() for layer in self.layers],
        }

    @classmethod
    def from_json(cls, obj: dict) -> ModelSpec:
        try:
            return cls(int(obj["input_channels"]), int(obj["window_len"]),
                       tuple(LayerSpec.from_json(layer) for layer in obj["layers"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed model spec: {exc}") from None


def _scaled(width: int, scale: float) -> int:
    return max(1, int(round(width * scale)))


def default_architecture(window_len: int = 256, channels: int = 10, scale: float = 1.0,
                         keep_prob: float = 0.6, kernel_width: int = 9) -> ModelSpec:
    """Eight stride-2 convolutions, then dense -> LeakyReLU -> dropout -> dense(2) -> softmax.

    The first convolution is followed by ReLU only; the other seven by batch
    norm and LeakyReLU. ``scale`` multiplies every hidden width (0.25 gives
    the small test network).
    """
    layers = []
    c_in, length = channels, window_len
    for i, width in enumerate(CONV_LADDER):
        c_out = _scaled(width, scale)
        layers.append(LayerSpec("conv1d", {"in_channels": c_in, "out_channels": c_out,
                                           "kernel_width": kernel_width, "stride": 2}))
        if i == 0:
            layers.append(LayerSpec("relu"))
        else:
            layers.append(LayerSpec("batchnorm1d", {"channels": c_out, "eps": 1e-5, "momentum": 0.9}))
            layers.append(LayerSpec("leaky_relu"))
        c_in, length = c_out, -(-length // 2)
    hidden = _scaled(DENSE_HIDDEN, scale)
    layers += [
        LayerSpec("flatten"),
        LayerSpec("dense", {"in_dim": c_in * length, "out_dim": hidden}),
        LayerSpec("leaky_relu"),
        LayerSpec("dropout", {"keep_prob": keep_prob}),
        LayerSpec("dense", {"in_dim": hidden, "out_dim": 2}),
        LayerSpec("softmax"),
    ]
    return ModelSpec(channels, window_len, tuple(layers))


def _positive(spec: LayerSpec, *keys):
    for key in keys:
        value = spec.options.get(key)
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise ConfigError(f"{spec.kind}: {key} must be a positive integer, got {value!r}")


def output_shapes(spec: ModelSpec) -> list[tuple[int, ...]]:
    """Per-sample output shape after each layer; raises ConfigError on inconsistency."""
    shape: tuple[int, ...] = (spec.input_channels, spec.window_len)
    shapes = []
    for i, layer in enumerate(spec.layers):
        kind = layer.kind
        if kind == "conv1d":
            _positive(layer, "in_channels", "out_channels", "kernel_width", "stride")
            if len(shape) != 2 or shape[0] != layer["in_channels"]:
                raise ConfigError(f"layer {i} conv1d expects {layer['in_channels']} channels, gets shape {shape}")
            out_len, _, _ = F.same_padding(shape[1], layer["kernel_width"], layer["stride"])
            shape = (layer["out_channels"], out_len)
        elif kind == "batchnorm1d":
            _positive(layer, "channels")
            if len(shape) != 2 or shape[0] != layer["channels"]:
                raise ConfigError(f"layer {i} batchnorm1d expects {layer['channels']} channels, gets shape {shape}")
            if not layer.options.get("eps", 1e-5) > 0:
                raise ConfigError(f"layer {i} batchnorm1d: eps must be > 0")
        elif kind == "dropout":
            if not 0 < layer.options.get("keep_prob", 0) <= 1:
                raise ConfigError(f"layer {i} dropout: keep_prob must be in (0, 1]")
        elif kind == "flatten":
            shape = (int(np.prod(shape)),)
        elif kind == "dense":
            _positive(layer, "in_dim", "out_dim")
            if shape != (layer["in_dim"],):
                raise ConfigError(f"layer {i} dense expects in_dim {layer['in_dim']}, gets shape {shape}")
            shape = (layer["out_dim"],)
        elif kind == "softmax":
            if i != len(spec.layers) - 1:
                raise ConfigError("softmax must be the final layer")
        shapes.append(shape)
    if shapes and len(shapes[-1]) != 1:
        raise ConfigError(f"model must end in a vector of logits, got shape {shapes[-1]}")
    return shapes


def param_names(spec: ModelSpec) -> list[str]:
    names = []
    for i, layer in enumerate(spec.layers):
        if layer.kind in ("conv1d", "dense"):
            names += [f"layer{i}.W", f"layer{i}.b"]
        elif layer.kind == "batchnorm1d":
            names += [f"layer{i}.{p}" for p in ("gamma", "beta", "running_mean", "running_var")]
    return names


def trainable_names(spec: ModelSpec) -> list[str]:
    return [n for n in param_names(spec) if not n.endswith(("running_mean", "running_var"))]


def decay_names(spec: ModelSpec) -> list[str]:
    """Weight matrices subject to L2 decay (biases and batch-norm affine excluded)."""
    return [n for n in param_names(spec) if n.endswith(".W")]


class Model:
    """A built network: its spec, named parameter arrays and the dropout PRNG.

    Parameters are initialized in layer order, each weight tensor drawn in
    row-major order as ``N(0, 2 / fan_in)`` from ``prng``; biases and
    ``beta`` start at 0, ``gamma`` at 1, running statistics at (0, 1).
    """

    def __init__(self, spec: ModelSpec, prng: Prng, params: dict[str, np.ndarray] | None = None):
        self.spec = spec
        self.shapes = output_shapes(spec)
        self.prng = prng
        if params is None:
            params = self._init_params()
        self._check_params(params)
        self.params = params

    def _init_params(self) -> dict[str, np.ndarray]:
        params = {}
        for i, layer in enumerate(self.spec.layers):
            if layer.kind == "conv1d":
                shape = (layer["out_channels"], layer["in_channels"], layer["kernel_width"])
                fan_in = shape[1] * shape[2]
            elif layer.kind == "dense":
                shape = (layer["out_dim"], layer["in_dim"])
                fan_in = shape[1]
            elif layer.kind == "batchnorm1d":
                c = layer["channels"]
                params[f"layer{i}.gamma"] = np.ones(c)
                params[f"layer{i}.beta"] = np.zeros(c)
                params[f"layer{i}.running_mean"] = np.zeros(c)
                params[f"layer{i}.running_var"] = np.ones(c)
                continue
            else:
                continue
            std = np.sqrt(2.0 / fan_in)
            params[f"layer{i}.W"] = (self.prng.normal(int(np.prod(shape))) * std).reshape(shape)
            params[f"layer{i}.b"] = np.zeros(shape[0])
        return params

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        out = {}
        for i, layer in enumerate(self.spec.layers):
            if layer.kind == "conv1d":
                out[f"layer{i}.W"] = (layer["out_channels"], layer["in_channels"], layer["kernel_width"])
                out[f"layer{i}.b"] = (layer["out_channels"],)
            elif layer.kind == "dense":
                out[f"layer{i}.W"] = (layer["out_dim"], layer["in_dim"])
                out[f"layer{i}.b"] = (layer["out_dim"],)
            elif layer.kind == "batchnorm1d":
                for p in ("gamma", "beta", "running_mean", "running_var"):
                    out[f"layer{i}.{p}"] = (layer["channels"],)
        return out

    def _check_params(self, params):
        expected = self.expected_shapes()
        if set(params) != set(expected):
            raise ConfigError(f"parameter names do not match spec: "
                              f"missing {sorted(set(expected) - set(params))}, "
                              f"unexpected {sorted(set(params) - set(expected))}")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ConfigError(f"{name}: shape {params[name].shape} != {shape}")

    @property
    def n_classes(self) -> int:
        return self.shapes[-1][0]

    def forward(self, x, train: bool = False):
        """Logits ``[B, K]`` for input ``[B, C, W]`` and the per-layer caches.

        The trailing softmax layer is not applied here (see :meth:`predict_proba`).
        Eval mode uses running batch-norm statistics, skips dropout and draws
        nothing from the PRNG.
        """
        x = np.asarray(x, dtype=np.float64)
        expected = (self.spec.input_channels, self.spec.window_len)
        if x.ndim != 3 or x.shape[1:] != expected:
            raise ValueError(f"model input must be [B, {expected[0]}, {expected[1]}], got {list(x.shape)}")
        p = self.params
        caches = []
        for i, layer in enumerate(self.spec.layers):
            kind = layer.kind
            if kind == "conv1d":
                x, cache = F.conv1d_forward(x, p[f"layer{i}.W"], p[f"layer{i}.b"], layer["stride"])
            elif kind == "relu":
                x, cache = F.relu_forward(x)
            elif kind == "leaky_relu":
                x, cache = F.leaky_relu_forward(x)
            elif kind == "batchnorm1d":
                x, cache = F.batchnorm1d_forward(
                    x, p[f"layer{i}.gamma"], p[f"layer{i}.beta"],
                    p[f"layer{i}.running_mean"], p[f"layer{i}.running_var"],
                    eps=layer.options.get("eps", 1e-5), momentum=layer.options.get("momentum", 0.9),
                    train=train)
            elif kind == "dropout":
                x, cache = F.dropout_forward(x, layer["keep_prob"], train, self.prng)
            elif kind == "flatten":
                cache = x.shape
                x = x.reshape(x.shape[0], -1)
            elif kind == "dense":
                x, cache = F.dense_forward(x, p[f"layer{i}.W"], p[f"layer{i}.b"])
            elif kind == "softmax":
                cache = None
            caches.append(cache)
        return x, caches

    def logits(self, x):
        return self.forward(x, train=False)[0]

    def predict_proba(self, x):
        return F.softmax(self.logits(x))

    def backward(self, caches, d_logits, return_input_grad: bool = False):
        """Gradients of every trainable parameter from a training-mode forward's caches."""
        if caches is None or len(caches) != len(self.spec.layers):
            raise ValueError("backward needs the caches of a matching forward pass")
        p = self.params
        grads = {}
        d = np.asarray(d_logits, dtype=np.float64)
        for i in range(len(self.spec.layers) - 1, -1, -1):
            layer, cache = self.spec.layers[i], caches[i]
            kind = layer.kind
            if kind == "conv1d":
                d, grads[f"layer{i}.W"], grads[f"layer{i}.b"] = F.conv1d_backward(cache, d)
            elif kind == "relu":
                d = F.relu_backward(cache, d)
            elif kind == "leaky_relu":
                d = F.leaky_relu_backward(cache, d)
            elif kind == "batchnorm1d":
                d, grads[f"layer{i}.gamma"], grads[f"layer{i}.beta"] = F.batchnorm1d_backward(cache, d)
            elif kind == "dropout":
                d = F.dropout_backward(cache, layer["keep_prob"], d)
            elif kind == "flatten":
                d = d.reshape(cache)
            elif kind == "dense":
                d, grads[f"layer{i}.W"], grads[f"layer{i}.b"] = F.dense_backward(cache, p[f"layer{i}.W"], d)
        if return_input_grad:
            return grads, d
        return grads

    def loss_and_grads(self, x, labels, weight_decay: float = 0.0):
        """One training-mode forward/backward. Decay gradients are not included."""
        logits, caches = self.forward(x, train=True)
        loss, d_logits = F.cross_entropy_loss(
            logits, labels, weight_decay, [self.params[n] for n in decay_names(self.spec)])
        return loss, self.backward(caches, d_logits), logits


def build_model(spec: ModelSpec, seed: int | Prng) -> Model:
    prng = seed if isinstance(seed, Prng) else Prng(seed)
    return Model(spec, prng)
