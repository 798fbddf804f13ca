"""Convolutional-recurrent network emitting per-frame CTC class scores.

Pipeline: grayscale image -> conv stack (height collapses to 1) -> one
feature vector per column -> stacked bidirectional LSTMs -> affine
projection to ``len(alphabet) + 1`` scores per frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from arabocr import ctc
from arabocr.imaging import resize_bilinear
from arabocr.nn.layers import (
    BatchNormState,
    LayerKind,
    LayerSpec,
    Parameter,
    ShapeError,
    activation_backward,
    activation_forward,
    batchnorm_backward,
    batchnorm_forward,
    conv2d_backward,
    conv2d_forward,
    maxpool_backward,
    maxpool_forward,
)
from arabocr.recurrent import BiLstmLayer, stack_backward, stack_forward

MODE_SIZES = {"scene": (32, 100), "video": (32, 504)}


class ConfigError(ValueError):
    pass


class ConfigMismatchError(ConfigError):
    """Input dimensions disagree with the network configuration."""


@dataclass(frozen=True)
class NetworkConfig:
    conv: tuple[LayerSpec, ...]
    rnn_hidden: tuple[int, ...]
    alphabet: tuple[str, ...]
    height: int = 32
    width: int = 100
    in_channels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "conv", tuple(self.conv))
        object.__setattr__(self, "rnn_hidden", tuple(int(h) for h in self.rnn_hidden))
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        if not self.alphabet:
            raise ConfigError("alphabet must not be empty")
        if not self.rnn_hidden or min(self.rnn_hidden) < 1:
            raise ConfigError("need at least one recurrent layer with a positive hidden size")
        c, h, _ = self.feature_shape()
        if h != 1:
            raise ConfigError(f"conv stack leaves feature height {h}; it must reduce height {self.height} to 1")

    def feature_shape(self, width: int | None = None) -> tuple[int, int, int]:
        """(channels, height, width) of the final conv feature map."""
        c, h, w = self.in_channels, self.height, self.width if width is None else width
        for spec in self.conv:
            h, w = spec.output_hw(h, w)
            if h < 1 or w < 1:
                raise ConfigError(f"conv stack collapses input {self.height}x{width or self.width} at {spec}")
            if spec.kind is LayerKind.CONV:
                c = spec.channels_out
        return c, h, w

    def sequence_length(self, width: int | None = None) -> int:
        return self.feature_shape(width)[2]

    @property
    def num_classes(self) -> int:
        return len(self.alphabet) + 1

    def to_dict(self) -> dict:
        return {
            "conv": [
                {
                    "kind": s.kind.value,
                    "kernel": list(s.kernel),
                    "stride": list(s.stride),
                    "padding": list(s.padding),
                    "channels_out": s.channels_out,
                    "activation": s.activation,
                }
                for s in self.conv
            ],
            "rnn_hidden": list(self.rnn_hidden),
            "alphabet": "".join(self.alphabet),
            "height": self.height,
            "width": self.width,
            "in_channels": self.in_channels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        conv = [
            LayerSpec(
                LayerKind(s["kind"]),
                tuple(s["kernel"]),
                tuple(s["stride"]),
                tuple(s["padding"]),
                s["channels_out"],
                s["activation"],
            )
            for s in d["conv"]
        ]
        return cls(conv, d["rnn_hidden"], tuple(d["alphabet"]), d["height"], d["width"], d["in_channels"])


def vgg_stack(channel_divisor: int = 1) -> list[LayerSpec]:
    """VGG-style stack with rectangular 2x1 windows in the 3rd and 4th pools."""
    ch = [max(1, c // channel_divisor) for c in (64, 128, 256, 256, 512, 512, 512)]
    conv, pool, bn, relu = LayerSpec.conv, LayerSpec.maxpool, LayerSpec.batchnorm, LayerSpec.act
    return [
        conv(ch[0]), relu(), pool(2, 2),
        conv(ch[1]), relu(), pool(2, 2),
        conv(ch[2]), relu(),
        conv(ch[3]), relu(), pool((2, 1), (2, 1)),
        conv(ch[4]), bn(), relu(),
        conv(ch[5]), bn(), relu(), pool((2, 1), (2, 1)),
        conv(ch[6], kernel=2, padding=0), relu(),
    ]  # fmt: skip


def default_config(
    mode: str,
    alphabet,
    channel_divisor: int = 1,
    hidden: int = 256,
    layers: int = 2,
) -> NetworkConfig:
    if mode not in MODE_SIZES:
        raise ConfigError(f"mode must be one of {sorted(MODE_SIZES)}, got {mode!r}")
    chars = tuple(alphabet.chars if isinstance(alphabet, ctc.Alphabet) else alphabet)
    if not chars:
        raise ConfigError("alphabet must not be empty")
    height, width = MODE_SIZES[mode]
    return NetworkConfig(vgg_stack(channel_divisor), (hidden,) * layers, chars, height, width)


def preprocess(img: np.ndarray, height: int, width: int, dtype=np.float64) -> np.ndarray:
    """Resize to ``height x width``, mirror left-right and scale to [-1, 1].

    Mirroring puts the first-read (rightmost) Arabic letter in column 0.
    Returns a ``(1, height, width)`` array.
    """
    img = np.asarray(img)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a non-empty grayscale image, got shape {img.shape}")
    resized = resize_bilinear(img, height, width)
    return (resized[:, ::-1] / 127.5 - 1.0).astype(dtype)[None]


@dataclass
class ForwardCache:
    layers: list = field(default_factory=list)
    feature_shape: tuple = ()
    rnn: list = field(default_factory=list)
    rnn_out: np.ndarray | None = None


class CRNN:
    """The recognizer network. Parameters live in :attr:`params` keyed by
    stable dotted names; batch-norm running statistics are held in
    :attr:`bn_states` and checkpointed alongside."""

    def __init__(self, config: NetworkConfig, seed: int = 0, dtype=np.float64):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.params: dict[str, Parameter] = {}
        self.bn_states: dict[str, BatchNormState] = {}
        self._layer_names: list[str] = []
        c = config.in_channels
        for i, spec in enumerate(config.conv):
            name = f"{spec.kind.value}{i}"
            self._layer_names.append(name)
            if spec.kind is LayerKind.CONV:
                kh, kw = spec.kernel
                fan_in = c * kh * kw
                w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(spec.channels_out, c, kh, kw))
                self.params[f"{name}.w"] = Parameter(w.astype(self.dtype))
                self.params[f"{name}.b"] = Parameter(np.zeros(spec.channels_out, self.dtype))
                c = spec.channels_out
            elif spec.kind is LayerKind.BATCHNORM:
                self.params[f"{name}.gamma"] = Parameter(np.ones(c, self.dtype))
                self.params[f"{name}.beta"] = Parameter(np.zeros(c, self.dtype))
                self.bn_states[name] = BatchNormState.fresh(c, self.dtype)
        self.rnn: list[BiLstmLayer] = []
        width = c
        for k, hidden in enumerate(config.rnn_hidden):
            layer = BiLstmLayer.init(width, hidden, rng, self.dtype)
            self.rnn.append(layer)
            for pname, p in layer.parameters().items():
                self.params[f"rnn{k}.{pname}"] = p
            width = layer.output_size
        lim = np.sqrt(6.0 / (width + config.num_classes))
        self.params["proj.w"] = Parameter(rng.uniform(-lim, lim, (width, config.num_classes)).astype(self.dtype))
        self.params["proj.b"] = Parameter(np.zeros(config.num_classes, self.dtype))

    @property
    def alphabet(self) -> ctc.Alphabet:
        return ctc.Alphabet(self.config.alphabet)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Every persistent tensor: parameters then batch-norm statistics."""
        out = {name: p.value for name, p in self.params.items()}
        for name, st in self.bn_states.items():
            out[f"{name}.running_mean"] = st.running_mean
            out[f"{name}.running_var"] = st.running_var
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        own = self.state_arrays()
        missing = sorted(set(own) - set(arrays))
        extra = sorted(set(arrays) - set(own))
        if missing or extra:
            raise ConfigError(f"tensor names differ from the model: missing {missing}, unexpected {extra}")
        for name, arr in arrays.items():
            if arr.shape != own[name].shape:
                raise ConfigError(f"{name}: shape {arr.shape} != expected {own[name].shape}")
            own[name][...] = arr

    def _check_input(self, x: np.ndarray) -> None:
        cfg = self.config
        if x.ndim != 4 or x.shape[1:] != (cfg.in_channels, cfg.height, cfg.width):
            raise ConfigMismatchError(
                f"input batch {x.shape} does not match configured (N, {cfg.in_channels}, {cfg.height}, {cfg.width})"
            )

    def forward(self, x: np.ndarray, train: bool = False) -> tuple[np.ndarray, ForwardCache]:
        """Map a ``(N, C, H, W)`` batch to ``(T, N, classes)`` logits."""
        self._check_input(x)
        x = x.astype(self.dtype, copy=False)
        cache = ForwardCache()
        for name, spec in zip(self._layer_names, self.config.conv):
            if spec.kind is LayerKind.CONV:
                x, lc = conv2d_forward(x, self.params[f"{name}.w"].value, self.params[f"{name}.b"].value, spec)
            elif spec.kind is LayerKind.MAXPOOL:
                x, lc = maxpool_forward(x, spec)
            elif spec.kind is LayerKind.BATCHNORM:
                x, lc = batchnorm_forward(
                    x, self.params[f"{name}.gamma"].value, self.params[f"{name}.beta"].value, self.bn_states[name], train
                )
            else:
                x, lc = activation_forward(x, spec.activation)
            cache.layers.append(lc)
        N, C, H, W = x.shape
        cache.feature_shape = x.shape
        seq = np.ascontiguousarray(x[:, :, 0, :].transpose(2, 0, 1))  # (W, N, C): one frame per column
        out, cache.rnn = stack_forward(self.rnn, seq)
        cache.rnn_out = out
        T = out.shape[0]
        logits = out.reshape(T * N, -1) @ self.params["proj.w"].value + self.params["proj.b"].value
        return logits.reshape(T, N, -1), cache

    def backward(self, dlogits: np.ndarray, cache: ForwardCache) -> None:
        """Accumulate parameter gradients for upstream ``dlogits``."""
        T, N, K = dlogits.shape
        out = cache.rnn_out
        d2 = dlogits.reshape(T * N, K)
        self.params["proj.w"].grad += out.reshape(T * N, -1).T @ d2
        self.params["proj.b"].grad += d2.sum(axis=0)
        dseq = (d2 @ self.params["proj.w"].value.T).reshape(T, N, -1)
        dseq, rnn_grads = stack_backward(dseq, cache.rnn)
        for k, grads in enumerate(rnn_grads):
            for pname, g in grads.items():
                self.params[f"rnn{k}.{pname}"].grad += g
        dx = np.ascontiguousarray(dseq.transpose(1, 2, 0))[:, :, None, :]
        for name, spec, lc in reversed(list(zip(self._layer_names, self.config.conv, cache.layers))):
            if spec.kind is LayerKind.CONV:
                dx, dw, db = conv2d_backward(dx, lc)
                self.params[f"{name}.w"].grad += dw
                self.params[f"{name}.b"].grad += db
            elif spec.kind is LayerKind.MAXPOOL:
                dx = maxpool_backward(dx, lc)
            elif spec.kind is LayerKind.BATCHNORM:
                dx, dg, dbeta = batchnorm_backward(dx, lc)
                self.params[f"{name}.gamma"].grad += dg
                self.params[f"{name}.beta"].grad += dbeta
            else:
                dx = activation_backward(dx, lc)

    def preprocess(self, img: np.ndarray) -> np.ndarray:
        return preprocess(img, self.config.height, self.config.width, self.dtype)

    def loss_and_grad(self, x: np.ndarray, targets: list[list[int]], train: bool = True) -> list[float]:
        """Forward, CTC loss per item, backward of the summed loss."""
        logits, cache = self.forward(x, train=train)
        losses = []
        dlogits = np.empty_like(logits)
        for n, target in enumerate(targets):
            loss, g = ctc.ctc_loss(logits[:, n, :], target)
            losses.append(loss)
            dlogits[:, n, :] = g
        self.backward(dlogits, cache)
        return losses

    def transcribe(self, batch: np.ndarray, beam_width: int = 0) -> list[str]:
        """Decode a preprocessed ``(N, C, H, W)`` batch; greedy when
        ``beam_width`` is 0."""
        logits, _ = self.forward(batch, train=False)
        alphabet = self.alphabet
        out = []
        for n in range(logits.shape[1]):
            frames = logits[:, n, :]
            labels = ctc.beam_decode(frames, beam_width) if beam_width > 0 else ctc.greedy_decode(frames)
            out.append(alphabet.decode(labels))
        return out

    def recognize(self, images: list[np.ndarray], beam_width: int = 0, batch_size: int = 64) -> list[str]:
        out: list[str] = []
        for start in range(0, len(images), batch_size):
            batch = np.stack([self.preprocess(img) for img in images[start : start + batch_size]])
            out.extend(self.transcribe(batch, beam_width))
        return out
