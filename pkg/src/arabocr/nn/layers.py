"""Layer kernels with hand-written backward passes.

Arrays are NCHW numpy arrays. Every ``*_forward`` returns ``(out, cache)``
and the matching ``*_backward`` takes ``(dout, cache)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


class ShapeError(ValueError):
    pass


@dataclass
class Parameter:
    """A value and the gradient accumulated into it."""

    value: np.ndarray
    grad: np.ndarray | None = None

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise ShapeError(f"grad shape {self.grad.shape} != value shape {self.value.shape}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0


class LayerKind(enum.Enum):
    CONV = "conv"
    MAXPOOL = "maxpool"
    BATCHNORM = "batchnorm"
    ACTIVATION = "activation"


def _pair(v) -> tuple[int, int]:
    if isinstance(v, int):
        return (v, v)
    a, b = v
    return (int(a), int(b))


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    kernel: tuple[int, int] = (1, 1)
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    channels_out: int = 0
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "kernel", _pair(self.kernel))
        object.__setattr__(self, "stride", _pair(self.stride))
        object.__setattr__(self, "padding", _pair(self.padding))
        if min(self.kernel) < 1 or min(self.stride) < 1:
            raise ValueError(f"kernel and stride must be >= 1: {self}")
        if min(self.padding) < 0:
            raise ValueError(f"padding must be >= 0: {self}")
        if self.kind is LayerKind.CONV and self.channels_out < 1:
            raise ValueError("conv layer needs channels_out >= 1")

    @classmethod
    def conv(cls, channels_out, kernel=3, stride=1, padding=1) -> "LayerSpec":
        return cls(LayerKind.CONV, kernel, stride, padding, channels_out)

    @classmethod
    def maxpool(cls, kernel=2, stride=None, padding=0) -> "LayerSpec":
        return cls(LayerKind.MAXPOOL, kernel, kernel if stride is None else stride, padding)

    @classmethod
    def batchnorm(cls) -> "LayerSpec":
        return cls(LayerKind.BATCHNORM)

    @classmethod
    def act(cls, kind="relu") -> "LayerSpec":
        return cls(LayerKind.ACTIVATION, activation=kind)

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        if self.kind in (LayerKind.BATCHNORM, LayerKind.ACTIVATION):
            return h, w
        (kh, kw), (sh, sw), (ph, pw) = self.kernel, self.stride, self.padding
        return (h + 2 * ph - kh) // sh + 1, (w + 2 * pw - kw) // sw + 1


def _windows(xp: np.ndarray, kernel, stride) -> np.ndarray:
    """View of shape (N, C, Ho, Wo, kh, kw) over a padded input."""
    (kh, kw), (sh, sw) = kernel, stride
    return sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]


def _col2im(dcols: np.ndarray, padded_shape, kernel, stride, padding) -> np.ndarray:
    # dcols: (N, C, Ho, Wo, kh, kw); scatter each kernel offset as a strided slab.
    (kh, kw), (sh, sw), (ph, pw) = kernel, stride, padding
    N, C, Ho, Wo = dcols.shape[:4]
    dxp = np.zeros(padded_shape, dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + sh * Ho : sh, j : j + sw * Wo : sw] += dcols[:, :, :, :, i, j]
    H, W = padded_shape[2] - 2 * ph, padded_shape[3] - 2 * pw
    return dxp[:, :, ph : ph + H, pw : pw + W]


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, spec: LayerSpec):
    """Cross-correlation with zero padding.

    x: (N, C, H, W), w: (F, C, kh, kw), b: (F,). Returns (N, F, Ho, Wo).
    """
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1] or w.shape[2:] != spec.kernel:
        raise ShapeError(f"conv2d shape mismatch: input {x.shape}, weight {w.shape}, kernel {spec.kernel}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"conv2d bias shape {b.shape} does not match weight {w.shape}")
    Ho, Wo = spec.output_hw(x.shape[2], x.shape[3])
    if Ho < 1 or Wo < 1:
        raise ShapeError(f"conv2d output would be empty for input {x.shape} and {spec}")
    ph, pw = spec.padding
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else x
    cols = _windows(xp, spec.kernel, spec.stride)
    out = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3]))  # (N, Ho, Wo, F)
    out = out.transpose(0, 3, 1, 2) + b[None, :, None, None]
    return np.ascontiguousarray(out), (xp.shape, cols, w, spec)


def conv2d_backward(dout: np.ndarray, cache):
    padded_shape, cols, w, spec = cache
    db = dout.sum(axis=(0, 2, 3))
    dw = np.tensordot(dout, cols, axes=([0, 2, 3], [0, 2, 3]))  # (F, C, kh, kw)
    dcols = np.tensordot(dout, w, axes=([1], [0]))  # (N, Ho, Wo, C, kh, kw)
    dcols = dcols.transpose(0, 3, 1, 2, 4, 5)
    dx = _col2im(dcols, padded_shape, spec.kernel, spec.stride, spec.padding)
    return np.ascontiguousarray(dx), dw, db


def maxpool_forward(x: np.ndarray, spec: LayerSpec):
    """Windowed maximum; padding is filled with -inf.

    Gradient ties go to the first maximal element in row-major order.
    """
    N, C, H, W = x.shape
    Ho, Wo = spec.output_hw(H, W)
    if Ho < 1 or Wo < 1:
        raise ShapeError(f"maxpool output would be empty for input {x.shape} and {spec}")
    ph, pw = spec.padding
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=-np.inf) if ph or pw else x
    kh, kw = spec.kernel
    win = _windows(xp, spec.kernel, spec.stride)[:, :, :Ho, :Wo].reshape(N, C, Ho, Wo, kh * kw)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, (x.shape, xp.shape, arg, spec)


def maxpool_backward(dout: np.ndarray, cache):
    x_shape, padded_shape, arg, spec = cache
    N, C, Ho, Wo = dout.shape
    (kh, kw), (sh, sw), (ph, pw) = spec.kernel, spec.stride, spec.padding
    Hp, Wp = padded_shape[2:]
    rows = np.arange(Ho)[:, None] * sh + arg // kw
    cols = np.arange(Wo)[None, :] * sw + arg % kw
    flat = rows * Wp + cols + (np.arange(N * C) * Hp * Wp).reshape(N, C, 1, 1)
    dxp = np.bincount(flat.ravel(), weights=dout.ravel(), minlength=N * C * Hp * Wp)
    dxp = dxp.reshape(padded_shape).astype(dout.dtype, copy=False)
    H, W = x_shape[2:]
    return np.ascontiguousarray(dxp[:, :, ph : ph + H, pw : pw + W])


@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def fresh(cls, channels: int, dtype=np.float64) -> "BatchNormState":
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))


def batchnorm_forward(x, gamma, beta, state: BatchNormState, train: bool):
    """Per-channel normalization over (N, H, W).

    In training mode the batch statistics are used and the running
    statistics are updated in place with momentum 0.9 (the running
    variance uses the unbiased estimate).
    """
    if train:
        if x.shape[0] < 2:
            raise ShapeError("batch normalization in training mode needs a batch of at least 2")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        m = x.shape[0] * x.shape[2] * x.shape[3]
        state.running_mean *= BN_MOMENTUM
        state.running_mean += (1 - BN_MOMENTUM) * mean
        state.running_var *= BN_MOMENTUM
        state.running_var += (1 - BN_MOMENTUM) * var * m / max(m - 1, 1)
    else:
        mean, var = state.running_mean, state.running_var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return out, (xhat, inv_std, gamma, train)


def batchnorm_backward(dout, cache):
    xhat, inv_std, gamma, train = cache
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma[None, :, None, None]
    if not train:
        return dxhat * inv_std[None, :, None, None], dgamma, dbeta
    mean_dxhat = dxhat.mean(axis=(0, 2, 3), keepdims=True)
    mean_dxhat_xhat = (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
    dx = (dxhat - mean_dxhat - xhat * mean_dxhat_xhat) * inv_std[None, :, None, None]
    return dx, dgamma, dbeta


ACTIVATIONS = ("relu", "sigmoid", "tanh")


def activation_forward(x: np.ndarray, kind: str = "relu"):
    if kind == "relu":
        out = np.maximum(x, 0)
    elif kind == "sigmoid":
        out = expit(x)
    elif kind == "tanh":
        out = np.tanh(x)
    else:
        raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")
    return out, (kind, x, out)


def activation_backward(dout: np.ndarray, cache):
    kind, x, out = cache
    if kind == "relu":
        return dout * (x > 0)
    if kind == "sigmoid":
        return dout * out * (1 - out)
    return dout * (1 - out * out)
