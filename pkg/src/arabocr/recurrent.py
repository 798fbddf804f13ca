"""LSTM, bidirectional LSTM and stacked encoders with exact BPTT.

Sequences are ``(T, N, D)`` arrays: time, batch, features. Gates are
packed in the order input, forget, output, candidate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from arabocr.nn.layers import Parameter, ShapeError

INIT_RANGE = 0.08


@dataclass
class LstmParams:
    w_x: Parameter  # (D, 4H)
    w_h: Parameter  # (H, 4H)
    b: Parameter  # (4H,)

    @property
    def input_size(self) -> int:
        return self.w_x.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.w_h.shape[0]

    def __post_init__(self):
        D, G = self.w_x.shape
        H = self.w_h.shape[0]
        if G != 4 * H or self.w_h.shape != (H, 4 * H) or self.b.shape != (4 * H,):
            raise ShapeError(
                f"inconsistent LSTM shapes: w_x {self.w_x.shape}, w_h {self.w_h.shape}, b {self.b.shape}"
            )

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng: np.random.Generator, dtype=np.float64) -> "LstmParams":
        H = hidden_size
        u = lambda *shape: rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape).astype(dtype)
        b = u(4 * H)
        b[H : 2 * H] = 1.0
        return cls(Parameter(u(input_size, 4 * H)), Parameter(u(H, 4 * H)), Parameter(b))

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int, dtype=np.float64) -> "LstmParams":
        H = hidden_size
        return cls(
            Parameter(np.zeros((input_size, 4 * H), dtype)),
            Parameter(np.zeros((H, 4 * H), dtype)),
            Parameter(np.zeros(4 * H, dtype)),
        )

    def parameters(self) -> dict[str, Parameter]:
        return {"w_x": self.w_x, "w_h": self.w_h, "b": self.b}


@dataclass
class LstmCache:
    x: np.ndarray
    h: np.ndarray  # (T+1, N, H), h[0] = 0
    c: np.ndarray  # (T+1, N, H)
    gates: np.ndarray  # (T, N, 4H) after nonlinearities
    tanh_c: np.ndarray
    params: LstmParams


def lstm_forward(seq: np.ndarray, params: LstmParams) -> tuple[np.ndarray, LstmCache]:
    """Run one direction over ``seq`` from t=0 with zero initial state."""
    if seq.ndim != 3 or seq.shape[0] == 0:
        raise ShapeError(f"expected a non-empty (T, N, D) sequence, got {seq.shape}")
    T, N, D = seq.shape
    if D != params.input_size:
        raise ShapeError(f"input width {D} does not match LSTM input size {params.input_size}")
    H = params.hidden_size
    dtype = np.result_type(seq, params.w_x.value)
    xw = (seq.reshape(T * N, D) @ params.w_x.value).reshape(T, N, 4 * H) + params.b.value
    h = np.zeros((T + 1, N, H), dtype)
    c = np.zeros((T + 1, N, H), dtype)
    gates = np.empty((T, N, 4 * H), dtype)
    tanh_c = np.empty((T, N, H), dtype)
    w_h = params.w_h.value
    for t in range(T):
        a = xw[t] + h[t] @ w_h
        g = gates[t]
        g[:, : 3 * H] = expit(a[:, : 3 * H])
        g[:, 3 * H :] = np.tanh(a[:, 3 * H :])
        c[t + 1] = g[:, H : 2 * H] * c[t] + g[:, :H] * g[:, 3 * H :]
        tanh_c[t] = np.tanh(c[t + 1])
        h[t + 1] = g[:, 2 * H : 3 * H] * tanh_c[t]
    return h[1:], LstmCache(seq, h, c, gates, tanh_c, params)


def lstm_backward(dh_seq: np.ndarray, cache: LstmCache) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Backpropagate through time. Returns ``dx`` and gradients keyed like
    :meth:`LstmParams.parameters`."""
    T, N, H = cache.h.shape[0] - 1, cache.h.shape[1], cache.h.shape[2]
    if dh_seq.shape != (T, N, H):
        raise ShapeError(f"upstream gradient {dh_seq.shape} does not match cached output {(T, N, H)}")
    p = cache.params
    gates, c, tanh_c = cache.gates, cache.c, cache.tanh_c
    da = np.empty_like(gates)
    dh_next = np.zeros((N, H), dtype=gates.dtype)
    dc_next = np.zeros((N, H), dtype=gates.dtype)
    w_hT = p.w_h.value.T
    for t in range(T - 1, -1, -1):
        g = gates[t]
        i, f, o, cand = g[:, :H], g[:, H : 2 * H], g[:, 2 * H : 3 * H], g[:, 3 * H :]
        dh = dh_seq[t] + dh_next
        dc = dc_next + dh * o * (1 - tanh_c[t] ** 2)
        d = da[t]
        d[:, :H] = dc * cand * i * (1 - i)
        d[:, H : 2 * H] = dc * c[t] * f * (1 - f)
        d[:, 2 * H : 3 * H] = dh * tanh_c[t] * o * (1 - o)
        d[:, 3 * H :] = dc * i * (1 - cand * cand)
        dc_next = dc * f
        dh_next = d @ w_hT
    D = cache.x.shape[2]
    da2 = da.reshape(T * N, 4 * H)
    grads = {
        "w_x": cache.x.reshape(T * N, D).T @ da2,
        "w_h": cache.h[:-1].reshape(T * N, H).T @ da2,
        "b": da2.sum(axis=0),
    }
    dx = (da2 @ p.w_x.value.T).reshape(T, N, D)
    return dx, grads


@dataclass
class BiLstmLayer:
    forward: LstmParams
    backward: LstmParams

    def __post_init__(self):
        if self.forward.hidden_size != self.backward.hidden_size:
            raise ShapeError("both directions must share the hidden size")
        if self.forward.input_size != self.backward.input_size:
            raise ShapeError("both directions must share the input size")

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng: np.random.Generator, dtype=np.float64) -> "BiLstmLayer":
        return cls(LstmParams.init(input_size, hidden_size, rng, dtype), LstmParams.init(input_size, hidden_size, rng, dtype))

    @property
    def input_size(self) -> int:
        return self.forward.input_size

    @property
    def output_size(self) -> int:
        return 2 * self.forward.hidden_size

    def parameters(self) -> dict[str, Parameter]:
        out = {f"fw.{k}": v for k, v in self.forward.parameters().items()}
        out.update({f"bw.{k}": v for k, v in self.backward.parameters().items()})
        return out


def bilstm_forward(seq: np.ndarray, layer: BiLstmLayer):
    """Concatenate ``[forward_h_t ; backward_h_t]`` per step.

    The backward direction reads the reversed sequence; its outputs are
    reversed back before concatenation.
    """
    hf, cf = lstm_forward(seq, layer.forward)
    hb, cb = lstm_forward(seq[::-1], layer.backward)
    return np.concatenate([hf, hb[::-1]], axis=2), (cf, cb)


def bilstm_backward(dout: np.ndarray, cache) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    cf, cb = cache
    H = cf.h.shape[2]
    dxf, gf = lstm_backward(dout[:, :, :H], cf)
    dxb, gb = lstm_backward(np.ascontiguousarray(dout[::-1, :, H:]), cb)
    grads = {f"fw.{k}": v for k, v in gf.items()}
    grads.update({f"bw.{k}": v for k, v in gb.items()})
    return dxf + dxb[::-1], grads


def check_stack(layers: list[BiLstmLayer]) -> None:
    for k in range(1, len(layers)):
        if layers[k].input_size != layers[k - 1].output_size:
            raise ShapeError(
                f"layer {k} expects input width {layers[k].input_size}, "
                f"previous layer emits {layers[k - 1].output_size}"
            )


def stack_forward(layers: list[BiLstmLayer], seq: np.ndarray):
    check_stack(layers)
    caches = []
    for layer in layers:
        seq, cache = bilstm_forward(seq, layer)
        caches.append(cache)
    return seq, caches


def stack_backward(dout: np.ndarray, caches) -> tuple[np.ndarray, list[dict[str, np.ndarray]]]:
    grads = [None] * len(caches)
    for k in range(len(caches) - 1, -1, -1):
        dout, grads[k] = bilstm_backward(dout, caches[k])
    return dout, grads
