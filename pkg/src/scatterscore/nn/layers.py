"""Layers with hand-written backward passes, float64, batch size 1.

Every layer keeps its parameters in ``self.params`` and, after
``backward``, the matching gradients in ``self.grads`` (overwritten on each
call). ``forward`` caches what ``backward`` needs.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ..errors import MissingForwardState, ShapeMismatch


def glorot(rng, shape, fan_in, fan_out):
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


class Layer:
    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def _pop_cache(self):
        if self._cache is None:
            raise MissingForwardState(f"{type(self).__name__}.backward called before forward")
        cache, self._cache = self._cache, None
        return cache


class ReLU(Layer):
    def forward(self, x):
        self._cache = x > 0
        return np.maximum(x, 0.0)  # unlike np.where, lets NaN through

    def backward(self, grad):
        return grad * self._pop_cache()


class Dense(Layer):
    """Time-distributed affine map ``(T, D) -> (T, H)``."""

    def __init__(self, d_in, d_out, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.params["W"] = glorot(rng, (d_in, d_out), d_in, d_out)
        self.params["b"] = np.zeros(d_out)

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.params["W"].shape[0]:
            raise ShapeMismatch(f"Dense expects (T, {self.params['W'].shape[0]}), got {x.shape}")
        self._cache = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, grad):
        x = self._pop_cache()
        self.grads["W"] = x.T @ grad
        self.grads["b"] = grad.sum(axis=0)
        return grad @ self.params["W"].T


class Conv2d(Layer):
    """Convolution over a (time, freq, channel) map.

    Time is never strided and is "same"-padded so frames stay aligned.
    Frequency is "same"-padded and strided by ``freq_stride``, giving
    ``ceil(F / freq_stride)`` output bins.
    """

    def __init__(self, c_in, c_out, kernel=(3, 3), freq_stride=1, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        kt, kf = (kernel, kernel) if isinstance(kernel, int) else kernel
        self.kernel = (kt, kf)
        self.stride = int(freq_stride)
        self.params["W"] = glorot(rng, (kt, kf, c_in, c_out), kt * kf * c_in, kt * kf * c_out)
        self.params["b"] = np.zeros(c_out)

    def output_bins(self, F):
        return -(-F // self.stride)

    def _padding(self, F):
        kt, kf = self.kernel
        t_left = (kt - 1) // 2
        f_out = self.output_bins(F)
        f_pad = max((f_out - 1) * self.stride + kf - F, 0)
        f_left = f_pad // 2
        return (t_left, kt - 1 - t_left), (f_left, f_pad - f_left), f_out

    def forward(self, x):
        kt, kf, c_in, c_out = self.params["W"].shape
        if x.ndim != 3 or x.shape[2] != c_in:
            raise ShapeMismatch(f"Conv2d expects (T, F, {c_in}), got {x.shape}")
        T, F, _ = x.shape
        t_pad, f_pad, f_out = self._padding(F)
        xp = np.pad(x, (t_pad, f_pad, (0, 0)))
        win = sliding_window_view(xp, (kt, kf), axis=(0, 1))[:, :: self.stride][:, :f_out]
        # (T, f_out, C, kt, kf) -> rows of (kt, kf, C) patches
        cols = np.ascontiguousarray(win.transpose(0, 1, 3, 4, 2)).reshape(T * f_out, -1)
        out = cols @ self.params["W"].reshape(-1, c_out) + self.params["b"]
        self._cache = (cols, xp.shape, x.shape, t_pad, f_pad, f_out)
        return out.reshape(T, f_out, c_out)

    def backward(self, grad):
        cols, xp_shape, x_shape, t_pad, f_pad, f_out = self._pop_cache()
        kt, kf, c_in, c_out = self.params["W"].shape
        T = x_shape[0]
        g = grad.reshape(-1, c_out)
        self.grads["W"] = (cols.T @ g).reshape(self.params["W"].shape)
        self.grads["b"] = g.sum(axis=0)
        gcols = (g @ self.params["W"].reshape(-1, c_out).T).reshape(T, f_out, kt, kf, c_in)
        gxp = np.zeros(xp_shape)
        span = self.stride * (f_out - 1) + 1
        for i in range(kt):
            for j in range(kf):
                gxp[i:i + T, j:j + span:self.stride] += gcols[:, :, i, j, :]
        return gxp[t_pad[0]:t_pad[0] + x_shape[0], f_pad[0]:f_pad[0] + x_shape[1]]


class LSTM(Layer):
    """Single-direction LSTM, gate order (input, forget, cell, output)."""

    def __init__(self, d_in, hidden, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        h = hidden
        self.hidden = h
        self.params["W"] = glorot(rng, (d_in, 4 * h), d_in, 4 * h)
        self.params["U"] = glorot(rng, (h, 4 * h), h, 4 * h)
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0
        self.params["b"] = b

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.params["W"].shape[0] or x.shape[0] < 1:
            raise ShapeMismatch(f"LSTM expects (T>=1, {self.params['W'].shape[0]}), got {x.shape}")
        T, h = x.shape[0], self.hidden
        U = self.params["U"]
        xw = x @ self.params["W"] + self.params["b"]
        gates = np.empty((T, 4 * h))
        cs = np.zeros((T + 1, h))
        hs = np.zeros((T + 1, h))
        for t in range(T):
            z = xw[t] + hs[t] @ U
            s = gates[t]
            s[:] = expit(z)
            s[2 * h:3 * h] = np.tanh(z[2 * h:3 * h])
            cs[t + 1] = s[h:2 * h] * cs[t] + s[:h] * s[2 * h:3 * h]
            hs[t + 1] = s[3 * h:] * np.tanh(cs[t + 1])
        self._cache = (x, gates, cs, hs)
        return hs[1:].copy()

    def backward(self, grad):
        x, gates, cs, hs = self._pop_cache()
        T, h = x.shape[0], self.hidden
        U = self.params["U"]
        dz = np.empty((T, 4 * h))
        dh_next = np.zeros(h)
        dc_next = np.zeros(h)
        for t in range(T - 1, -1, -1):
            i, f, g, o = gates[t, :h], gates[t, h:2 * h], gates[t, 2 * h:3 * h], gates[t, 3 * h:]
            tc = np.tanh(cs[t + 1])
            dh = grad[t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz[t, :h] = dc * g * i * (1.0 - i)
            dz[t, h:2 * h] = dc * cs[t] * f * (1.0 - f)
            dz[t, 2 * h:3 * h] = dc * i * (1.0 - g * g)
            dz[t, 3 * h:] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dz[t] @ U.T
        self.grads["W"] = x.T @ dz
        self.grads["U"] = hs[:-1].T @ dz
        self.grads["b"] = dz.sum(axis=0)
        return dz @ self.params["W"].T


class BLSTM(Layer):
    """Forward and time-reversed LSTMs, outputs concatenated per frame."""

    def __init__(self, d_in, hidden, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.fwd = LSTM(d_in, hidden, rng)
        self.bwd = LSTM(d_in, hidden, rng)
        self.hidden = hidden
        for k, v in self.fwd.params.items():
            self.params[f"fwd.{k}"] = v
        for k, v in self.bwd.params.items():
            self.params[f"bwd.{k}"] = v

    def forward(self, x):
        self._cache = True
        out_f = self.fwd.forward(x)
        out_b = self.bwd.forward(x[::-1])[::-1]
        return np.concatenate([out_f, out_b], axis=1)

    def backward(self, grad):
        self._pop_cache()
        h = self.hidden
        dx = self.fwd.backward(grad[:, :h])
        dx = dx + self.bwd.backward(np.ascontiguousarray(grad[::-1, h:]))[::-1]
        for k, v in self.fwd.grads.items():
            self.grads[f"fwd.{k}"] = v
        for k, v in self.bwd.grads.items():
            self.grads[f"bwd.{k}"] = v
        return dx


class Sequential(Layer):
    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)
        for n, layer in enumerate(self.layers):
            for k, v in layer.params.items():
                self.params[f"{n}.{k}"] = v

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        for n, layer in enumerate(self.layers):
            for k, v in layer.grads.items():
                self.grads[f"{n}.{k}"] = v
        return grad
