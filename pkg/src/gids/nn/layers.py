"""Layer primitives with hand-written backward passes.

Every layer exposes ``forward(x) -> (y, cache)`` and
``backward(cache, dy) -> (dx, grads)`` where ``grads`` lines up with
``params()``.  Batches are the leading axis.
"""

from __future__ import annotations

import enum

import numpy as np

from ..errors import ShapeMismatch


class Act(enum.IntEnum):
    NONE = 0
    RELU = 1
    SIGMOID = 2
    TANH = 3


def activate(z: np.ndarray, act: Act) -> np.ndarray:
    if act is Act.RELU:
        return np.maximum(z, 0)
    if act is Act.SIGMOID:
        # split by sign so exp never overflows
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if act is Act.TANH:
        return np.tanh(z)
    return z


def activate_grad(z: np.ndarray, y: np.ndarray, dy: np.ndarray, act: Act) -> np.ndarray:
    """Gradient w.r.t. the pre-activation ``z`` given output ``y = act(z)``."""
    if act is Act.RELU:
        return dy * (z > 0)
    if act is Act.SIGMOID:
        return dy * y * (1 - y)
    if act is Act.TANH:
        return dy * (1 - y * y)
    return dy


class Dense:
    kind = 1

    def __init__(self, weights: np.ndarray, bias: np.ndarray, act: Act = Act.NONE):
        if weights.ndim != 2 or bias.shape != (weights.shape[0],):
            raise ShapeMismatch(f"dense weights {weights.shape} and bias {bias.shape} disagree")
        self.W = weights
        self.b = bias
        self.act = Act(act)

    @classmethod
    def init(cls, n_in: int, n_out: int, act: Act, rng: np.random.Generator, dtype=np.float32):
        limit = np.sqrt(6.0 / (n_in + n_out))
        W = rng.uniform(-limit, limit, size=(n_out, n_in)).astype(dtype)
        return cls(W, np.zeros(n_out, dtype=dtype), act)

    @property
    def in_shape(self) -> tuple[int, ...]:
        return (self.W.shape[1],)

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        if tuple(in_shape) != self.in_shape:
            raise ShapeMismatch(f"dense layer expects {self.in_shape}, got {tuple(in_shape)}")
        return (self.W.shape[0],)

    def params(self) -> list[np.ndarray]:
        return [self.W, self.b]

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.W.shape[1]:
            raise ShapeMismatch(f"dense layer expects (N, {self.W.shape[1]}), got {x.shape}")
        z = x @ self.W.T + self.b
        y = activate(z, self.act)
        return y, (x, z, y)

    def backward(self, cache, dy, need_dx=True):
        x, z, y = cache
        dz = activate_grad(z, y, dy, self.act)
        dW = dz.T @ x
        db = dz.sum(axis=0)
        dx = dz @ self.W if need_dx else None
        return dx, [dW, db]


def deconv_out_size(n: int, kernel: int, stride: int, padding: int) -> int:
    return (n - 1) * stride - 2 * padding + kernel


class Deconv2d:
    """Transposed 2-D convolution.

    Kernels are laid out ``(in_ch, out_ch, kH, kW)``.  Each input pixel
    scatters ``x[c] * K[c, :, :, :]`` into the output at ``stride`` spacing,
    after which ``padding`` rows/columns are cropped from every border.
    """

    kind = 2

    def __init__(self, kernels, bias, stride: int = 1, padding: int = 0,
                 act: Act = Act.NONE, in_hw: tuple[int, int] | None = None):
        if kernels.ndim != 4 or bias.shape != (kernels.shape[1],):
            raise ShapeMismatch(f"deconv kernels {kernels.shape} and bias {bias.shape} disagree")
        if stride < 1 or padding < 0:
            raise ValueError("stride must be >= 1 and padding >= 0")
        self.K = kernels
        self.b = bias
        self.stride = int(stride)
        self.padding = int(padding)
        self.act = Act(act)
        self.in_hw = tuple(in_hw) if in_hw is not None else None
        if self.in_hw is not None:
            ho, wo = self.out_hw(self.in_hw)
            if ho < 1 or wo < 1:
                raise ShapeMismatch(f"deconv on {self.in_hw} gives empty output {(ho, wo)}")

    @classmethod
    def init(cls, in_ch, out_ch, kernel, stride, padding, act, in_hw, rng, dtype=np.float32):
        K = rng.normal(0.0, 0.02, size=(in_ch, out_ch, kernel, kernel)).astype(dtype)
        return cls(K, np.zeros(out_ch, dtype=dtype), stride, padding, act, in_hw)

    @property
    def in_ch(self) -> int:
        return self.K.shape[0]

    @property
    def out_ch(self) -> int:
        return self.K.shape[1]

    def out_hw(self, hw):
        kh, kw = self.K.shape[2:]
        return (deconv_out_size(hw[0], kh, self.stride, self.padding),
                deconv_out_size(hw[1], kw, self.stride, self.padding))

    @property
    def in_shape(self):
        return (self.in_ch, *self.in_hw)

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.in_ch:
            raise ShapeMismatch(f"deconv expects ({self.in_ch}, H, W), got {tuple(in_shape)}")
        if self.in_hw is not None and tuple(in_shape[1:]) != self.in_hw:
            raise ShapeMismatch(f"deconv built for {self.in_hw}, got {tuple(in_shape[1:])}")
        return (self.out_ch, *self.out_hw(in_shape[1:]))

    def params(self):
        return [self.K, self.b]

    def _kmat(self):
        # (Cin, kh*kw*Cout) so that one matmul yields every kernel tap, channels last
        cin, cout, kh, kw = self.K.shape
        return self.K.transpose(0, 2, 3, 1).reshape(cin, kh * kw * cout)

    def _scatter(self, x):
        n, cin, h, w = x.shape
        _, cout, kh, kw = self.K.shape
        s, p = self.stride, self.padding
        xl = x.transpose(0, 2, 3, 1).reshape(n * h * w, cin)
        cols = (xl @ self._kmat()).reshape(n, h, w, kh, kw, cout)
        full = np.zeros((n, (h - 1) * s + kh, (w - 1) * s + kw, cout), dtype=cols.dtype)
        for i in range(kh):
            for j in range(kw):
                full[:, i:i + s * (h - 1) + 1:s, j:j + s * (w - 1) + 1:s, :] += cols[:, :, :, i, j, :]
        ho, wo = self.out_hw((h, w))
        return full[:, p:p + ho, p:p + wo, :].transpose(0, 3, 1, 2)

    def _gather(self, dy, hw):
        """Adjoint of the scatter; returns taps as ``(N*H*W, kh*kw*Cout)``."""
        n, cout, ho, wo = dy.shape
        h, w = hw
        _, _, kh, kw = self.K.shape
        s, p = self.stride, self.padding
        full = np.zeros((n, (h - 1) * s + kh, (w - 1) * s + kw, cout), dtype=dy.dtype)
        full[:, p:p + ho, p:p + wo, :] = dy.transpose(0, 2, 3, 1)
        dcols = np.empty((n, h, w, kh, kw, cout), dtype=dy.dtype)
        for i in range(kh):
            for j in range(kw):
                dcols[:, :, :, i, j, :] = full[:, i:i + s * (h - 1) + 1:s, j:j + s * (w - 1) + 1:s, :]
        return dcols.reshape(n * h * w, kh * kw * cout)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeMismatch(f"deconv expects (N, {self.in_ch}, H, W), got {x.shape}")
        if self.in_hw is not None and x.shape[2:] != self.in_hw:
            raise ShapeMismatch(f"deconv built for {self.in_hw}, got {x.shape[2:]}")
        z = self._scatter(x) + self.b[None, :, None, None]
        y = activate(z, self.act)
        return y, (x, z, y)

    def backward(self, cache, dy, need_dx=True):
        x, z, y = cache
        n, cin, h, w = x.shape
        cout, kh, kw = self.K.shape[1:]
        dz = activate_grad(z, y, dy, self.act)
        dcols = self._gather(dz, (h, w))
        xl = x.transpose(0, 2, 3, 1).reshape(n * h * w, cin)
        dK = (xl.T @ dcols).reshape(cin, kh, kw, cout).transpose(0, 3, 1, 2)
        db = dz.sum(axis=(0, 2, 3))
        dx = None
        if need_dx:
            dx = (dcols @ self._kmat().T).reshape(n, h, w, cin).transpose(0, 3, 1, 2)
            dx = np.ascontiguousarray(dx)
        return dx, [np.ascontiguousarray(dK), db]

    def adjoint(self, y):
        """Apply the transpose of the linear part (no bias, no activation)."""
        n = y.shape[0]
        h, w = self._in_hw_for(y.shape[2:])
        dcols = self._gather(y, (h, w))
        return (dcols @ self._kmat().T).reshape(n, h, w, self.in_ch).transpose(0, 3, 1, 2)

    def _in_hw_for(self, out_hw):
        kh, kw = self.K.shape[2:]
        s, p = self.stride, self.padding
        h = (out_hw[0] + 2 * p - kh) // s + 1
        w = (out_hw[1] + 2 * p - kw) // s + 1
        if self.out_hw((h, w)) != tuple(out_hw):
            raise ShapeMismatch(f"{tuple(out_hw)} is not a reachable deconv output size")
        return (h, w)


class Reshape:
    kind = 3

    def __init__(self, shape):
        self.shape = tuple(int(s) for s in shape)

    def out_shape(self, in_shape):
        if int(np.prod(in_shape)) != int(np.prod(self.shape)):
            raise ShapeMismatch(f"cannot reshape {tuple(in_shape)} to {self.shape}")
        return self.shape

    def params(self):
        return []

    def forward(self, x):
        return x.reshape(x.shape[0], *self.shape), x.shape

    def backward(self, cache, dy, need_dx=True):
        return dy.reshape(cache), []


class Crop:
    """Keep the top-left ``rows x cols`` of each channel."""

    kind = 4

    def __init__(self, rows: int, cols: int):
        self.rows = int(rows)
        self.cols = int(cols)

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[1] < self.rows or in_shape[2] < self.cols:
            raise ShapeMismatch(f"cannot crop {tuple(in_shape)} to {self.rows}x{self.cols}")
        return (in_shape[0], self.rows, self.cols)

    def params(self):
        return []

    def forward(self, x):
        return x[:, :, : self.rows, : self.cols], x.shape

    def backward(self, cache, dy, need_dx=True):
        dx = np.zeros(cache, dtype=dy.dtype)
        dx[:, :, : self.rows, : self.cols] = dy
        return dx, []


LAYER_KINDS = {cls.kind: cls for cls in (Dense, Deconv2d, Reshape, Crop)}
