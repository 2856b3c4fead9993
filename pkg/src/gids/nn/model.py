from __future__ import annotations

import enum
import math

import numpy as np

from ..errors import ShapeMismatch
from .layers import Act, Crop, Deconv2d, Dense, Reshape

NOISE_DIM = 100


class ArchTag(enum.IntEnum):
    DISCRIMINATOR_DNN = 1
    GENERATOR_DECONV = 2


class Network:
    """An ordered stack of layers plus its architecture tag.

    ``input_shape``/``output_shape`` exclude the batch axis.  Inputs whose
    trailing dimensions have the right total size are flattened or reshaped
    to ``input_shape`` on the way in.
    """

    def __init__(self, layers, arch_tag: ArchTag, input_shape):
        self.layers = list(layers)
        self.arch_tag = ArchTag(arch_tag)
        self.input_shape = tuple(int(s) for s in input_shape)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.out_shape(shape)
        self.output_shape = shape

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    @property
    def dtype(self):
        """Parameter dtype, or None for a network without parameters."""
        ps = self.params()
        return ps[0].dtype if ps else None

    def _cast(self, a):
        # parameterless networks pass floating inputs through unchanged
        dtype = self.dtype or (a.dtype if np.issubdtype(a.dtype, np.floating) else np.float32)
        return a.astype(dtype, copy=False)

    def _coerce(self, x):
        x = np.asarray(x)
        if x.shape[1:] == self.input_shape:
            out = x
        elif math.prod(x.shape[1:]) == math.prod(self.input_shape) and x.ndim >= 2:
            out = x.reshape(x.shape[0], *self.input_shape)
        else:
            raise ShapeMismatch(f"network expects (N, {self.input_shape}), got {x.shape}")
        return self._cast(out)

    def forward(self, x):
        """Return ``(output, caches)``."""
        h = self._coerce(x)
        caches = []
        for layer in self.layers:
            h, cache = layer.forward(h)
            caches.append(cache)
        return h, caches

    def predict(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, caches, dout, need_input_grad: bool = True):
        """Return ``(dx, grads)`` with ``grads`` aligned to :meth:`params`.

        With ``need_input_grad=False`` the first layer skips its input
        gradient and ``dx`` is None.
        """
        if len(caches) != len(self.layers):
            raise ShapeMismatch("cache does not come from this network")
        dout = np.asarray(dout)
        if dout.shape[1:] != self.output_shape:
            raise ShapeMismatch(f"output gradient {dout.shape} does not match {self.output_shape}")
        grads_rev = []
        g = self._cast(dout)
        last = len(self.layers) - 1
        for k, (layer, cache) in enumerate(zip(reversed(self.layers), reversed(caches))):
            g, lg = layer.backward(cache, g, need_dx=need_input_grad or k != last)
            grads_rev.append(lg)
        grads = [p for lg in reversed(grads_rev) for p in lg]
        return g, grads

    def astype(self, dtype) -> "Network":
        """Deep copy with all parameters cast to ``dtype``."""
        return self.copy(dtype)

    def copy(self, dtype=None) -> "Network":
        layers = []
        for layer in self.layers:
            if isinstance(layer, Dense):
                layers.append(Dense(_c(layer.W, dtype), _c(layer.b, dtype), layer.act))
            elif isinstance(layer, Deconv2d):
                layers.append(Deconv2d(_c(layer.K, dtype), _c(layer.b, dtype), layer.stride,
                                       layer.padding, layer.act, layer.in_hw))
            elif isinstance(layer, Reshape):
                layers.append(Reshape(layer.shape))
            else:
                layers.append(Crop(layer.rows, layer.cols))
        return Network(layers, self.arch_tag, self.input_shape)

    def load_params(self, values) -> None:
        for p, v in zip(self.params(), values, strict=True):
            p[...] = v

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        if (self.arch_tag, self.input_shape, len(self.layers)) != (
            other.arch_tag, other.input_shape, len(other.layers)
        ):
            return False
        for a, b in zip(self.layers, other.layers):
            if type(a) is not type(b) or _layer_meta(a) != _layer_meta(b):
                return False
        pa, pb = self.params(), other.params()
        return all(x.dtype == y.dtype and x.shape == y.shape and x.tobytes() == y.tobytes()
                   for x, y in zip(pa, pb))

    __hash__ = None


def _c(a, dtype):
    return a.astype(dtype if dtype is not None else a.dtype, copy=True)


def _layer_meta(layer):
    if isinstance(layer, Dense):
        return (int(layer.act),)
    if isinstance(layer, Deconv2d):
        return (layer.stride, layer.padding, int(layer.act), layer.in_hw)
    if isinstance(layer, Reshape):
        return layer.shape
    return (layer.rows, layer.cols)


def build_discriminator(n_in: int = 64 * 48, hidden=(1024, 512), seed: int = 0,
                        dtype=np.float32) -> Network:
    """Flat DNN ending in a single sigmoid unit; ReLU on hidden layers."""
    rng = np.random.default_rng(seed)
    sizes = [n_in, *hidden]
    layers = [Dense.init(a, b, Act.RELU, rng, dtype) for a, b in zip(sizes, sizes[1:])]
    layers.append(Dense.init(sizes[-1], 1, Act.SIGMOID, rng, dtype))
    return Network(layers, ArchTag.DISCRIMINATOR_DNN, (n_in,))


def build_generator(image_shape=(64, 48), noise_dim: int = NOISE_DIM, channels=(128, 64, 32, 16),
                    seed: int = 0, dtype=np.float32) -> Network:
    """Dense projection to a small feature map, then stride-2 deconvs up to ``image_shape``.

    Each deconv (kernel 4, stride 2, padding 1) doubles height and width; the
    last one maps to a single Tanh channel.  Shapes that are not multiples of
    ``2**len(channels)`` are produced one size up and cropped.
    """
    rng = np.random.default_rng(seed)
    rows, cols = image_shape
    up = 2 ** len(channels)
    h0, w0 = -(-rows // up), -(-cols // up)
    c0 = channels[0]
    layers = [Dense.init(noise_dim, c0 * h0 * w0, Act.RELU, rng, dtype), Reshape((c0, h0, w0))]
    hw = (h0, w0)
    outs = [*channels[1:], 1]
    for i, (cin, cout) in enumerate(zip(channels, outs)):
        act = Act.TANH if i == len(channels) - 1 else Act.RELU
        layer = Deconv2d.init(cin, cout, 4, 2, 1, act, hw, rng, dtype)
        layers.append(layer)
        hw = layer.out_hw(hw)
    if hw != (rows, cols):
        layers.append(Crop(rows, cols))
    return Network(layers, ArchTag.GENERATOR_DECONV, (noise_dim,))
