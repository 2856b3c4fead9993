"""Binary weight files.

Layout (all integers little-endian)::

    b"GIDSW1\\n"
    u8   arch tag
    u32  layer count
    per layer:
        u8   layer kind (1 dense, 2 deconv, 3 reshape, 4 crop)
        i32  shape header, kind-specific:
               dense   out, in, activation
               deconv  in_ch, out_ch, kH, kW, stride, padding, activation, in_H, in_W
               reshape ndim, dims...
               crop    rows, cols
        f32  parameters, row-major (weights then bias)

Parameters are stored as float32.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from ..errors import BadMagic, ShapeHeaderMismatch, ShapeMismatch, TruncatedStream
from .layers import Act, Crop, Deconv2d, Dense, Reshape
from .model import ArchTag, Network

MAGIC = b"GIDSW1\n"


def save_weights(net: Network) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<BI", int(net.arch_tag), len(net.layers)))
    for layer in net.layers:
        out.write(struct.pack("<B", layer.kind))
        if isinstance(layer, Dense):
            ints = [*layer.W.shape, int(layer.act)]
        elif isinstance(layer, Deconv2d):
            ints = [*layer.K.shape, layer.stride, layer.padding, int(layer.act), *layer.in_hw]
        elif isinstance(layer, Reshape):
            ints = [len(layer.shape), *layer.shape]
        else:
            ints = [layer.rows, layer.cols]
        out.write(struct.pack(f"<{len(ints)}i", *ints))
        for p in layer.params():
            out.write(np.ascontiguousarray(p, dtype="<f4").tobytes())
    return out.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedStream(f"needed {n} bytes at offset {self.pos}, stream has {len(self.data)}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return bytes(chunk)

    def ints(self, n: int) -> list[int]:
        return list(struct.unpack(f"<{n}i", self.take(4 * n)))

    def floats(self, shape) -> np.ndarray:
        count = int(np.prod(shape))
        return np.frombuffer(self.take(4 * count), dtype="<f4").astype(np.float32).reshape(shape)


def _act(code: int, allowed) -> Act:
    try:
        act = Act(code)
    except ValueError:
        raise ShapeHeaderMismatch(f"unknown activation code {code}") from None
    if act not in allowed:
        raise ShapeHeaderMismatch(f"activation {act.name} not valid here")
    return act


def load_weights(data: bytes) -> Network:
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise BadMagic("not a GIDS weight file")
    tag, n_layers = struct.unpack("<BI", r.take(5))
    try:
        arch = ArchTag(tag)
    except ValueError:
        raise ShapeHeaderMismatch(f"unknown arch tag {tag}") from None

    layers = []
    for _ in range(n_layers):
        (kind,) = struct.unpack("<B", r.take(1))
        if kind == Dense.kind:
            n_out, n_in, act = r.ints(3)
            if n_out < 1 or n_in < 1:
                raise ShapeHeaderMismatch(f"dense shape {n_out}x{n_in}")
            W = r.floats((n_out, n_in))
            b = r.floats((n_out,))
            layers.append(Dense(W, b, _act(act, list(Act))))
        elif kind == Deconv2d.kind:
            cin, cout, kh, kw, stride, pad, act, ih, iw = r.ints(9)
            if min(cin, cout, kh, kw, stride, ih, iw) < 1 or pad < 0:
                raise ShapeHeaderMismatch("bad deconv header")
            K = r.floats((cin, cout, kh, kw))
            b = r.floats((cout,))
            try:
                layers.append(Deconv2d(K, b, stride, pad, _act(act, list(Act)), (ih, iw)))
            except (ShapeMismatch, ValueError) as exc:
                raise ShapeHeaderMismatch(str(exc)) from None
        elif kind == Reshape.kind:
            (ndim,) = r.ints(1)
            if not 1 <= ndim <= 8:
                raise ShapeHeaderMismatch(f"reshape rank {ndim}")
            layers.append(Reshape(r.ints(ndim)))
        elif kind == Crop.kind:
            layers.append(Crop(*r.ints(2)))
        else:
            raise ShapeHeaderMismatch(f"unknown layer kind {kind}")

    if r.pos != len(r.data):
        raise ShapeHeaderMismatch(f"{len(r.data) - r.pos} trailing bytes after last layer")
    if not layers:
        raise ShapeHeaderMismatch("weight file has no layers")
    first = layers[0]
    if isinstance(first, Dense):
        in_shape = first.in_shape
    elif isinstance(first, Deconv2d):
        in_shape = first.in_shape
    else:
        raise ShapeHeaderMismatch("first layer must carry its input shape")
    try:
        return Network(layers, arch, in_shape)
    except ShapeMismatch as exc:
        raise ShapeHeaderMismatch(f"layers do not chain: {exc}") from None


def save_weights_file(net: Network, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save_weights(net))


def load_weights_file(path) -> Network:
    with open(path, "rb") as fh:
        return load_weights(fh.read())
