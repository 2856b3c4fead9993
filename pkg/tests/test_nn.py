import math

import numpy as np
import pytest

from gids.errors import BadMagic, ShapeHeaderMismatch, ShapeMismatch, TruncatedStream
from gids.nn import (
    Act,
    AdamState,
    ArchTag,
    Crop,
    Deconv2d,
    Dense,
    Network,
    adam_step,
    bce_loss,
    build_discriminator,
    build_generator,
    check_network,
    load_weights,
    numeric_grad,
    save_weights,
)
from gids.nn.layers import deconv_out_size


def naive_dense(x, W, b, act):
    out = np.zeros((x.shape[0], W.shape[0]))
    for n in range(x.shape[0]):
        for o in range(W.shape[0]):
            s = b[o]
            for i in range(W.shape[1]):
                s += W[o, i] * x[n, i]
            if act == "relu":
                s = max(s, 0.0)
            elif act == "sigmoid":
                s = 1.0 / (1.0 + math.exp(-s))
            elif act == "tanh":
                s = math.tanh(s)
            out[n, o] = s
    return out


def naive_deconv(x, K, b, stride, pad):
    n, cin, h, w = x.shape
    _, cout, kh, kw = K.shape
    ho, wo = deconv_out_size(h, kh, stride, pad), deconv_out_size(w, kw, stride, pad)
    out = np.zeros((n, cout, ho, wo))
    for a in range(n):
        for ci in range(cin):
            for i in range(h):
                for j in range(w):
                    for co in range(cout):
                        for u in range(kh):
                            for v in range(kw):
                                r, c = i * stride + u - pad, j * stride + v - pad
                                if 0 <= r < ho and 0 <= c < wo:
                                    out[a, co, r, c] += x[a, ci, i, j] * K[ci, co, u, v]
    return out + b[None, :, None, None]


def test_zero_weights_sigmoid_half():
    d = build_discriminator(20, (8, 4), seed=0)
    for p in d.params():
        p[...] = 0
    out = d.predict(np.random.default_rng(0).normal(size=(5, 20)))
    assert np.all(out == 0.5)


def test_identity_dense():
    net = Network([Dense(np.eye(6), np.zeros(6), Act.NONE)], ArchTag.DISCRIMINATOR_DNN, (6,))
    x = np.random.default_rng(1).normal(size=(3, 6))
    assert np.array_equal(net.predict(x), x)


def test_discriminator_matches_naive_oracle():
    rng = np.random.default_rng(2)
    d = build_discriminator(10, (7, 5), seed=3, dtype=np.float64)
    x = rng.normal(size=(4, 10))
    h = x
    for layer, act in zip(d.layers, ["relu", "relu", "sigmoid"]):
        h = naive_dense(h, layer.W, layer.b, act)
    np.testing.assert_allclose(d.predict(x), h, rtol=1e-6)


@pytest.mark.parametrize("stride, pad, k", [(1, 0, 3), (2, 1, 4), (2, 0, 3), (3, 1, 2)])
def test_deconv_matches_naive_oracle(stride, pad, k):
    rng = np.random.default_rng(4)
    K = rng.normal(size=(3, 2, k, k))
    b = rng.normal(size=2)
    layer = Deconv2d(K, b, stride, pad, Act.NONE, (4, 5))
    x = rng.normal(size=(2, 3, 4, 5))
    y, _ = layer.forward(x)
    np.testing.assert_allclose(y, naive_deconv(x, K, b, stride, pad), rtol=1e-6, atol=1e-12)
    assert y.shape[2:] == layer.out_hw((4, 5))


def test_deconv_shape_arithmetic():
    g = build_generator((64, 48))
    deconvs = [l for l in g.layers if isinstance(l, Deconv2d)]
    assert len(deconvs) == 4
    hw = (4, 3)
    for layer, expect in zip(deconvs, [(8, 6), (16, 12), (32, 24), (64, 48)]):
        assert layer.in_hw == hw and layer.out_hw(hw) == expect
        hw = expect
    assert [l.out_ch for l in deconvs] == [64, 32, 16, 1]
    assert g.output_shape == (1, 64, 48)


def test_generator_with_crop():
    g = build_generator((64, 11), noise_dim=8, seed=0)
    assert g.output_shape == (1, 64, 11)


def test_generator_and_discriminator_ranges():
    rng = np.random.default_rng(5)
    g = build_generator((16, 12), noise_dim=10, channels=(8, 4), seed=1)
    d = build_discriminator(16 * 12, (16, 8), seed=1)
    for p in g.params():
        p[...] = rng.normal(size=p.shape) * 3
    img = g.predict(rng.normal(size=(8, 10)))
    assert img.min() >= -1 and img.max() <= 1
    out = d.predict(img)
    assert out.min() >= 0 and out.max() <= 1


def test_forward_shape_mismatch():
    d = build_discriminator(12, (4,), seed=0)
    with pytest.raises(ShapeMismatch):
        d.forward(np.zeros((2, 13)))


def test_forward_deterministic():
    d = build_discriminator(30, (16, 8), seed=0)
    x = np.random.default_rng(0).normal(size=(7, 30)).astype(np.float32)
    assert d.predict(x).tobytes() == d.predict(x).tobytes()


def test_zero_loss_grad_gives_zero_grads():
    g = build_generator((8, 6), noise_dim=5, channels=(4, 3), seed=2)
    out, caches = g.forward(np.random.default_rng(0).normal(size=(3, 5)))
    dx, grads = g.backward(caches, np.zeros_like(out))
    assert not np.any(dx) and all(not np.any(gr) for gr in grads)


def test_relu_dead_region():
    W = -np.ones((3, 4))
    layer = Dense(W, -np.ones(3), Act.RELU)
    x = np.abs(np.random.default_rng(1).normal(size=(5, 4)))
    y, cache = layer.forward(x)
    assert not y.any()
    dx, (dW, db) = layer.backward(cache, np.ones_like(y))
    assert not dx.any() and not dW.any() and not db.any()


def test_backward_shape_mismatch():
    d = build_discriminator(6, (4,), seed=0)
    out, caches = d.forward(np.zeros((2, 6)))
    with pytest.raises(ShapeMismatch):
        d.backward(caches, np.zeros((2, 2)))
    with pytest.raises(ShapeMismatch):
        d.backward(caches[:1], np.zeros((2, 1)))


@pytest.mark.parametrize("seed", range(5))
def test_gradcheck_small_nets(seed):
    rng = np.random.default_rng(seed)
    d = build_discriminator(9, (6, 5), seed=seed, dtype=np.float64)
    assert check_network(d, rng.normal(size=(3, 9)), seed=seed) < 1e-6
    g = build_generator((8, 6), noise_dim=4, channels=(3, 2), seed=seed, dtype=np.float64)
    for p in g.params():
        p[...] = rng.normal(size=p.shape) * 0.5
    assert check_network(g, rng.normal(size=(2, 4)), seed=seed) < 1e-5


def test_adjoint_identity():
    rng = np.random.default_rng(7)
    for stride, pad in [(1, 0), (2, 1), (3, 2)]:
        layer = Deconv2d(rng.normal(size=(3, 4, 4, 4)), np.zeros(4), stride, pad, Act.NONE, (5, 3))
        x = rng.normal(size=(2, 3, 5, 3))
        y = rng.normal(size=(2, 4, *layer.out_hw((5, 3))))
        lhs = np.sum(layer.forward(x)[0] * y)
        rhs = np.sum(x * layer.adjoint(y))
        assert abs(lhs - rhs) <= 1e-6 * max(abs(lhs), 1.0)


def test_bce_values():
    loss, _ = bce_loss(0.5, 1)
    assert loss == pytest.approx(math.log(2), abs=1e-12)
    assert bce_loss(1 - 1e-12, 1)[0] < 1e-6
    assert bce_loss(0.0, 0)[0] < 1e-6
    assert np.isfinite(bce_loss(0.0, 1)[0])


@pytest.mark.parametrize("p, t", [(0.3, 1), (0.3, 0), (0.9, 1), (0.01, 0), (0.62, 0.9)])
def test_bce_gradient(p, t):
    _, grad = bce_loss(p, t)
    x = np.array([p], dtype=np.float64)
    fd = numeric_grad(lambda: bce_loss(x[0], t)[0], x, h=1e-6)
    assert abs(float(grad) - fd[0]) <= 1e-6 * max(1.0, abs(fd[0]))


def test_adam_zero_grad():
    p = [np.array([1.0, -2.0]), np.ones((2, 2))]
    before = [a.copy() for a in p]
    st = AdamState.for_params(p)
    adam_step(p, [np.zeros(2), np.zeros((2, 2))], st)
    assert st.step == 1
    assert all(np.array_equal(a, b) for a, b in zip(p, before))


def test_adam_first_step_by_hand():
    g = np.array([0.5, -3.0, 1e-3])
    p = [np.zeros(3)]
    st = AdamState(lr=0.01, beta1=0.9, beta2=0.99, eps=1e-8)
    adam_step(p, [g], st)
    # m_hat = g and v_hat = g^2 after bias correction
    expected = -0.01 * g / (np.abs(g) + 1e-8)
    np.testing.assert_allclose(p[0], expected, rtol=1e-12)


def test_adam_deterministic():
    rng = np.random.default_rng(0)
    p0 = [rng.normal(size=(3, 4)), rng.normal(size=4)]
    g = [rng.normal(size=(3, 4)), rng.normal(size=4)]
    st0 = AdamState.for_params(p0)
    adam_step([a.copy() for a in p0], g, st0)
    runs = []
    for _ in range(2):
        p = [a.copy() for a in p0]
        st = st0.copy()
        adam_step(p, g, st)
        runs.append((p, st))
    assert all(np.array_equal(a, b) for a, b in zip(runs[0][0], runs[1][0]))
    assert runs[0][1].step == runs[1][1].step == 2


def test_adam_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        adam_step([np.zeros(3)], [np.zeros(4)], AdamState())


@pytest.mark.parametrize("build", [
    lambda: build_discriminator(48 * 8, (32, 16), seed=1),
    lambda: build_generator((16, 48), noise_dim=12, channels=(8, 4), seed=1),
    lambda: build_generator((64, 11), noise_dim=12, channels=(8, 4, 4, 2), seed=1),
])
def test_weights_round_trip(build):
    net = build()
    blob = save_weights(net)
    assert blob.startswith(b"GIDSW1\n")
    back = load_weights(blob)
    assert back == net
    assert save_weights(back) == blob


def test_weights_bad_magic():
    blob = bytearray(save_weights(build_discriminator(8, (4,), seed=0)))
    blob[0] ^= 0xFF
    with pytest.raises(BadMagic):
        load_weights(bytes(blob))


def test_weights_truncated():
    blob = save_weights(build_discriminator(8, (4,), seed=0))
    for cut in (len(blob) - 1, len(blob) // 2, 9):
        with pytest.raises(TruncatedStream):
            load_weights(blob[:cut])


def test_weights_header_mismatch():
    blob = save_weights(build_discriminator(8, (4,), seed=0))
    with pytest.raises(ShapeHeaderMismatch):
        load_weights(blob + b"\x00")
    # break the chain: second layer claims 5 inputs instead of 4
    net = build_discriminator(8, (4,), seed=0)
    bad = Network.__new__(Network)
    bad.layers = [net.layers[0], Dense(np.zeros((1, 5), np.float32), np.zeros(1, np.float32), Act.SIGMOID)]
    bad.arch_tag = net.arch_tag
    with pytest.raises(ShapeHeaderMismatch):
        load_weights(save_weights(bad))


def test_parameterless_network_keeps_input_dtype():
    net = Network([Crop(2, 3)], ArchTag.GENERATOR_DECONV, (1, 4, 4))
    assert net.dtype is None
    assert net.predict(np.zeros((1, 1, 4, 4))).dtype == np.float64
    assert net.predict(np.zeros((1, 1, 4, 4), np.uint8)).dtype == np.float32
