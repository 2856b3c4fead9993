import numpy as np
import pytest

from gids.encoder import EncoderConfig, Mode
from gids.errors import BadMagic, EmptyDataset, ShapeMismatch, TruncatedStream
from gids.gan import (
    TrainConfig,
    TrainedGids,
    generate_samples,
    history_csv,
    to_signed,
    train_first_discriminator,
    train_gan,
)
from gids.nn import build_discriminator, build_generator, save_weights

SMALL = dict(hidden=(32, 16), batch_size=16)


def test_to_signed():
    assert to_signed(np.array([0, 1])).tolist() == [-1.0, 1.0]


@pytest.mark.parametrize("bad", [dict(epochs=0), dict(batch_size=0), dict(d_steps_per_g_step=0),
                                 dict(label_smoothing=0.31), dict(label_smoothing=-0.1)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        TrainConfig(**bad)


def test_d1_separable_toy():
    zeros = np.zeros((40, 8, 48), np.uint8)
    ones = np.ones((40, 8, 48), np.uint8)
    losses = []
    d1 = train_first_discriminator(zeros, ones, TrainConfig(epochs=50, **SMALL),
                                   on_epoch=lambda e, loss: losses.append(loss))
    out = d1.predict(to_signed(np.concatenate([zeros, ones])).reshape(80, -1)).ravel()
    assert np.all(out[:40] >= 0.5) and np.all(out[40:] < 0.5)
    assert losses[-1] < losses[0]


def test_d1_deterministic():
    rng = np.random.default_rng(0)
    a, b = rng.random((20, 4, 48)) < 0.1, rng.random((20, 4, 48)) < 0.3
    cfg = TrainConfig(epochs=3, seed=5, **SMALL)
    assert train_first_discriminator(a, b, cfg) == train_first_discriminator(a, b, cfg)


def test_d1_errors():
    with pytest.raises(EmptyDataset):
        train_first_discriminator(np.zeros((0, 4, 48)), np.zeros((3, 4, 48)))
    with pytest.raises(ShapeMismatch):
        train_first_discriminator(np.zeros((3, 4, 48)), np.zeros((3, 5, 48)))


def test_generate_samples():
    g = build_generator((64, 48), seed=0)
    one = generate_samples(g, 1, seed=3)
    assert one.shape == (1, 64, 48)
    assert np.array_equal(one, generate_samples(g, 1, seed=3))
    ten = generate_samples(g, 10, seed=4).reshape(10, -1)
    assert len({row.tobytes() for row in ten}) == 10
    many = generate_samples(g, 100, seed=5)
    assert many.min() >= -1 and many.max() <= 1
    assert abs(many.mean()) < 0.1


def test_untrained_discriminator_is_uninformative():
    g = build_generator((64, 48), seed=1)
    d = build_discriminator(64 * 48, seed=2)
    rng = np.random.default_rng(0)
    real = to_signed(rng.random((64, 64 * 48)) < 1 / 16)
    fake = generate_samples(g, 64, seed=1).reshape(64, -1)
    for x in (real, fake):
        assert abs(d.predict(x).mean() - 0.5) <= 0.2


def _tiny_normal(n=48, rows=16, seed=0):
    rng = np.random.default_rng(seed)
    ids = rng.choice([0x316, 0x43F, 0x18F, 0x260], size=(n, rows))
    from gids.encoder import encode_ids
    return encode_ids(ids.ravel()).reshape(n, rows, 48)


def test_train_gan_history_and_determinism():
    x = _tiny_normal()
    cfg = TrainConfig(epochs=3, noise_dim=8, seed=2, **SMALL)
    a = train_gan(x, cfg)
    b = train_gan(x, cfg)
    assert a.g == b.g and a.d2 == b.d2
    assert [h.epoch for h in a.history] == [0, 1, 2]
    assert 0 <= a.best_epoch < 3
    for h in a.history:
        assert 0 <= h.d_real_mean <= 1 and 0 <= h.d_fake_mean <= 1
    csv = history_csv(a.history).splitlines()
    assert csv[0] == "epoch,d_loss,g_loss,d_real_mean,d_fake_mean" and len(csv) == 4
    g, d2, history = a
    assert g is a.g and history is a.history


def test_train_gan_empty():
    with pytest.raises(EmptyDataset):
        train_gan(np.zeros((0, 16, 48)))


def test_train_gan_raw_binary_shape():
    from gids.encoder import encode_ids
    x = encode_ids(np.arange(16 * 20) % 0x800, Mode.RAW_BINARY).reshape(20, 16, 11)
    res = train_gan(x, TrainConfig(epochs=1, noise_dim=8, **SMALL))
    assert res.g.output_shape == (1, 16, 11)


def _model(with_d1=True, rows=16):
    cfg = EncoderConfig(rows)
    n = rows * 48
    return TrainedGids(build_discriminator(n, (8,), seed=1), build_generator((rows, 48), 8, (8, 4), seed=2),
                       build_discriminator(n, (8,), seed=3) if with_d1 else None, cfg, 0.2)


@pytest.mark.parametrize("with_d1", [True, False])
def test_bundle_round_trip(with_d1):
    m = _model(with_d1)
    blob = m.save()
    back = TrainedGids.load(blob)
    assert back.d2 == m.d2 and back.g == m.g and back.d1 == m.d1
    assert back.encoder_cfg == m.encoder_cfg and back.detection_threshold == 0.2
    assert back.save() == blob


def test_bundle_errors():
    blob = _model().save()
    with pytest.raises(BadMagic):
        TrainedGids.load(b"X" + blob[1:])
    with pytest.raises(TruncatedStream):
        TrainedGids.load(blob[:-3])


def test_model_shape_checks():
    d2 = build_discriminator(16 * 48, (8,), seed=1)
    with pytest.raises(ShapeMismatch):
        TrainedGids(d2, encoder_cfg=EncoderConfig(8))
    with pytest.raises(ShapeMismatch):
        TrainedGids(d2, build_generator((8, 48), 8, (8, 4)), encoder_cfg=EncoderConfig(16))
    with pytest.raises(ValueError):
        TrainedGids(d2, encoder_cfg=EncoderConfig(16), detection_threshold=1.5)


def test_weight_blob_is_plain_weight_file():
    m = _model(False)
    assert save_weights(m.d2) in m.save()

