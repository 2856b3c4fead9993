import numpy as np
import pytest

from gids.encoder import EncoderConfig
from gids.errors import EmptyDataset
from gids.gan import TrainConfig, train_gan
from gids.pipeline import (
    attack_log,
    evaluate_network,
    evaluate_scores,
    input_size_sweep,
    mean_accuracy,
    synthetic_corpus,
)
from gids.synth import default_profile, gen_normal_traffic


def test_attack_log_bursts():
    base = gen_normal_traffic(default_profile(2), 3.0)
    log = attack_log(base, "gear", seed=1, bursts=((0.1, 0.2), (0.5, 0.6)))
    injected = [f for f in log if f.injected]
    assert {f.can_id for f in injected} == {0x43F}
    span = (base.frames[-1].ts_us - base.frames[0].ts_us) / 1e6
    assert abs(len(injected) - 2 * 0.1 * span * 1000) <= 2
    with pytest.raises(ValueError):
        attack_log(base, "smurf")


def test_corpus_layout():
    c = synthetic_corpus(EncoderConfig(32), seed=3, train_s=6, test_s=3, d1_attack="dos", d1_s=3)
    assert c.train.shape[1:] == (32, 48)
    assert set(c.tests) == {"dos", "fuzzy", "rpm", "gear"}
    for px, ab in c.tests.values():
        assert 0 < ab.sum() < len(ab)
    normal, attack = c.d1_train
    assert len(attack) > 0 and len(normal) > len(c.train)
    # segments follow each other in time and never overlap
    ends = [(log.frames[0].ts_us, log.frames[-1].ts_us) for log in c.logs.values()]
    assert all(a[1] < b[0] for a, b in zip(ends, ends[1:]))


def test_corpus_is_deterministic():
    a = synthetic_corpus(EncoderConfig(16), seed=5, train_s=2, test_s=2, attacks=("fuzzy",))
    b = synthetic_corpus(EncoderConfig(16), seed=5, train_s=2, test_s=2, attacks=("fuzzy",))
    assert np.array_equal(a.train, b.train) and np.array_equal(a.tests["fuzzy"][0], b.tests["fuzzy"][0])


def test_corpus_too_short():
    with pytest.raises(EmptyDataset):
        synthetic_corpus(EncoderConfig(64), train_s=0.01, test_s=2)


def test_evaluate_scores():
    r = evaluate_scores(np.array([0.05, 0.5, 0.01, 0.9]), np.array([True, True, False, False]), 0.1, "x")
    assert (r.tp, r.fn, r.fp, r.tn) == (1, 1, 1, 1)
    assert r.auc == 0.5
    assert evaluate_scores(np.array([0.5]), np.array([False])).auc is None


def test_sweep_single_size_matches_direct_run():
    cfg = TrainConfig(epochs=1, noise_dim=8, seed=4)
    (row,) = input_size_sweep([16], cfg, seed=2, train_s=4, test_s=3)
    corpus = synthetic_corpus(EncoderConfig(16), seed=2, train_s=4, test_s=3)
    direct = mean_accuracy(evaluate_network(train_gan(corpus.train, cfg).d2, corpus))
    assert row.input_size == 16 and row.accuracy == direct


def test_sweep_rejects_bad_sizes():
    with pytest.raises(ValueError):
        input_size_sweep([], TrainConfig())
    with pytest.raises(ValueError):
        input_size_sweep([0], TrainConfig())
