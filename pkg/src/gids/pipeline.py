"""Synthetic corpus construction and end-to-end evaluation.

The corpus is one long normal capture cut in time: the first part trains
the models, every later segment receives bursts of one attack and is used
for testing.  Training and test windows therefore never overlap, but they
come from the same simulated vehicle, which mirrors how a deployed detector
is trained on earlier traffic from the car it protects.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .can import CanLog
from .encoder import EncoderConfig, encode_arrays
from .errors import EmptyDataset
from .gan import DETECTION_THRESHOLD, TrainConfig, TrainedGids, to_signed, train_first_discriminator, train_gan
from .metrics import EvalReport, SweepRow, confusion, roc_auc
from .synth import ATTACK_ALIASES, AttackSpec, default_profile, gen_normal_traffic, inject_attack

ATTACK_NAMES = ("dos", "fuzzy", "rpm", "gear")
# attack bursts as fractions of a test segment
DEFAULT_BURSTS = ((5 / 30, 8 / 30), (15 / 30, 18 / 30), (24 / 30, 27 / 30))


def attack_log(base: CanLog, name: str, seed: int = 0, bursts=DEFAULT_BURSTS,
               period_ms: float | None = None) -> CanLog:
    """Inject bursts of attack ``name`` (dos, fuzzy, rpm, gear) into ``base``."""
    if name not in ATTACK_ALIASES:
        raise ValueError(f"unknown attack {name!r}")
    kind, target = ATTACK_ALIASES[name]
    span = (base.frames[-1].ts_us - base.frames[0].ts_us) / 1e6 if base.frames else 0.0
    log = base
    for k, (a, b) in enumerate(bursts):
        log = inject_attack(log, AttackSpec(kind, a * span, b * span, period_ms, target, seed=seed + k))
    return log


def _segment(log: CanLog, ts: np.ndarray, a_us: float, b_us: float) -> CanLog:
    i, j = np.searchsorted(ts, [a_us, b_us])
    return CanLog(log.frames[i:j], source=log.source)


@dataclass
class Corpus:
    cfg: EncoderConfig
    train: np.ndarray
    tests: dict[str, tuple[np.ndarray, np.ndarray]]
    d1_train: tuple[np.ndarray, np.ndarray] | None = None
    logs: dict[str, CanLog] = field(default_factory=dict, repr=False)


def synthetic_corpus(cfg: EncoderConfig | None = None, seed: int = 1, train_s: float = 120.0,
                     test_s: float = 30.0, attacks=ATTACK_NAMES, d1_attack: str | None = None,
                     d1_s: float = 60.0, jitter: float = 0.1) -> Corpus:
    """Build training and per-attack test images from one simulated capture.

    Layout in time: ``train_s`` of normal traffic, then (if ``d1_attack`` is
    set) ``d1_s`` of traffic with that attack for training D1, then one
    ``test_s`` segment per attack in ``attacks``.
    """
    cfg = cfg or EncoderConfig()
    total = train_s + (d1_s if d1_attack else 0.0) + test_s * len(attacks)
    full = gen_normal_traffic(default_profile(seed, jitter), total)
    ts = full.ts_array()
    logs = {"train": _segment(full, ts, 0, train_s * 1e6)}
    t = train_s
    if d1_attack:
        logs["d1"] = attack_log(_segment(full, ts, t * 1e6, (t + d1_s) * 1e6), d1_attack, seed=1000 + seed)
        t += d1_s
    for i, name in enumerate(attacks):
        base = _segment(full, ts, t * 1e6, (t + test_s) * 1e6)
        logs[name] = attack_log(base, name, seed=100 * (i + 1) + seed)
        t += test_s

    def enc(log):
        return encode_arrays(log.id_array(), log.injected_array(), cfg)

    train, _ = enc(logs["train"])
    if len(train) == 0:
        raise EmptyDataset("training segment is shorter than one window")
    tests = {name: enc(logs[name]) for name in attacks}
    d1_train = None
    if d1_attack:
        px, ab = enc(logs["d1"])
        d1_train = (np.concatenate([train, px[~ab]]), px[ab])
    return Corpus(cfg, train, tests, d1_train, logs)


def scores(net, pixels: np.ndarray) -> np.ndarray:
    """Raw discriminator outputs for a stack of binary images."""
    if len(pixels) == 0:
        return np.zeros(0)
    return net.predict(to_signed(pixels).reshape(len(pixels), -1)).reshape(-1).astype(np.float64)


def evaluate_scores(s: np.ndarray, abnormal: np.ndarray, threshold: float = DETECTION_THRESHOLD,
                    name: str = "") -> EvalReport:
    """Anomaly when the score falls below ``threshold``; AUC on ``1 - score``."""
    abnormal = np.asarray(abnormal, dtype=bool)
    auc = roc_auc(1.0 - s, abnormal) if 0 < abnormal.sum() < len(abnormal) else None
    return confusion(s < threshold, abnormal, auc, name)


def evaluate_network(net, corpus: Corpus, threshold: float = DETECTION_THRESHOLD) -> list[EvalReport]:
    return [evaluate_scores(scores(net, px), ab, threshold, name) for name, (px, ab) in corpus.tests.items()]


def evaluate_cascade(model: TrainedGids, corpus: Corpus, threshold: float | None = None,
                     d2_threshold: float | None = None) -> list[EvalReport]:
    """Cascade verdicts per attack; AUC uses the D2 score alone."""
    from .detector import classify_batch

    reports = []
    for name, (px, ab) in corpus.tests.items():
        verdicts = classify_batch(px, model, threshold, d2_threshold)
        s2 = scores(model.d2, px)
        auc = roc_auc(1.0 - s2, ab) if 0 < ab.sum() < len(ab) else None
        reports.append(confusion(verdicts, ab, auc, name))
    return reports


def train_d1_on(corpus: Corpus, cfg: TrainConfig):
    if corpus.d1_train is None:
        raise EmptyDataset("corpus was built without a D1 training segment")
    return train_first_discriminator(*corpus.d1_train, cfg)


def mean_accuracy(reports: list[EvalReport]) -> float:
    return float(np.mean([r.accuracy for r in reports])) if reports else 0.0


def input_size_sweep(sizes, train_cfg: TrainConfig, seed: int = 1, train_s: float = 120.0,
                     test_s: float = 30.0, threshold: float = DETECTION_THRESHOLD,
                     attacks=ATTACK_NAMES, cfg_base: EncoderConfig | None = None) -> list[SweepRow]:
    """Train D2 per window size on the same capture; mean accuracy over attacks."""
    sizes = [int(s) for s in sizes]
    if not sizes or min(sizes) < 1:
        raise ValueError("sizes must be a non-empty list of positive integers")
    mode = cfg_base.mode if cfg_base is not None else EncoderConfig().mode
    rows = []
    for size in sizes:
        corpus = synthetic_corpus(EncoderConfig(size, mode=mode), seed, train_s, test_s, attacks)
        result = train_gan(corpus.train, train_cfg, threshold)
        reports = evaluate_network(result.d2, corpus, threshold)
        aucs = [r.auc for r in reports if r.auc is not None]
        rows.append(SweepRow(size, mean_accuracy(reports), float(np.mean(aucs)) if aucs else None,
                             {"best_epoch": result.best_epoch}))
    return rows
