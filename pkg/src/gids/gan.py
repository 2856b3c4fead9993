"""Training for the two discriminators.

D1 is an ordinary supervised classifier (normal = 1, attack = 0).  D2 is the
discriminator half of a GAN trained on normal images only; the generator is
a by-product that exists to give D2 something other than normal traffic to
reject.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .encoder import EncoderConfig, Mode
from .errors import BadMagic, DivergenceDetected, EmptyDataset, ShapeHeaderMismatch, ShapeMismatch, TruncatedStream
from .nn import AdamState, Network, adam_step, bce_loss, build_discriminator, build_generator
from .nn.serialize import load_weights, save_weights

log = logging.getLogger(__name__)

DETECTION_THRESHOLD = 0.1


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    seed: int = 0
    lr: float = 2e-4
    g_lr: float | None = None
    beta1: float = 0.5
    beta2: float = 0.999
    d_steps_per_g_step: int = 1
    label_smoothing: float = 0.1
    noise_dim: int = 100
    hidden: tuple[int, ...] = (1024, 512)
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.d_steps_per_g_step < 1:
            raise ValueError("epochs, batch_size and d_steps_per_g_step must all be >= 1")
        if not 0.0 <= self.label_smoothing <= 0.3:
            raise ValueError("label_smoothing must lie in [0, 0.3]")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")
        self.hidden = tuple(int(h) for h in self.hidden)

    def adam(self, params) -> AdamState:
        return AdamState.for_params(params, lr=self.lr, beta1=self.beta1, beta2=self.beta2)


def to_signed(pixels) -> np.ndarray:
    """Map binary pixels to the generator's range: 0 -> -1, 1 -> +1."""
    return np.asarray(pixels, dtype=np.float32) * 2.0 - 1.0


def _as_pixels(images) -> np.ndarray:
    if isinstance(images, np.ndarray):
        arr = images
    else:
        images = list(images)
        if not images:
            return np.zeros((0, 0, 0), dtype=np.uint8)
        arr = np.stack([getattr(im, "pixels", im) for im in images])
    if arr.ndim == 2:
        arr = arr[None]
    return arr


def _flat(x: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[0], -1)


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _d_update(d: Network, opt: AdamState, x: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    out, caches = d.forward(x)
    loss, grad = bce_loss(out, target.reshape(out.shape))
    _, grads = d.backward(caches, grad, need_input_grad=False)
    adam_step(d.params(), grads, opt)
    return loss, out.reshape(-1)


def _d_grads(d: Network, x: np.ndarray, target: float):
    out, caches = d.forward(x)
    loss, grad = bce_loss(out, np.full(out.shape, target))
    _, grads = d.backward(caches, grad, need_input_grad=False)
    return loss, out.reshape(-1), grads


def train_first_discriminator(normal, attack, cfg: TrainConfig | None = None,
                              on_epoch: Callable[[int, float], None] | None = None) -> Network:
    """Supervised D1: BCE with target 1 for normal images and 0 for attack images."""
    cfg = cfg or TrainConfig()
    normal, attack = _as_pixels(normal), _as_pixels(attack)
    if len(normal) == 0 or len(attack) == 0:
        raise EmptyDataset("D1 needs both normal and attack images")
    if normal.shape[1:] != attack.shape[1:]:
        raise ShapeMismatch(f"normal images {normal.shape[1:]} vs attack images {attack.shape[1:]}")

    x = _flat(to_signed(np.concatenate([normal, attack])))
    y = np.concatenate([np.ones(len(normal)), np.zeros(len(attack))]).astype(np.float32)
    rng = np.random.default_rng(cfg.seed)
    d = build_discriminator(x.shape[1], cfg.hidden, seed=int(rng.integers(2**31)))
    opt = cfg.adam(d.params())
    for epoch in range(cfg.epochs):
        losses = []
        for idx in _batches(len(x), cfg.batch_size, rng):
            loss, _ = _d_update(d, opt, x[idx], y[idx])
            losses.append(loss * len(idx))
        mean_loss = float(np.sum(losses) / len(x))
        log.debug("d1 epoch %d loss %.5f", epoch, mean_loss)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss)
    return d


def generate_samples(g: Network, n: int, seed: int = 0, image_shape=None) -> np.ndarray:
    """Draw ``n`` images from ``g`` with standard-normal noise; values lie in [-1, 1]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    z = np.random.default_rng(seed).standard_normal((n, *g.input_shape)).astype(np.float32)
    out = g.predict(z)
    shape = image_shape or out.shape[2:]
    return out.reshape(n, *shape)


@dataclass
class EpochStats:
    epoch: int
    d_loss: float
    g_loss: float
    d_real_mean: float
    d_fake_mean: float
    separation: float = float("nan")
    margin: float = float("nan")


@dataclass
class GanResult:
    g: Network
    d2: Network
    history: list[EpochStats]
    best_epoch: int

    def __iter__(self):
        return iter((self.g, self.d2, self.history))


def history_csv(history: list[EpochStats]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["epoch", "d_loss", "g_loss", "d_real_mean", "d_fake_mean"])
    for h in history:
        w.writerow([h.epoch, f"{h.d_loss:.6f}", f"{h.g_loss:.6f}", f"{h.d_real_mean:.6f}", f"{h.d_fake_mean:.6f}"])
    return out.getvalue()


def _logit(p: np.ndarray) -> np.ndarray:
    p = np.clip(np.asarray(p, dtype=np.float64), 1e-7, 1 - 1e-7)
    return np.log(p) - np.log1p(-p)


def separation_score(d2: Network, g: Network, val_real: np.ndarray, z_val: np.ndarray,
                     threshold: float = DETECTION_THRESHOLD) -> tuple[float, float]:
    """Checkpoint criterion on a validation split, returned as ``(count, margin)``.

    ``count`` is the fraction of held-out normal images scored at or above
    ``threshold`` plus the fraction of generated images scored below it (2.0
    is perfect).  ``margin`` measures how far both populations sit from the
    threshold in log-odds: the smaller of ``logit(q05(normal)) - logit(t)``
    and ``logit(t) - logit(q95(fake))``.  Unlike ``count`` it does not
    saturate, so it is what checkpoint selection ranks by.
    """
    real = d2.predict(val_real).reshape(-1)
    fake = d2.predict(g.predict(z_val)).reshape(-1)
    count = float(np.mean(real >= threshold) + np.mean(fake < threshold))
    t = _logit(threshold)
    margin = float(min(np.quantile(_logit(real), 0.05) - t, t - np.quantile(_logit(fake), 0.95)))
    return count, margin


def train_gan(normal, cfg: TrainConfig | None = None, threshold: float = DETECTION_THRESHOLD,
              on_epoch: Callable[[EpochStats, Network, Network], None] | None = None) -> GanResult:
    """Adversarial training of the generator and D2 on normal images only.

    Per batch: ``d_steps_per_g_step`` D2 updates on a real batch (target
    ``1 - label_smoothing``) and a fresh fake batch (target 0), then one
    generator update with the non-saturating loss ``-log D(G(z))``.  The
    returned pair is the checkpoint with the largest :func:`separation_score`
    margin.
    """
    cfg = cfg or TrainConfig()
    pixels = _as_pixels(normal)
    if len(pixels) == 0:
        raise EmptyDataset("GAN training needs normal images")
    image_shape = pixels.shape[1:]
    rng = np.random.default_rng(cfg.seed)
    data = _flat(to_signed(pixels))
    perm = rng.permutation(len(data))
    n_val = int(round(len(data) * cfg.val_fraction))
    if n_val and len(data) - n_val >= 1:
        val, train = data[perm[:n_val]], data[perm[n_val:]]
    else:
        val, train = data, data

    g = build_generator(image_shape, cfg.noise_dim, seed=int(rng.integers(2**31)))
    d = build_discriminator(data.shape[1], cfg.hidden, seed=int(rng.integers(2**31)))
    g_opt, d_opt = cfg.adam(g.params()), cfg.adam(d.params())
    if cfg.g_lr is not None:
        g_opt.lr = cfg.g_lr
    z_val = rng.standard_normal((max(len(val), 64), cfg.noise_dim)).astype(np.float32)
    real_target = 1.0 - cfg.label_smoothing

    history: list[EpochStats] = []
    best = (-np.inf, -1, None)
    low_real = 0
    for epoch in range(cfg.epochs):
        sums = np.zeros(4)
        count = 0
        for idx in _batches(len(train), cfg.batch_size, rng):
            real = train[idx]
            b = len(idx)
            for _ in range(cfg.d_steps_per_g_step):
                z = rng.standard_normal((b, cfg.noise_dim)).astype(np.float32)
                fake, g_caches = g.forward(z)
                loss_r, d_real, grads_r = _d_grads(d, real, real_target)
                loss_f, d_fake, grads_f = _d_grads(d, fake, 0.0)
                adam_step(d.params(), [a + c for a, c in zip(grads_r, grads_f)], d_opt)
            # generator step reuses the last fake batch against the updated D2
            out, d_caches = d.forward(fake)
            g_loss, grad = bce_loss(out, np.ones_like(out))
            dx, _ = d.backward(d_caches, grad)
            _, g_grads = g.backward(g_caches, dx.reshape(fake.shape))
            adam_step(g.params(), g_grads, g_opt)

            sums += np.array([(loss_r + loss_f) * b, g_loss * b, d_real.sum(), d_fake.sum()])
            count += b
        stats = EpochStats(epoch, *(sums / count))
        stats.separation, stats.margin = separation_score(d, g, val, z_val, threshold)
        history.append(stats)
        log.info("gan epoch %d d_loss %.4f g_loss %.4f D(real) %.3f D(fake) %.3f sep %.3f margin %.2f",
                 epoch, stats.d_loss, stats.g_loss, stats.d_real_mean, stats.d_fake_mean,
                 stats.separation, stats.margin)
        if on_epoch is not None:
            on_epoch(stats, g, d)
        if best[2] is None or stats.margin > best[0]:
            best = (stats.margin, epoch, (g.copy(), d.copy()))

        low_real = low_real + 1 if stats.d_real_mean < 0.1 else 0
        if low_real >= 5:
            raise DivergenceDetected(epoch, history)

    _, best_epoch, (g_best, d_best) = best
    return GanResult(g_best, d_best, history, best_epoch)


@dataclass
class TrainedGids:
    d2: Network
    g: Network | None = None
    d1: Network | None = None
    encoder_cfg: EncoderConfig = field(default_factory=EncoderConfig)
    detection_threshold: float = DETECTION_THRESHOLD

    def __post_init__(self):
        if not 0.0 < self.detection_threshold < 1.0:
            raise ValueError("detection threshold must lie in (0, 1)")
        n_in = self.encoder_cfg.input_size * self.encoder_cfg.width
        if self.d2.input_shape != (n_in,):
            raise ShapeMismatch(f"D2 input {self.d2.input_shape} does not match encoder images ({n_in},)")
        if self.d1 is not None and self.d1.input_shape != (n_in,):
            raise ShapeMismatch(f"D1 input {self.d1.input_shape} does not match encoder images ({n_in},)")
        if self.g is not None and int(np.prod(self.g.output_shape)) != n_in:
            raise ShapeMismatch(f"generator output {self.g.output_shape} does not match D2 input")

    def save(self) -> bytes:
        """Bundle: magic, JSON header, then length-prefixed weight blobs (d2, g, d1)."""
        header = {
            "encoder": {"input_size": self.encoder_cfg.input_size, "stride": self.encoder_cfg.stride,
                        "mode": self.encoder_cfg.mode.value},
            "threshold": self.detection_threshold,
            "has_g": self.g is not None,
            "has_d1": self.d1 is not None,
        }
        head = json.dumps(header, sort_keys=True).encode()
        out = io.BytesIO()
        out.write(BUNDLE_MAGIC)
        out.write(struct.pack("<I", len(head)))
        out.write(head)
        for net in (self.d2, self.g, self.d1):
            if net is not None:
                blob = save_weights(net)
                out.write(struct.pack("<Q", len(blob)))
                out.write(blob)
        return out.getvalue()

    @classmethod
    def load(cls, data: bytes) -> "TrainedGids":
        if data[:len(BUNDLE_MAGIC)] != BUNDLE_MAGIC:
            raise BadMagic("not a GIDS model bundle")
        pos = len(BUNDLE_MAGIC)

        def take(n):
            nonlocal pos
            if pos + n > len(data):
                raise TruncatedStream("model bundle ends early")
            chunk = data[pos:pos + n]
            pos += n
            return chunk

        (hlen,) = struct.unpack("<I", take(4))
        try:
            header = json.loads(take(hlen))
            enc = EncoderConfig(header["encoder"]["input_size"], header["encoder"]["stride"],
                                Mode(header["encoder"]["mode"]))
        except (ValueError, KeyError) as exc:
            raise ShapeHeaderMismatch(f"bad bundle header: {exc}") from None
        nets = []
        for present in (True, header.get("has_g"), header.get("has_d1")):
            if present:
                (blen,) = struct.unpack("<Q", take(8))
                nets.append(load_weights(take(blen)))
            else:
                nets.append(None)
        if pos != len(data):
            raise ShapeHeaderMismatch("trailing bytes after model bundle")
        d2, g, d1 = nets
        return cls(d2, g, d1, enc, float(header["threshold"]))

    def save_file(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.save())

    @classmethod
    def load_file(cls, path) -> "TrainedGids":
        with open(path, "rb") as fh:
            return cls.load(fh.read())


BUNDLE_MAGIC = b"GIDSB1\n"


def config_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["hidden"] = list(cfg.hidden)
    return d
