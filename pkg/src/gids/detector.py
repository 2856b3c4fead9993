"""Two-stage detection cascade and streaming detection.

A window is first scored by D1 (known attacks).  A score below the D1
threshold is an anomaly and D2 is never run.  Otherwise D2 (unknown attacks)
scores the window and a score below its threshold is an anomaly.
"""

from __future__ import annotations

import csv
import enum
import math
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, TextIO

import numpy as np

from .can import CanFrame, CanLog, format_timestamp
from .encoder import encode_arrays
from .errors import ShapeMismatch, SinkFailure
from .gan import TrainedGids, to_signed

Scorer = Callable[[np.ndarray], np.ndarray]


class Decision(enum.Enum):
    NORMAL = "Normal"
    ANOMALY = "Anomaly"


class Stage(enum.Enum):
    FIRST = "FirstDiscriminator"
    SECOND = "SecondDiscriminator"
    NONE = "None"


@dataclass(frozen=True)
class Verdict:
    image_index: int
    d1_score: float | None
    d2_score: float | None
    decision: Decision
    stage: Stage

    @property
    def anomaly(self) -> bool:
        return self.decision is Decision.ANOMALY


class CountingScorer:
    """Wrap a network so that every image it scores is counted."""

    def __init__(self, net):
        self.net = net
        self.calls = 0
        self.images = 0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        self.calls += 1
        self.images += len(x)
        return self.net.predict(x).reshape(-1).astype(np.float64)


def _check_threshold(t: float) -> float:
    t = float(t)
    if not 0.0 < t < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {t}")
    return t


def decide(d1_score: float | None, d2_score: Callable[[], float], t1: float, t2: float,
           index: int = 0) -> Verdict:
    """Scalar cascade.  ``d2_score`` is a thunk so it can be skipped."""
    if d1_score is not None and d1_score < t1:
        return Verdict(index, d1_score, None, Decision.ANOMALY, Stage.FIRST)
    s2 = float(d2_score())
    if s2 < t2:
        return Verdict(index, d1_score, s2, Decision.ANOMALY, Stage.SECOND)
    return Verdict(index, d1_score, s2, Decision.NORMAL, Stage.NONE)


def run_cascade(x: np.ndarray, d1: Scorer | None, d2: Scorer, t1: float, t2: float):
    """Batched cascade on model inputs ``x``.

    Returns ``(d1_scores, d2_scores, stage)``: scores are NaN where a stage did
    not run and ``stage`` holds 0 (none), 1 (D1 fired) or 2 (D2 fired).  D2
    only ever sees the rows D1 let through.
    """
    n = len(x)
    s1 = np.full(n, np.nan)
    s2 = np.full(n, np.nan)
    stage = np.zeros(n, dtype=np.int8)
    passed = np.ones(n, dtype=bool)
    if d1 is not None and n:
        s1 = np.asarray(d1(x), dtype=np.float64)
        passed = s1 >= t1
        stage[~passed] = 1
    if passed.any():
        s2[passed] = d2(x[passed])
        stage[passed & (s2 < t2)] = 2
    return s1, s2, stage


_STAGES = (Stage.NONE, Stage.FIRST, Stage.SECOND)


def _verdicts(s1, s2, stage, offset: int = 0) -> list[Verdict]:
    out = []
    for k in range(len(stage)):
        a = None if math.isnan(s1[k]) else float(s1[k])
        b = None if math.isnan(s2[k]) else float(s2[k])
        st = _STAGES[stage[k]]
        out.append(Verdict(offset + k, a, b, Decision.NORMAL if st is Stage.NONE else Decision.ANOMALY, st))
    return out


def _thresholds(model: TrainedGids, threshold, d2_threshold) -> tuple[float, float]:
    t1 = _check_threshold(model.detection_threshold if threshold is None else threshold)
    t2 = _check_threshold(t1 if d2_threshold is None else d2_threshold)
    return t1, t2


def _model_input(pixels: np.ndarray, model: TrainedGids) -> np.ndarray:
    n_in = model.d2.input_shape[0]
    pixels = np.asarray(pixels)
    if pixels.ndim < 2 or int(np.prod(pixels.shape[1:])) != n_in:
        raise ShapeMismatch(f"images of shape {pixels.shape[1:]} do not fit a model expecting {n_in} inputs")
    return to_signed(pixels.reshape(len(pixels), n_in))


def classify_batch(pixels: np.ndarray, model: TrainedGids, threshold: float | None = None,
                   d2_threshold: float | None = None, counters=None) -> list[Verdict]:
    """Cascade over a stack of images ``pixels[n, rows, cols]``."""
    t1, t2 = _thresholds(model, threshold, d2_threshold)
    x = _model_input(pixels, model)
    if counters is None:
        counters = (CountingScorer(model.d1) if model.d1 is not None else None, CountingScorer(model.d2))
    return _verdicts(*run_cascade(x, counters[0], counters[1], t1, t2))


def classify(image, model: TrainedGids, threshold: float | None = None,
             d2_threshold: float | None = None) -> Verdict:
    """Cascade verdict for one image (pixels or a :class:`CanImage`)."""
    pixels = np.asarray(getattr(image, "pixels", image))
    if pixels.shape != model.encoder_cfg.shape:
        raise ShapeMismatch(f"image shape {pixels.shape} != model image shape {model.encoder_cfg.shape}")
    return classify_batch(pixels[None], model, threshold, d2_threshold)[0]


@dataclass
class StreamStats:
    frames: int
    windows: int
    elapsed_s: float
    d1_images: int = 0
    d2_images: int = 0

    @property
    def frames_per_s(self) -> float:
        return self.frames / self.elapsed_s if self.elapsed_s > 0 else float("inf")


@dataclass
class StreamResult:
    verdicts: list[Verdict]
    first_frame_ts: np.ndarray
    abnormal: np.ndarray
    stats: StreamStats


def _arrays(frames) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(frames, CanLog):
        return frames.id_array(), frames.injected_array(), frames.ts_array()
    frames = list(frames)
    ids = np.fromiter((f.can_id for f in frames), dtype=np.int64, count=len(frames))
    inj = np.fromiter((f.injected for f in frames), dtype=bool, count=len(frames))
    ts = np.fromiter((f.ts_us for f in frames), dtype=np.int64, count=len(frames))
    return ids, inj, ts


# 32 windows of 64 IDs is about one second of traffic on a typical bus
STREAM_CHUNK = 32


def detect_stream(frames: CanLog | Iterable[CanFrame], model: TrainedGids, threshold: float | None = None,
                  d2_threshold: float | None = None, chunk: int = STREAM_CHUNK) -> StreamResult:
    """Encode ``frames`` into windows and run the cascade on every complete window.

    Windows are scored in fixed micro-batches of ``chunk`` images, so cost
    grows in proportion to the stream length and no window waits for more
    than one chunk.  Larger chunks raise throughput on long streams (BLAS is
    more efficient on big batches) at the price of latency and of a per-frame
    cost that depends on stream length.  Elapsed time covers encoding and
    both discriminators.  Trailing frames that do not fill a window are left
    undecided.
    """
    if chunk < 1:
        raise ValueError("chunk must be >= 1")
    t1, t2 = _thresholds(model, threshold, d2_threshold)
    start = time.perf_counter()
    ids, injected, ts = _arrays(frames)
    cfg = model.encoder_cfg
    pixels, abnormal = encode_arrays(ids, injected, cfg)
    d1 = CountingScorer(model.d1) if model.d1 is not None else None
    d2 = CountingScorer(model.d2)
    verdicts: list[Verdict] = []
    for lo in range(0, len(pixels), chunk):
        x = _model_input(pixels[lo:lo + chunk], model)
        verdicts.extend(_verdicts(*run_cascade(x, d1, d2, t1, t2), offset=lo))
    elapsed = time.perf_counter() - start
    first_ts = ts[np.arange(len(pixels)) * cfg.stride] if len(pixels) else np.zeros(0, dtype=np.int64)
    stats = StreamStats(len(ids), len(verdicts), elapsed, d1.images if d1 else 0, d2.images)
    return StreamResult(verdicts, first_ts, abnormal, stats)


def write_verdicts(verdicts: Sequence[Verdict], sink: TextIO, first_frame_ts: Sequence[int] | None = None) -> None:
    """CSV ``image_index,first_frame_ts,d1_score,d2_score,stage,decision``; skipped stages are empty."""

    def score(v):
        return "" if v is None else f"{v:.6f}"

    try:
        w = csv.writer(sink, lineterminator="\n")
        w.writerow(["image_index", "first_frame_ts", "d1_score", "d2_score", "stage", "decision"])
        for k, v in enumerate(verdicts):
            ts = "" if first_frame_ts is None else format_timestamp(int(first_frame_ts[k]))
            w.writerow([v.image_index, ts, score(v.d1_score), score(v.d2_score), v.stage.value, v.decision.value])
    except OSError as exc:
        raise SinkFailure(str(exc)) from exc
