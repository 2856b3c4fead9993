"""Turn windows of CAN IDs into binary "CAN images".

In one-hot mode every frame becomes a 48-pixel row: the three hex nibbles of
the 11-bit ID, most significant first, each one-hot encoded into 16 columns
with the hot column equal to the nibble value.  Raw-binary mode writes the
11 ID bits instead (the ablation baseline).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .can import MAX_STD_ID, CanLog
from .errors import IdOutOfRange, MalformedLine

NIBBLES = 3
ONE_HOT_WIDTH = 16 * NIBBLES
RAW_WIDTH = 11


class Mode(enum.Enum):
    ONE_HOT = "onehot"
    RAW_BINARY = "raw"


class ImageLabel(enum.Enum):
    NORMAL = "Normal"
    ABNORMAL = "Abnormal"


@dataclass(frozen=True)
class EncoderConfig:
    input_size: int = 64
    stride: int | None = None
    mode: Mode = Mode.ONE_HOT

    def __post_init__(self):
        if self.input_size < 1:
            raise ValueError("input_size must be >= 1")
        if self.stride is None:
            object.__setattr__(self, "stride", self.input_size)
        if not 1 <= self.stride <= self.input_size:
            raise ValueError("stride must lie in [1, input_size]")

    @property
    def width(self) -> int:
        return ONE_HOT_WIDTH if self.mode is Mode.ONE_HOT else RAW_WIDTH

    @property
    def shape(self) -> tuple[int, int]:
        return (self.input_size, self.width)

    def n_images(self, n_frames: int) -> int:
        if n_frames < self.input_size:
            return 0
        return (n_frames - self.input_size) // self.stride + 1


@dataclass
class CanImage:
    pixels: np.ndarray  # uint8, (input_size, width)
    label: ImageLabel
    frame_span: range

    @property
    def abnormal(self) -> bool:
        return self.label is ImageLabel.ABNORMAL


def encode_digit(d: int) -> np.ndarray:
    v = np.zeros(16, dtype=np.uint8)
    v[d] = 1
    return v


def _check_ids(ids: np.ndarray) -> None:
    bad = (ids < 0) | (ids > MAX_STD_ID)
    if bad.any():
        raise IdOutOfRange(int(ids[np.argmax(bad)]))


def encode_ids(ids, mode: Mode = Mode.ONE_HOT) -> np.ndarray:
    """Encode a 1-D array of IDs into one row each."""
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    _check_ids(ids)
    n = ids.shape[0]
    if mode is Mode.ONE_HOT:
        out = np.zeros((n, ONE_HOT_WIDTH), dtype=np.uint8)
        rows = np.arange(n)
        for k in range(NIBBLES):
            nib = (ids >> (4 * (NIBBLES - 1 - k))) & 0xF
            out[rows, 16 * k + nib] = 1
        return out
    shifts = np.arange(RAW_WIDTH - 1, -1, -1)
    return ((ids[:, None] >> shifts) & 1).astype(np.uint8)


def encode_id(can_id: int) -> np.ndarray:
    if not 0 <= can_id <= MAX_STD_ID:
        raise IdOutOfRange(can_id)
    return encode_ids([can_id])[0]


def decode_rows(rows: np.ndarray, mode: Mode = Mode.ONE_HOT) -> np.ndarray:
    """Inverse of :func:`encode_ids` for well-formed rows."""
    rows = np.asarray(rows)
    if mode is Mode.ONE_HOT:
        nibs = [np.argmax(rows[:, 16 * k:16 * (k + 1)], axis=1) for k in range(NIBBLES)]
        return (nibs[0] << 8) | (nibs[1] << 4) | nibs[2]
    weights = 1 << np.arange(RAW_WIDTH - 1, -1, -1)
    return rows.astype(np.int64) @ weights


def decode_id(row: np.ndarray) -> int:
    return int(decode_rows(np.asarray(row)[None, :])[0])


def window_starts(n_frames: int, cfg: EncoderConfig) -> np.ndarray:
    return np.arange(cfg.n_images(n_frames)) * cfg.stride


def encode_arrays(ids: np.ndarray, injected: np.ndarray | None, cfg: EncoderConfig):
    """Vectorised core: return ``(pixels[n_img, rows, cols], abnormal[n_img])``."""
    ids = np.asarray(ids, dtype=np.int64)
    rows = encode_ids(ids, cfg.mode)
    starts = window_starts(len(ids), cfg)
    if cfg.stride == cfg.input_size:
        pixels = rows[: len(starts) * cfg.input_size].reshape(len(starts), cfg.input_size, cfg.width)
    else:
        idx = starts[:, None] + np.arange(cfg.input_size)[None, :]
        pixels = rows[idx]
    if injected is None:
        abnormal = np.zeros(len(starts), dtype=bool)
    else:
        # window is abnormal iff it holds at least one injected frame
        csum = np.concatenate([[0], np.cumsum(np.asarray(injected, dtype=np.int64))])
        abnormal = (csum[starts + cfg.input_size] - csum[starts]) > 0
    return pixels, abnormal


def build_images(log: CanLog, cfg: EncoderConfig | None = None) -> list[CanImage]:
    cfg = cfg or EncoderConfig()
    pixels, abnormal = encode_arrays(log.id_array(), log.injected_array(), cfg)
    return [
        CanImage(
            pixels[k],
            ImageLabel.ABNORMAL if abnormal[k] else ImageLabel.NORMAL,
            range(k * cfg.stride, k * cfg.stride + cfg.input_size),
        )
        for k in range(len(pixels))
    ]


def stack(images: Iterable[CanImage]) -> tuple[np.ndarray, np.ndarray]:
    """Stack images into ``(pixels[n, rows, cols], abnormal[n])`` arrays."""
    images = list(images)
    if not images:
        return np.zeros((0, 0, 0), dtype=np.uint8), np.zeros(0, dtype=bool)
    return np.stack([im.pixels for im in images]), np.array([im.abnormal for im in images])


def dump_images(images: Iterable[CanImage], sink: TextIO) -> None:
    """Text dump: ``label rows cols`` header then one line of 0/1 per row."""
    for im in images:
        r, c = im.pixels.shape
        sink.write(f"{im.label.value} {r} {c}\n")
        for row in im.pixels:
            sink.write("".join("1" if v else "0" for v in row) + "\n")


def load_images(stream: Iterable[str]) -> list[tuple[ImageLabel, np.ndarray]]:
    lines = iter(stream)
    out = []
    for header in lines:
        if not header.strip():
            continue
        parts = header.split()
        if len(parts) != 3:
            raise MalformedLine(f"bad image header {header.strip()!r}")
        label, r, c = ImageLabel(parts[0]), int(parts[1]), int(parts[2])
        rows = []
        for _ in range(r):
            row = next(lines, None)
            if row is None:
                raise MalformedLine("image dump ended mid-image")
            row = row.strip()
            if len(row) != c or set(row) - {"0", "1"}:
                raise MalformedLine(f"bad image row {row!r}")
            rows.append([ch == "1" for ch in row])
        out.append((label, np.array(rows, dtype=np.uint8).reshape(r, c)))
    return out
