"""CAN frame model and the comma-separated log format.

Canonical line grammar::

    timestamp,id_hex,dlc,b0,...,b{dlc-1},flag

with ``flag`` equal to ``R`` (normal) or ``T`` (injected).  Timestamps are
kept as integer microseconds so that a log survives a write/read cycle
byte-for-byte.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, TextIO

import numpy as np

from .errors import IdOutOfRange, MalformedLine, SinkFailure, UnsortedTimestamps

MAX_STD_ID = 0x7FF
MAX_DLC = 8

_TS_RE = re.compile(r"^(\d+)(?:\.(\d{1,6}))?$")
_HEX_RE = re.compile(r"^[0-9a-fA-F]+$")
_BYTE_RE = re.compile(r"^[0-9a-fA-F]{1,2}$")
# "Timestamp: 1479121434.850202  ID: 0350  000  DLC: 8  05 28 84 ..." (attack-free capture dump)
_DUMP_RE = re.compile(
    r"^Timestamp:\s*(\S+)\s+ID:\s*([0-9a-fA-F]+)\s+\S+\s+DLC:\s*(\d+)\s*(.*)$"
)


class Label(enum.Enum):
    NORMAL = "R"
    INJECTED = "T"


@dataclass(frozen=True)
class CanFrame:
    ts_us: int
    can_id: int
    data: bytes = b""
    label: Label = Label.NORMAL

    def __post_init__(self):
        if not 0 <= self.can_id <= MAX_STD_ID:
            raise IdOutOfRange(self.can_id)
        if len(self.data) > MAX_DLC:
            raise MalformedLine(f"payload of {len(self.data)} bytes exceeds DLC 8")
        if self.ts_us < 0:
            raise MalformedLine("negative timestamp")

    @property
    def dlc(self) -> int:
        return len(self.data)

    @property
    def timestamp(self) -> float:
        return self.ts_us / 1e6

    @property
    def injected(self) -> bool:
        return self.label is Label.INJECTED


@dataclass
class CanLog:
    frames: list[CanFrame] = field(default_factory=list)
    source: str = field(default="", compare=False)

    def __len__(self):
        return len(self.frames)

    def __iter__(self) -> Iterator[CanFrame]:
        return iter(self.frames)

    def id_array(self) -> np.ndarray:
        return np.fromiter((f.can_id for f in self.frames), dtype=np.int64, count=len(self.frames))

    def injected_array(self) -> np.ndarray:
        return np.fromiter((f.injected for f in self.frames), dtype=bool, count=len(self.frames))

    def ts_array(self) -> np.ndarray:
        return np.fromiter((f.ts_us for f in self.frames), dtype=np.int64, count=len(self.frames))

    def is_sorted(self) -> bool:
        ts = self.ts_array()
        return bool(np.all(ts[1:] >= ts[:-1]))


def parse_timestamp(text: str) -> int:
    """Parse ``seconds[.fraction]`` into integer microseconds without float rounding."""
    m = _TS_RE.match(text)
    if m is None:
        raise MalformedLine(f"bad timestamp {text!r}")
    whole, frac = m.group(1), m.group(2) or ""
    return int(whole) * 1_000_000 + int(frac.ljust(6, "0"))


def format_timestamp(ts_us: int) -> str:
    return f"{ts_us // 1_000_000}.{ts_us % 1_000_000:06d}"


def _parse_id(text: str) -> int:
    if not _HEX_RE.match(text):
        raise MalformedLine(f"non-hex CAN id {text!r}")
    can_id = int(text, 16)
    if can_id > MAX_STD_ID:
        raise IdOutOfRange(can_id)
    return can_id


def _parse_bytes(fields: Iterable[str]) -> bytes:
    out = bytearray()
    for b in fields:
        if not _BYTE_RE.match(b):
            raise MalformedLine(f"bad data byte {b!r}")
        out.append(int(b, 16))
    return bytes(out)


def parse_log_line(line: str) -> CanFrame:
    """Parse one canonical CSV line into a frame."""
    fields = line.strip().split(",")
    if len(fields) < 4:
        raise MalformedLine(f"expected at least 4 fields, got {len(fields)}", line=line)
    ts = parse_timestamp(fields[0].strip())
    can_id = _parse_id(fields[1].strip())
    dlc_text = fields[2].strip()
    if not dlc_text.isdigit() or int(dlc_text) > MAX_DLC:
        raise MalformedLine(f"bad DLC {dlc_text!r}", line=line)
    dlc = int(dlc_text)
    if len(fields) != dlc + 4:
        raise MalformedLine(f"DLC {dlc} but {len(fields) - 4} data bytes", line=line)
    data = _parse_bytes(f.strip() for f in fields[3:3 + dlc])
    flag = fields[-1].strip()
    try:
        label = Label(flag)
    except ValueError:
        raise MalformedLine(f"flag must be R or T, got {flag!r}", line=line) from None
    return CanFrame(ts, can_id, data, label)


def _parse_dump_line(m: re.Match) -> CanFrame:
    ts = parse_timestamp(m.group(1))
    can_id = _parse_id(m.group(2))
    dlc = int(m.group(3))
    data_fields = m.group(4).split()
    if dlc > MAX_DLC or len(data_fields) != dlc:
        raise MalformedLine(f"DLC {dlc} but {len(data_fields)} data bytes")
    return CanFrame(ts, can_id, _parse_bytes(data_fields), Label.NORMAL)


def parse_any_line(line: str) -> CanFrame:
    """Tolerant variant: canonical CSV, or the ``Timestamp: .. ID: .. DLC: ..`` dump layout."""
    m = _DUMP_RE.match(line.strip())
    if m is not None:
        return _parse_dump_line(m)
    return parse_log_line(line)


def read_log(stream: Iterable[str], source: str = "") -> CanLog:
    frames: list[CanFrame] = []
    prev = -1
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            frame = parse_any_line(line)
        except MalformedLine as exc:
            exc.line_no = line_no
            exc.line = line.rstrip("\r\n")
            exc.args = (f"line {line_no}: {exc.reason}",)
            raise
        if frame.ts_us < prev:
            raise UnsortedTimestamps(line_no)
        prev = frame.ts_us
        frames.append(frame)
    return CanLog(frames, source)


def format_frame(frame: CanFrame) -> str:
    parts = [format_timestamp(frame.ts_us), f"{frame.can_id:03x}", str(frame.dlc)]
    parts.extend(f"{b:02x}" for b in frame.data)
    parts.append(frame.label.value)
    return ",".join(parts)


def write_log(log: CanLog, sink: TextIO) -> None:
    try:
        for frame in log.frames:
            sink.write(format_frame(frame) + "\n")
    except OSError as exc:
        raise SinkFailure(str(exc)) from exc


def load_log(path) -> CanLog:
    with open(path, encoding="utf-8", newline="") as fh:
        return read_log(fh, source=str(path))


def save_log(log: CanLog, path) -> None:
    try:
        fh = open(path, "w", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise SinkFailure(str(exc)) from exc
    with fh:
        write_log(log, fh)
