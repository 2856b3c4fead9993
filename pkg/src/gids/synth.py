"""Synthetic normal traffic and attack injection.

Normal traffic is a set of jittered periodic senders, one per arbitration ID.
Attacks are purely additive: injected frames are merged into the base log and
base frames are never touched.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .can import MAX_STD_ID, CanFrame, CanLog, Label
from .errors import EmptyProfile, WindowOutOfRange

DOS_ID = 0x000
RPM_ID = 0x316
GEAR_ID = 0x43F


class PayloadMode(enum.Enum):
    CONSTANT = "constant"
    COUNTER = "counter"
    RANDOM = "random"


@dataclass(frozen=True)
class Period:
    ms: float
    jitter: float = 0.0


@dataclass
class TrafficProfile:
    id_periods: dict[int, Period]
    payload_mode: PayloadMode = PayloadMode.COUNTER
    seed: int = 0

    def __post_init__(self):
        if not self.id_periods:
            raise EmptyProfile("traffic profile has no CAN ids")
        for can_id, p in self.id_periods.items():
            if not 0 <= can_id <= MAX_STD_ID:
                raise ValueError(f"profile id 0x{can_id:x} is not an 11-bit id")
            if p.ms <= 0:
                raise ValueError(f"period for 0x{can_id:03x} must be positive")
            if not 0.0 <= p.jitter <= 0.5:
                raise ValueError(f"jitter for 0x{can_id:03x} must lie in [0, 0.5]")

    @property
    def frames_per_second(self) -> float:
        return sum(1000.0 / p.ms for p in self.id_periods.values())


# 20 senders, roughly 1,000 frames/s in total.
_DEFAULT_PERIODS = {
    0x316: 10, 0x43F: 10, 0x18F: 10, 0x260: 10, 0x2A0: 10, 0x329: 10,
    0x370: 20, 0x440: 20, 0x545: 20, 0x4F0: 20, 0x153: 20, 0x164: 20,
    0x220: 50, 0x251: 50, 0x2B0: 50, 0x350: 50,
    0x386: 100, 0x4B1: 100, 0x5A0: 100, 0x690: 100,
}


def default_profile(seed: int = 0, jitter: float = 0.1) -> TrafficProfile:
    return TrafficProfile(
        {i: Period(float(ms), jitter) for i, ms in _DEFAULT_PERIODS.items()},
        PayloadMode.COUNTER,
        seed,
    )


def _merge(frames: list[CanFrame]) -> list[CanFrame]:
    # injected frames sort after normal ones sharing a timestamp
    ts = np.fromiter((f.ts_us for f in frames), dtype=np.int64, count=len(frames))
    inj = np.fromiter((f.injected for f in frames), dtype=np.int8, count=len(frames))
    order = np.lexsort((inj, ts))
    return [frames[i] for i in order]


def gen_normal_traffic(profile: TrafficProfile, duration_s: float, start_s: float = 0.0) -> CanLog:
    """Emit every profile ID at its period with uniform jitter over ``duration_s`` seconds.

    Each sender gets a random phase in ``[0, period)``; emission ``k`` lands at
    ``phase + k*period + u*jitter*period`` with ``u`` uniform on ``[-1, 1]``.
    """
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    if not profile.id_periods:
        raise EmptyProfile("traffic profile has no CAN ids")
    rng = np.random.default_rng(profile.seed)
    start_us = int(round(start_s * 1e6))
    dur_us = duration_s * 1e6

    ts_parts, id_parts = [], []
    for can_id in sorted(profile.id_periods):
        p = profile.id_periods[can_id]
        period_us = p.ms * 1000.0
        phase = rng.uniform(0, period_us)
        n = int(np.ceil((dur_us - phase) / period_us))
        k = np.arange(max(n, 0))
        t = phase + k * period_us
        if p.jitter > 0:
            t = t + rng.uniform(-1.0, 1.0, size=t.shape) * p.jitter * period_us
        t = np.rint(t)
        keep = (t >= 0) & (t < dur_us)
        ts_parts.append(t[keep].astype(np.int64) + start_us)
        id_parts.append(np.full(int(keep.sum()), can_id, dtype=np.int64))

    ts = np.concatenate(ts_parts)
    ids = np.concatenate(id_parts)
    order = np.lexsort((ids, ts))
    ts, ids = ts[order], ids[order]

    base_payload = {i: bytes(rng.integers(0, 256, size=8, dtype=np.uint8)) for i in sorted(profile.id_periods)}
    counters = dict.fromkeys(profile.id_periods, 0)
    if profile.payload_mode is PayloadMode.RANDOM:
        rand = rng.integers(0, 256, size=(len(ts), 8), dtype=np.uint8)

    frames = []
    for j, (t, can_id) in enumerate(zip(ts.tolist(), ids.tolist())):
        if profile.payload_mode is PayloadMode.CONSTANT:
            data = base_payload[can_id]
        elif profile.payload_mode is PayloadMode.COUNTER:
            c = counters[can_id]
            counters[can_id] = (c + 1) & 0xFF
            data = bytes([c]) + base_payload[can_id][1:]
        else:
            data = rand[j].tobytes()
        frames.append(CanFrame(t, can_id, data, Label.NORMAL))
    return CanLog(frames, source=f"synth seed={profile.seed}")


class AttackKind(enum.Enum):
    DOS = "dos"
    FUZZY = "fuzzy"
    TARGETED = "targeted"


DEFAULT_PERIOD_MS = {AttackKind.DOS: 0.3, AttackKind.FUZZY: 0.5, AttackKind.TARGETED: 1.0}

# CLI/config aliases for the two targeted attacks
ATTACK_ALIASES = {
    "dos": (AttackKind.DOS, None),
    "fuzzy": (AttackKind.FUZZY, None),
    "rpm": (AttackKind.TARGETED, RPM_ID),
    "gear": (AttackKind.TARGETED, GEAR_ID),
    "targeted": (AttackKind.TARGETED, RPM_ID),
}


@dataclass
class AttackSpec:
    """One injection campaign.

    ``start_s``/``end_s`` are offsets in seconds from the first frame of the
    base log.  Injections land at ``start + k*period`` for ``k = 1, 2, ...``
    up to and including ``end``.
    """

    kind: AttackKind
    start_s: float
    end_s: float
    period_ms: float | None = None
    target_id: int | None = None
    seed: int = 0
    payload: bytes | None = field(default=None)

    def __post_init__(self):
        if self.period_ms is None:
            self.period_ms = DEFAULT_PERIOD_MS[self.kind]
        if self.period_ms <= 0:
            raise ValueError("attack period must be positive")
        if not self.start_s < self.end_s:
            raise ValueError("attack window needs start < end")
        if self.kind is AttackKind.TARGETED:
            if self.target_id is None:
                self.target_id = RPM_ID
            if not 0 <= self.target_id <= MAX_STD_ID:
                raise ValueError(f"target id 0x{self.target_id:x} is not an 11-bit id")
        elif self.kind is AttackKind.DOS:
            self.target_id = DOS_ID

    @classmethod
    def from_mapping(cls, cfg: Mapping[str, str]) -> "AttackSpec":
        """Build from ``key=value`` settings (attack, period_ms, window, target_id, seed)."""
        name = cfg.get("attack", cfg.get("kind", "")).strip().lower()
        if name not in ATTACK_ALIASES:
            raise ValueError(f"unknown attack {name!r}")
        kind, target = ATTACK_ALIASES[name]
        if "target_id" in cfg:
            target = int(cfg["target_id"], 16)
        if "window" in cfg:
            start, end = parse_window(cfg["window"])
        else:
            start, end = float(cfg["start_s"]), float(cfg["end_s"])
        period = float(cfg["period_ms"]) if "period_ms" in cfg else None
        return cls(kind, start, end, period, target, int(cfg.get("seed", 0)))


def parse_window(text: str) -> tuple[float, float]:
    start, sep, end = text.partition(":")
    if not sep:
        raise ValueError(f"window must look like START:END, got {text!r}")
    return float(start), float(end)


def inject_attack(base: CanLog, spec: AttackSpec) -> CanLog:
    if not base.frames:
        raise WindowOutOfRange("base log is empty")
    t0 = base.frames[0].ts_us
    t_last = base.frames[-1].ts_us
    lo = t0 + spec.start_s * 1e6
    hi = min(t0 + spec.end_s * 1e6, t_last)
    if spec.end_s < 0 or lo > t_last or hi <= lo:
        raise WindowOutOfRange(
            f"window {spec.start_s}:{spec.end_s} s does not overlap the log span "
            f"0:{(t_last - t0) / 1e6:.6f} s"
        )

    period_us = spec.period_ms * 1000.0
    n = int(np.floor((hi - lo) / period_us + 1e-9))
    times = np.rint(lo + np.arange(1, n + 1) * period_us).astype(np.int64)
    rng = np.random.default_rng(spec.seed)

    if spec.kind is AttackKind.DOS:
        ids = np.full(n, DOS_ID, dtype=np.int64)
        payloads = np.zeros((n, 8), dtype=np.uint8)
    elif spec.kind is AttackKind.FUZZY:
        ids = rng.integers(0, MAX_STD_ID + 1, size=n)
        payloads = rng.integers(0, 256, size=(n, 8), dtype=np.uint8)
    else:
        ids = np.full(n, spec.target_id, dtype=np.int64)
        payload = spec.payload if spec.payload is not None else bytes(rng.integers(0, 256, size=8, dtype=np.uint8))
        payloads = np.tile(np.frombuffer(payload, dtype=np.uint8), (n, 1))

    injected = [
        CanFrame(t, i, p.tobytes(), Label.INJECTED)
        for t, i, p in zip(times.tolist(), ids.tolist(), payloads)
    ]
    return CanLog(_merge(base.frames + injected), source=f"{base.source} +{spec.kind.value}")
