"""Detection metrics: confusion counts, ROC/AUC and report tables.

The positive class is an abnormal image.  Anomaly scores are
``1 - discriminator output`` so that larger means more suspicious.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np
from scipy.stats import rankdata

from .errors import LengthMismatch, SingleClassInput


@dataclass
class EvalReport:
    tp: int
    fp: int
    tn: int
    fn: int
    auc: float | None = None
    name: str = ""

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def detection_rate(self) -> float:
        pos = self.tp + self.fn
        return self.tp / pos if pos else 0.0

    @property
    def precision_degenerate(self) -> bool:
        """True when nothing was flagged, so precision is undefined (reported as 0)."""
        return self.tp + self.fp == 0

    @property
    def precision(self) -> float:
        return 0.0 if self.precision_degenerate else self.tp / (self.tp + self.fp)

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def normal_rate(self) -> float:
        """Share of normal images kept as normal (specificity)."""
        neg = self.tn + self.fp
        return self.tn / neg if neg else 0.0


def _as_bool(values) -> np.ndarray:
    out = []
    for v in values:
        if hasattr(v, "anomaly"):
            out.append(bool(v.anomaly))
        elif hasattr(v, "abnormal"):
            out.append(bool(v.abnormal))
        elif isinstance(v, str):
            out.append(v in ("Abnormal", "Anomaly", "T", "1"))
        else:
            out.append(bool(v))
    return np.array(out, dtype=bool)


def confusion(predicted, labels, auc: float | None = None, name: str = "") -> EvalReport:
    """Count outcomes.  ``predicted`` holds verdicts or booleans (True = anomaly);
    ``labels`` holds images, label strings or booleans (True = abnormal)."""
    pred = _as_bool(predicted)
    truth = _as_bool(labels)
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(truth)} labels")
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    tn = int(np.sum(~pred & ~truth))
    fn = int(np.sum(~pred & truth))
    return EvalReport(tp, fp, tn, fn, auc, name)


def _check_scores(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=bool).reshape(-1)
    if len(s) != len(y):
        raise LengthMismatch(f"{len(s)} scores vs {len(y)} labels")
    if y.all() or not y.any():
        raise SingleClassInput("AUC needs at least one positive and one negative label")
    return s, y


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(fpr, tpr, thresholds)`` with one point per distinct score, from (0, 0) to (1, 1).

    Tied scores move the curve diagonally, which gives ties half credit.
    """
    s, y = _check_scores(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tps = np.cumsum(y)[last]
    fps = (last + 1) - tps
    tpr = np.r_[0.0, tps / y.sum()]
    fpr = np.r_[0.0, fps / (~y).sum()]
    return fpr, tpr, np.r_[np.inf, s[last]]


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve by the trapezoid rule."""
    fpr, tpr, _ = roc_curve(scores, labels)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def auc_u_statistic(scores, labels) -> float:
    """AUC as the normalised Mann-Whitney U from mid-ranks."""
    s, y = _check_scores(scores, labels)
    ranks = rankdata(s)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def write_roc(scores, labels, sink: TextIO) -> None:
    fpr, tpr, _ = roc_curve(scores, labels)
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(["fpr", "tpr"])
    for a, b in zip(fpr, tpr):
        w.writerow([f"{a:.6f}", f"{b:.6f}"])


REPORT_FIELDS = ["attack", "tp", "fp", "tn", "fn", "detection_rate", "precision", "accuracy", "auc",
                 "precision_degenerate"]


def _fmt(v) -> str:
    return "" if v is None else f"{v:.6f}"


def write_report_csv(reports: Sequence[EvalReport], sink: TextIO) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for r in reports:
        w.writerow([r.name, r.tp, r.fp, r.tn, r.fn, _fmt(r.detection_rate), _fmt(r.precision),
                    _fmt(r.accuracy), _fmt(r.auc), int(r.precision_degenerate)])


def report_table(reports: Sequence[EvalReport], title: str = "") -> str:
    """Plain-text table with detection rate, precision, accuracy and AUC per attack."""
    out = io.StringIO()
    if title:
        out.write(title + "\n")
    out.write(f"{'Attack':<10}{'Detection rate':>16}{'Precision':>12}{'Accuracy':>12}{'AUC':>10}\n")
    for r in reports:
        prec = f"{100 * r.precision:.1f}%" + ("*" if r.precision_degenerate else "")
        auc = "-" if r.auc is None else f"{r.auc:.4f}"
        out.write(f"{r.name:<10}{100 * r.detection_rate:>15.1f}%{prec:>12}{100 * r.accuracy:>11.1f}%{auc:>10}\n")
    if any(r.precision_degenerate for r in reports):
        out.write("* no image was flagged, precision undefined and shown as 0\n")
    return out.getvalue()


def d1_table(rows: dict[str, dict[str, float]], title: str = "") -> str:
    """Detection-rate matrix: training attack (row) by test set (column)."""
    cols = sorted({c for r in rows.values() for c in r})
    out = io.StringIO()
    if title:
        out.write(title + "\n")
    out.write(f"{'Trained on':<12}" + "".join(f"{c:>10}" for c in cols) + "\n")
    for name, r in rows.items():
        out.write(f"{name:<12}" + "".join(f"{100 * r[c]:>9.1f}%" if c in r else f"{'-':>10}" for c in cols) + "\n")
    return out.getvalue()


@dataclass
class SweepRow:
    input_size: int
    accuracy: float
    auc: float | None = None
    extra: dict = field(default_factory=dict)


def write_sweep_csv(rows: Iterable[SweepRow], sink: TextIO) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(["input_size", "accuracy", "auc"])
    for r in rows:
        w.writerow([r.input_size, f"{r.accuracy:.6f}", _fmt(r.auc)])
