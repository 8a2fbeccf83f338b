"""Voxelwise precision/recall sweeps and the maximum F1 score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .volcore import BACKGROUND, FOREGROUND


@dataclass(frozen=True)
class PrCurvePoint:
    threshold: float
    precision: float
    recall: float
    f1: float


def _split(pred, labels):
    p = np.asarray(getattr(pred, "data", pred), dtype=np.float64).ravel()
    lab = np.asarray(getattr(labels, "data", labels)).ravel()
    if p.shape != lab.shape:
        raise ShapeError("prediction and label sizes differ")
    return np.sort(p[lab == FOREGROUND]), np.sort(p[lab == BACKGROUND])


def _curve(fg_sorted, bg_sorted, thresholds) -> list[PrCurvePoint]:
    """Counts of predictions >= t via binary search in the sorted values."""
    t = np.asarray(thresholds, dtype=np.float64)
    tp = fg_sorted.size - np.searchsorted(fg_sorted, t, side="left")
    fp = bg_sorted.size - np.searchsorted(bg_sorted, t, side="left")
    nfg = fg_sorted.size
    out = []
    for ti, tpi, fpi in zip(t, tp, fp):
        precision = tpi / (tpi + fpi) if tpi + fpi else 0.0
        recall = tpi / nfg if nfg else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        out.append(PrCurvePoint(float(ti), float(precision), float(recall), float(f1)))
    return out


def _best(curve):
    # strict > keeps the smallest threshold among ties (curve is ascending)
    best = curve[0]
    for pt in curve[1:]:
        if pt.f1 > best.f1:
            best = pt
    return best


def threshold_grid(n: int) -> np.ndarray:
    """``n`` evenly spaced thresholds strictly inside (0, 1)."""
    if n < 2:
        raise ValueError("need at least 2 thresholds")
    return np.arange(1, n + 1) / (n + 1.0)


def max_f1(pred, labels, thresholds: int = 255):
    """Best F1 over a uniform threshold grid; ignore voxels are excluded."""
    fg, bg = _split(pred, labels)
    curve = _curve(fg, bg, threshold_grid(thresholds))
    return _best(curve), curve


def exact_max_f1(pred, labels):
    """Best F1 over every distinct prediction value among labeled voxels."""
    fg, bg = _split(pred, labels)
    values = np.unique(np.concatenate([fg, bg]))
    if values.size == 0:
        return PrCurvePoint(0.0, 0.0, 0.0, 0.0), []
    curve = _curve(fg, bg, values)
    return _best(curve), curve


def curve_csv(curve) -> str:
    rows = ["threshold,precision,recall,f1"]
    rows += ["%.9g,%.9g,%.9g,%.9g" % (p.threshold, p.precision, p.recall, p.f1) for p in curve]
    return "\n".join(rows) + "\n"
