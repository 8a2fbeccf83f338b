"""Training objectives and their gradients with respect to the prediction volume.

Three supervision modes are provided: dense 3D cross entropy, the projection
loss evaluated on maximum-intensity projections of the prediction, and the
few-annotated-slices baseline.  Each returns a :class:`LossReport` together with
the gradient of the total loss with respect to every predicted probability.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .project import mip
from .volcore import BACKGROUND, FOREGROUND, AxisId, LabelVolume, MipAnnotationSet, ScalarVolume

EPS = 1e-7


class Normalization(enum.Enum):
    SUM = "sum"
    MEAN_OVER_LABELED = "mean"


@dataclass
class LossReport:
    total: float
    per_axis: dict = field(default_factory=dict)
    labeled_pixel_count: int = 0
    normalization: Normalization = Normalization.SUM

    def to_text(self) -> str:
        lines = ["loss_total=%.9g" % self.total]
        for axis in sorted(self.per_axis):
            lines.append("loss_axis%d=%.9g" % (int(axis), self.per_axis[axis]))
        lines.append("labeled_count=%d" % self.labeled_pixel_count)
        lines.append("normalization=%s" % self.normalization.value)
        return "\n".join(lines) + "\n"


def cross_entropy_term(y: float, label: int) -> float:
    """Negated binary cross entropy of one probability; ignore labels cost nothing."""
    if not 0.0 <= y <= 1.0 or math.isnan(y):
        raise ValueError("probability %r outside [0, 1]" % (y,))
    yc = min(max(y, EPS), 1.0 - EPS)
    if label == FOREGROUND:
        return -math.log(yc)
    if label == BACKGROUND:
        return -math.log(1.0 - yc)
    return 0.0


def _terms(y: np.ndarray, labels: np.ndarray):
    """Elementwise loss terms and d(term)/dy for ternary labels."""
    y = np.asarray(y, dtype=np.float64)
    yc = np.clip(y, EPS, 1.0 - EPS)
    fg = labels == FOREGROUND
    bg = labels == BACKGROUND
    terms = np.zeros_like(yc)
    grad = np.zeros_like(yc)
    terms[fg] = -np.log(yc[fg])
    terms[bg] = -np.log1p(-yc[bg])
    grad[fg] = -1.0 / yc[fg]
    grad[bg] = 1.0 / (1.0 - yc[bg])
    return terms, grad, int(np.count_nonzero(fg | bg))


def _check_probabilities(pred: np.ndarray):
    if pred.size and (not np.all(np.isfinite(pred)) or pred.min() < 0.0 or pred.max() > 1.0):
        raise ValueError("predictions must be finite probabilities in [0, 1]")


def _finish(total, per_axis, count, grad, normalization):
    if normalization is Normalization.MEAN_OVER_LABELED:
        scale = 1.0 / count if count else 0.0
        total *= scale
        per_axis = {a: v * scale for a, v in per_axis.items()}
        grad *= scale
    return LossReport(float(total), per_axis, count, normalization), grad


def loss3d(pred: ScalarVolume, labels: LabelVolume, normalization=Normalization.SUM):
    """Cross entropy summed (or averaged) over all labeled voxels."""
    if pred.dims != labels.dims:
        raise ShapeError("prediction dims %r != label dims %r" % (pred.dims, labels.dims))
    _check_probabilities(pred.data)
    terms, grad, count = _terms(pred.data, labels.data)
    return _finish(float(terms.sum()), {}, count, grad, normalization)


def loss_mip(pred: ScalarVolume, mips: MipAnnotationSet, normalization=Normalization.SUM):
    """Cross entropy between projections of the prediction and 2D annotations.

    The gradient of each ray's maximum is routed entirely to its first argmax
    voxel; contributions from different axes add up.
    """
    if len(mips) == 0:
        raise ShapeError("empty annotation set")
    if tuple(pred.dims) != tuple(mips.volume_dims):
        raise ShapeError("prediction dims %r != annotation dims %r" % (pred.dims, mips.volume_dims))
    _check_probabilities(pred.data)
    grad = np.zeros(pred.dims, dtype=np.float64)
    per_axis = {}
    total = 0.0
    count = 0
    for entry in mips:
        ax = int(entry.axis)
        image, argmax = mip(pred, entry.axis)
        terms, g2d, n = _terms(image.data, entry.data)
        s = float(terms.sum())
        per_axis[AxisId(ax)] = s
        total += s
        count += n
        idx = np.expand_dims(argmax.data, ax)
        # each ray contributes to exactly one voxel, so plain scatter is safe
        cur = np.take_along_axis(grad, idx, ax)
        np.put_along_axis(grad, idx, cur + np.expand_dims(g2d, ax), ax)
    return _finish(total, per_axis, count, grad, normalization)


def loss_slices(pred: ScalarVolume, labels: LabelVolume, axis, slice_indices, normalization=Normalization.SUM):
    """Cross entropy restricted to a few annotated slices orthogonal to ``axis``."""
    if pred.dims != labels.dims:
        raise ShapeError("prediction dims %r != label dims %r" % (pred.dims, labels.dims))
    ax = int(AxisId(axis))
    n = pred.dims[ax]
    idx = sorted({int(s) for s in slice_indices})
    if any(s < 0 or s >= n for s in idx):
        raise ShapeError("slice index out of range [0, %d)" % n, code="out_of_bounds")
    _check_probabilities(pred.data)
    keep = np.zeros(n, dtype=bool)
    keep[idx] = True
    shape = [1, 1, 1]
    shape[ax] = n
    masked = np.where(keep.reshape(shape), labels.data, 2).astype(np.uint8)
    terms, grad, count = _terms(pred.data, masked)
    return _finish(float(terms.sum()), {}, count, grad, normalization)
