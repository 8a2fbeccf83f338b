"""Annotation-consistency analytics.

* precision/recall of 2D annotations against projected 3D annotations,
* distance-tolerant match fractions between two binary images,
* cross-view inconsistency of MIP annotations via dilated visual hulls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .carve import binarize_for_hull, hull_from_masks
from .errors import ShapeError
from .volcore import FOREGROUND, MipAnnotationSet


@dataclass
class ConsistencyCurve:
    distances: list
    fraction: list

    def to_csv(self) -> str:
        rows = ["d,fraction"] + ["%d,%.9g" % (d, f) for d, f in zip(self.distances, self.fraction)]
        return "\n".join(rows) + "\n"


def _binary(img) -> np.ndarray:
    data = img.data if hasattr(img, "data") else img
    return np.asarray(data).astype(bool)


def pr_2d_vs_3d(ann2d, proj3d) -> tuple[float, float]:
    """Precision and recall of ``ann2d`` with respect to ``proj3d`` (0/0 counts as 1)."""
    a, b = _binary(ann2d), _binary(proj3d)
    if a.shape != b.shape:
        raise ShapeError("image dims differ: %r vs %r" % (a.shape, b.shape))
    both = int(np.count_nonzero(a & b))
    na, nb = int(np.count_nonzero(a)), int(np.count_nonzero(b))
    precision = both / na if na else 1.0
    recall = both / nb if nb else 1.0
    return precision, recall


def distance_to(mask: np.ndarray) -> np.ndarray:
    """Euclidean distance of every pixel to the nearest true pixel of ``mask`` (inf if none)."""
    if not mask.any():
        return np.full(mask.shape, np.inf)
    return ndimage.distance_transform_edt(~mask)


def distance_match_curve(a, b, d_max: int) -> ConsistencyCurve:
    """Fraction of positives of ``a`` lying within distance d of a positive of ``b``, d = 0..d_max."""
    a, b = _binary(a), _binary(b)
    if a.shape != b.shape:
        raise ShapeError("image dims differ: %r vs %r" % (a.shape, b.shape))
    dist = distance_to(b)[a]
    ds = list(range(int(d_max) + 1))
    if dist.size == 0:
        return ConsistencyCurve(ds, [1.0] * len(ds))
    return ConsistencyCurve(ds, [float(np.count_nonzero(dist <= d)) / dist.size for d in ds])


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Dilation by a Euclidean disk of integer radius."""
    if radius <= 0:
        return mask.copy()
    return distance_to(mask) <= radius


def inconsistent_labels(mips: MipAnnotationSet, d: int) -> dict:
    """Per-axis mask of positive (fg or ignore) pixels outside the projection of the
    hull built from annotations dilated by radius ``d``."""
    if len(mips) < 2:
        raise ShapeError("cross-view analysis needs at least 2 annotations, got %d" % len(mips))
    masks = {e.axis: dilate(binarize_for_hull(e), d) for e in mips}
    hull = hull_from_masks(masks, mips.volume_dims)
    return {e.axis: binarize_for_hull(e) & ~hull.any(axis=int(e.axis)) for e in mips}


def cross_view_inconsistency(mips: MipAnnotationSet, d_max: int) -> ConsistencyCurve:
    """Fraction of foreground labels flagged inconsistent, for d = 0..d_max.

    Ignore pixels take part in hull construction but not in the denominator.
    Because some inconsistent labels survive hull reprojection, the values are
    lower bounds.
    """
    total = sum(int(np.count_nonzero(e.data == FOREGROUND)) for e in mips)
    ds = list(range(int(d_max) + 1))
    fractions = []
    for d in ds:
        flagged = inconsistent_labels(mips, d)
        bad = sum(int(np.count_nonzero(flagged[e.axis] & (e.data == FOREGROUND))) for e in mips)
        fractions.append(bad / total if total else 0.0)
    return ConsistencyCurve(ds, fractions)
