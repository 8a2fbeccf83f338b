"""Visual hulls from MIP annotations and hull-based label filtering."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .volcore import BACKGROUND, FOREGROUND, IGNORE, LabelImage, MipAnnotationSet


def binarize_for_hull(img) -> np.ndarray:
    """Foreground and ignore count as positive, background as negative."""
    data = img.data if isinstance(img, LabelImage) else np.asarray(img)
    return (data == FOREGROUND) | (data == IGNORE)


def hull_from_masks(masks, volume_dims) -> np.ndarray:
    """Conjunction of back-projected binary masks given as ``{axis: mask}``."""
    if len(masks) < 2:
        raise ShapeError("a visual hull needs at least 2 projections, got %d" % len(masks))
    hull = np.ones(tuple(volume_dims), dtype=bool)
    for axis, mask in masks.items():
        hull &= np.expand_dims(mask, int(axis))
    return hull


def build_hull(mips: MipAnnotationSet) -> np.ndarray:
    """Boolean volume, true where every available annotation is positive on the voxel's ray."""
    return hull_from_masks({e.axis: binarize_for_hull(e) for e in mips}, mips.volume_dims)


def outside_hull(mips: MipAnnotationSet, hull: np.ndarray) -> dict:
    """Per-axis mask of positive labels whose ray misses the hull."""
    out = {}
    for e in mips:
        support = hull.any(axis=int(e.axis))
        out[e.axis] = binarize_for_hull(e) & ~support
    return out


def filter_labels(mips: MipAnnotationSet) -> MipAnnotationSet:
    """Relabel as background every positive pixel that falls outside the hull projection.

    Sets with a single annotation have no hull and are returned unchanged.
    """
    if len(mips) == 1:
        return mips
    drop = outside_hull(mips, build_hull(mips))
    out = []
    for e in mips:
        data = e.data.copy()
        data[drop[e.axis]] = BACKGROUND
        out.append(LabelImage(data, e.axis))
    return MipAnnotationSet(tuple(out), mips.volume_dims)
