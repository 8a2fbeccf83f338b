"""Axis-aligned maximum-intensity projections."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .volcore import AxisId, LabelVolume, ScalarVolume


@dataclass(frozen=True, eq=False)
class MipImage:
    data: np.ndarray
    axis: AxisId

    @property
    def dims(self):
        return tuple(self.data.shape)


@dataclass(frozen=True, eq=False)
class ArgmaxMap:
    """Ray index of the maximum for every pixel of a MIP."""

    data: np.ndarray
    axis: AxisId

    @property
    def dims(self):
        return tuple(self.data.shape)


def mip(vol: ScalarVolume, axis) -> tuple[MipImage, ArgmaxMap]:
    """Maximum along ``axis`` and the first ray index attaining it."""
    axis = AxisId(axis)
    data = vol.data if isinstance(vol, ScalarVolume) else np.asarray(vol)
    # np.argmax returns the first maximizer, which is the tie rule we want
    idx = np.argmax(data, axis=int(axis))
    val = np.take_along_axis(data, np.expand_dims(idx, int(axis)), int(axis))
    return MipImage(np.squeeze(val, int(axis)), axis), ArgmaxMap(idx, axis)


def mip_set(vol: ScalarVolume, axes) -> list[tuple[MipImage, ArgmaxMap]]:
    axes = [AxisId(a) for a in axes]
    if not 1 <= len(axes) <= 3:
        raise ShapeError("mip_set takes 1 to 3 axes")
    if len(set(axes)) != len(axes):
        raise ShapeError("duplicate axis in %r" % (axes,))
    return [mip(vol, a) for a in axes]


def project_labels_any(lv, axis, positive_set=(1,)) -> np.ndarray:
    """Boolean image: true where any voxel on the ray has a label in ``positive_set``."""
    data = lv.data if isinstance(lv, LabelVolume) else np.asarray(lv)
    mask = np.isin(data, list(positive_set))
    return mask.any(axis=int(axis))


def gather_along_rays(vol: np.ndarray, argmax: ArgmaxMap) -> np.ndarray:
    """Read ``vol`` at the stored argmax index of every ray."""
    ax = int(argmax.axis)
    return np.squeeze(np.take_along_axis(vol, np.expand_dims(argmax.data, ax), ax), ax)
