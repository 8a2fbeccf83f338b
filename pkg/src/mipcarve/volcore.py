"""Dense 3D/2D containers, axis conventions and the VSG1 binary container.

Volumes are indexed ``(i, j, k)`` with ``k`` varying fastest in memory.
Projecting along ``Axis0`` yields an image indexed ``(j, k)``, along ``Axis1``
an image indexed ``(i, k)`` and along ``Axis2`` an image indexed ``(i, j)``.

Ternary labels use one byte per element: 0 background, 1 foreground,
2 ignore.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import FormatError, ShapeError

BACKGROUND = 0
FOREGROUND = 1
IGNORE = 2

MAGIC = b"VSG1"
DTYPE_SCALAR = 0
DTYPE_LABEL = 1
NO_AXIS = 255
_MAX_DIM = 2**31 - 1


class AxisId(enum.IntEnum):
    AXIS0 = 0
    AXIS1 = 1
    AXIS2 = 2


ALL_AXES = (AxisId.AXIS0, AxisId.AXIS1, AxisId.AXIS2)


def projected_dims(dims: Sequence[int], axis: int) -> tuple[int, ...]:
    """Dims of the image obtained by projecting a volume along ``axis``."""
    return tuple(int(d) for a, d in enumerate(dims) if a != int(axis))


def _check_labels(data: np.ndarray) -> None:
    if data.size and int(data.max()) > IGNORE:
        raise FormatError("invalid label value %d" % int(data.max()), code="invalid_label")


@dataclass(frozen=True, eq=False)
class ScalarVolume:
    """Real-valued field on a 3D grid (intensities or probabilities)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype.kind != "f":
            data = data.astype(np.float32)
        if data.ndim != 3:
            raise ShapeError("scalar volume must be 3D, got shape %r" % (data.shape,))
        if min(data.shape) <= 0:
            raise ShapeError("volume dims must be positive, got %r" % (data.shape,))
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)

    def __eq__(self, other):
        return (
            isinstance(other, ScalarVolume)
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class LabelVolume:
    """Ternary label per voxel."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ShapeError("label volume must be 3D, got shape %r" % (data.shape,))
        if min(data.shape) <= 0:
            raise ShapeError("volume dims must be positive, got %r" % (data.shape,))
        if data.dtype != np.uint8:
            if data.size and (data.min() < 0 or data.max() > IGNORE):
                raise FormatError("labels must be in {0,1,2}", code="invalid_label")
            data = data.astype(np.uint8)
        _check_labels(data)
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)

    def __eq__(self, other):
        return isinstance(other, LabelVolume) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class LabelImage:
    """Ternary 2D annotation of the projection along ``axis``."""

    data: np.ndarray
    axis: AxisId

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ShapeError("label image must be 2D, got shape %r" % (data.shape,))
        if data.dtype != np.uint8:
            if data.size and (data.min() < 0 or data.max() > IGNORE):
                raise FormatError("labels must be in {0,1,2}", code="invalid_label")
            data = data.astype(np.uint8)
        _check_labels(data)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "axis", AxisId(self.axis))

    @property
    def dims(self) -> tuple[int, int]:
        return tuple(self.data.shape)

    def __eq__(self, other):
        return (
            isinstance(other, LabelImage)
            and self.axis == other.axis
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class MipAnnotationSet:
    """One to three per-axis annotations of the same volume."""

    entries: tuple
    volume_dims: tuple

    def __post_init__(self):
        entries = tuple(sorted(self.entries, key=lambda e: int(e.axis)))
        dims = tuple(int(d) for d in self.volume_dims)
        if not 1 <= len(entries) <= 3:
            raise ShapeError("a MIP annotation set holds 1 to 3 images, got %d" % len(entries))
        axes = [e.axis for e in entries]
        if len(set(axes)) != len(axes):
            raise ShapeError("duplicate axis in MIP annotation set")
        if len(dims) != 3:
            raise ShapeError("volume_dims must have three entries")
        for e in entries:
            want = projected_dims(dims, e.axis)
            if e.dims != want:
                raise ShapeError(
                    "annotation along axis %d has dims %r, expected %r" % (e.axis, e.dims, want)
                )
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "volume_dims", dims)

    @property
    def axes(self) -> tuple[AxisId, ...]:
        return tuple(e.axis for e in self.entries)

    def __getitem__(self, axis) -> LabelImage:
        for e in self.entries:
            if e.axis == axis:
                return e
        raise KeyError(axis)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __eq__(self, other):
        return (
            isinstance(other, MipAnnotationSet)
            and self.volume_dims == other.volume_dims
            and self.entries == other.entries
        )


Volume = Union[ScalarVolume, LabelVolume]


# -- VSG1 I/O ---------------------------------------------------------------


def encode(obj) -> bytes:
    """Serialize a volume or 2D image to VSG1 bytes.

    Accepts ScalarVolume, LabelVolume, LabelImage, or any object with ``data``
    and ``axis`` attributes holding a 2D scalar array (MIP images).
    """
    data = np.asarray(obj.data)
    axis = getattr(obj, "axis", None)
    if data.ndim not in (2, 3):
        raise ShapeError("only rank 2 and 3 arrays can be stored")
    if data.size == 0 or min(data.shape) <= 0:
        raise ShapeError("dims must be positive, got %r" % (data.shape,))
    if max(data.shape) > _MAX_DIM:
        raise ShapeError("dimension exceeds 2^31-1")
    if isinstance(obj, (LabelVolume, LabelImage)) or data.dtype == np.uint8 or data.dtype == bool:
        dtype = DTYPE_LABEL
        payload = np.ascontiguousarray(data, dtype=np.uint8)
        _check_labels(payload)
    else:
        dtype = DTYPE_SCALAR
        payload = np.ascontiguousarray(data, dtype="<f4")
    axis_tag = NO_AXIS if axis is None or data.ndim == 3 else int(axis)
    header = MAGIC + struct.pack("<BBBB", dtype, data.ndim, axis_tag, 0)
    header += struct.pack("<%dI" % data.ndim, *data.shape)
    return header + payload.tobytes()


def decode(buf: bytes):
    """Parse VSG1 bytes.

    Rank-3 payloads return ScalarVolume or LabelVolume.  Rank-2 label payloads
    return a LabelImage when the axis tag is set; other rank-2 payloads return
    a :class:`Image2D`.
    """
    if len(buf) < 8:
        raise FormatError("truncated header", code="truncated")
    if buf[:4] != MAGIC:
        raise FormatError("bad magic %r" % bytes(buf[:4]), code="bad_magic")
    dtype, rank, axis_tag, _reserved = struct.unpack_from("<BBBB", buf, 4)
    if dtype not in (DTYPE_SCALAR, DTYPE_LABEL):
        raise FormatError("unknown dtype code %d" % dtype, code="bad_dtype")
    if rank not in (2, 3):
        raise FormatError("unsupported rank %d" % rank, code="bad_rank")
    if axis_tag not in (0, 1, 2, NO_AXIS):
        raise FormatError("bad axis tag %d" % axis_tag, code="bad_axis")
    if len(buf) < 8 + 4 * rank:
        raise FormatError("truncated header", code="truncated")
    dims = struct.unpack_from("<%dI" % rank, buf, 8)
    if min(dims) == 0 or max(dims) > _MAX_DIM:
        raise FormatError("invalid dims %r" % (dims,), code="bad_dims")
    n = int(np.prod(dims, dtype=np.int64))
    itemsize = 4 if dtype == DTYPE_SCALAR else 1
    start = 8 + 4 * rank
    if len(buf) - start < n * itemsize:
        raise FormatError("truncated payload", code="truncated")
    if len(buf) - start > n * itemsize:
        raise FormatError("trailing bytes after payload", code="trailing")
    if dtype == DTYPE_SCALAR:
        data = np.frombuffer(buf, dtype="<f4", count=n, offset=start).astype(np.float32)
    else:
        data = np.frombuffer(buf, dtype=np.uint8, count=n, offset=start).copy()
    data = data.reshape(dims)
    axis = None if axis_tag == NO_AXIS else AxisId(axis_tag)
    if rank == 3:
        return LabelVolume(data) if dtype == DTYPE_LABEL else ScalarVolume(data)
    if dtype == DTYPE_LABEL:
        if axis is None:
            _check_labels(data)
            return Image2D(data, None)
        return LabelImage(data, axis)
    return Image2D(data, axis)


@dataclass(frozen=True, eq=False)
class Image2D:
    """Generic 2D payload (MIP images, binary masks) with an optional axis tag."""

    data: np.ndarray
    axis: AxisId | None = None

    def __eq__(self, other):
        return (
            isinstance(other, Image2D)
            and self.axis == other.axis
            and self.data.dtype == other.data.dtype
            and np.array_equal(self.data, other.data)
        )


def write_volume(vol, path) -> None:
    Path(path).write_bytes(encode(vol))


def read_volume(path):
    try:
        buf = Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise FormatError("no such file: %s" % path, code="not_found") from exc
    return decode(buf)


def read_label_image(path) -> LabelImage:
    obj = read_volume(path)
    if not isinstance(obj, LabelImage):
        raise FormatError("%s is not an axis-tagged label image" % path, code="wrong_kind")
    return obj


# -- cropping ---------------------------------------------------------------


def _window(origin, size, dims):
    origin = tuple(int(o) for o in origin)
    size = tuple(int(s) for s in size)
    if len(origin) != len(dims) or len(size) != len(dims):
        raise ShapeError("crop origin/size rank mismatch")
    for o, s, d in zip(origin, size, dims):
        if o < 0 or s <= 0 or o + s > d:
            raise ShapeError(
                "crop origin %r size %r out of bounds for dims %r" % (origin, size, tuple(dims)),
                code="out_of_bounds",
            )
    return tuple(slice(o, o + s) for o, s in zip(origin, size))


def crop(vol: Volume, origin: Iterable[int], size: Iterable[int]) -> Volume:
    """Sub-volume whose voxel ``(a, b, c)`` is ``vol[origin + (a, b, c)]``."""
    sl = _window(tuple(origin), tuple(size), vol.dims)
    return type(vol)(vol.data[sl].copy())


def crop_mip_set(mips: MipAnnotationSet, origin, size) -> MipAnnotationSet:
    """Crop every annotation to the 2D window induced by a 3D crop.

    The result can hold foreground labels produced by structures lying outside
    the crop along the projection ray; :func:`mipcarve.carve.filter_labels`
    removes most of them.
    """
    origin = tuple(int(o) for o in origin)
    size = tuple(int(s) for s in size)
    sl3 = _window(origin, size, mips.volume_dims)
    out = []
    for e in mips.entries:
        sl2 = tuple(s for a, s in enumerate(sl3) if a != int(e.axis))
        out.append(LabelImage(e.data[sl2].copy(), e.axis))
    return MipAnnotationSet(tuple(out), size)
