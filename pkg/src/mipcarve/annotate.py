"""Centerline annotations: SWC-subset parsing, rasterization with ignore margins,
and MIP annotations derived from 3D labels.

SWC coordinates ``x y z`` are taken as voxel coordinates ``(i, j, k)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import AnnotationError, FormatError
from .volcore import (
    BACKGROUND,
    FOREGROUND,
    IGNORE,
    AxisId,
    LabelImage,
    LabelVolume,
    MipAnnotationSet,
)


@dataclass
class CenterlineSet:
    """Polylines as ``(n, ndim)`` float arrays of voxel coordinates."""

    polylines: list = field(default_factory=list)
    radii: list | None = None

    def __post_init__(self):
        self.polylines = [np.atleast_2d(np.asarray(p, dtype=np.float64)) for p in self.polylines]
        for p in self.polylines:
            if p.shape[0] < 1:
                raise AnnotationError("polyline without points")

    def __len__(self):
        return len(self.polylines)


# -- SWC ----------------------------------------------------------------------


def parse_swc(text: str) -> CenterlineSet:
    nodes = {}
    order = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 7:
            raise FormatError("line %d: expected 7 fields, got %d" % (lineno, len(parts)), code="malformed_swc")
        try:
            nid = int(parts[0])
            int(parts[1])  # structure type, validated but unused
            x, y, z, r = (float(v) for v in parts[2:6])
            parent = int(parts[6])
        except ValueError as exc:
            raise FormatError("line %d: %s" % (lineno, exc), code="malformed_swc") from exc
        if nid in nodes:
            raise FormatError("line %d: duplicate id %d" % (lineno, nid), code="malformed_swc")
        nodes[nid] = ((x, y, z), r, parent)
        order.append(nid)

    children = {nid: [] for nid in order}
    roots = []
    for nid in order:
        parent = nodes[nid][2]
        if parent == -1:
            roots.append(nid)
        elif parent not in nodes:
            raise FormatError("node %d references missing parent %d" % (nid, parent), code="dangling_parent")
        else:
            children[parent].append(nid)

    polylines, radii = [], []
    visited = set()
    # each pending entry is a path prefix that continues from its last node
    pending = [[r] for r in roots]
    while pending:
        path = pending.pop(0)
        node = path[-1]
        visited.add(node)
        while len(children[node]) == 1:
            node = children[node][0]
            path.append(node)
            visited.add(node)
        polylines.append(np.array([nodes[n][0] for n in path]))
        radii.append(np.array([nodes[n][1] for n in path]))
        for child in children[node]:
            pending.append([node, child])
    if len(visited) != len(nodes):
        raise FormatError("parent links contain a cycle", code="malformed_swc")
    return CenterlineSet(polylines, radii)


def read_swc(path) -> CenterlineSet:
    try:
        text = Path(path).read_text()
    except FileNotFoundError as exc:
        raise FormatError("no such file: %s" % path, code="not_found") from exc
    return parse_swc(text)


def format_swc(lines: CenterlineSet) -> str:
    """One chain per polyline; ids are 1-based and consecutive."""
    out = ["# id type x y z radius parent"]
    nid = 0
    for n, poly in enumerate(lines.polylines):
        radii = lines.radii[n] if lines.radii is not None else np.ones(len(poly))
        parent = -1
        for p, r in zip(poly, radii):
            nid += 1
            out.append("%d 3 %.6f %.6f %.6f %.6f %d" % (nid, p[0], p[1], p[2], float(r), parent))
            parent = nid
    return "\n".join(out) + "\n"


def write_swc(lines: CenterlineSet, path) -> None:
    Path(path).write_text(format_swc(lines))


# -- rasterization --------------------------------------------------------------


def margin_radius(margin_width: int) -> int:
    if int(margin_width) != margin_width or margin_width < 1 or margin_width % 2 == 0:
        raise AnnotationError("margin width must be an odd positive integer, got %r" % (margin_width,),
                              code="even_margin")
    return (int(margin_width) - 1) // 2


def traverse_segment(p0, p1) -> np.ndarray:
    """Voxel chain of a segment: ``max |delta|`` equal steps, each rounded half up."""
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    n = max(int(np.ceil(np.abs(p1 - p0).max())), 1)
    t = np.arange(n + 1)[:, None] / n
    pts = p0 + t * (p1 - p0)
    return np.floor(pts + 0.5).astype(np.int64)


def segment_distance(points: np.ndarray, p0, p1) -> np.ndarray:
    """Euclidean distance from each row of ``points`` to the closed segment p0-p1."""
    p0 = np.asarray(p0, dtype=np.float64)
    d = np.asarray(p1, dtype=np.float64) - p0
    rel = points - p0
    dd = float(d @ d)
    if dd == 0.0:
        return np.sqrt((rel * rel).sum(axis=-1))
    t = np.clip(rel @ d / dd, 0.0, 1.0)
    diff = rel - t[..., None] * d
    return np.sqrt((diff * diff).sum(axis=-1))


def _segments(poly: np.ndarray):
    if len(poly) == 1:
        yield poly[0], poly[0]
    for a, b in zip(poly[:-1], poly[1:]):
        yield a, b


def _rasterize(polylines, dims, margin_width) -> np.ndarray:
    r = margin_radius(margin_width)
    dims = tuple(int(d) for d in dims)
    nd = len(dims)
    labels = np.zeros(dims, dtype=np.uint8)
    near = np.zeros(dims, dtype=bool)
    hi = np.array(dims) - 1
    for poly in polylines:
        poly = np.asarray(poly, dtype=np.float64)
        if poly.shape[1] != nd:
            raise AnnotationError("polyline dimension %d != volume rank %d" % (poly.shape[1], nd))
        tol = r + 0.5
        if np.any(poly < -tol) or np.any(poly > hi + tol):
            raise AnnotationError("centerline point outside the volume bounds", code="out_of_bounds")
        for a, b in _segments(poly):
            vox = traverse_segment(a, b)
            keep = np.all((vox >= 0) & (vox <= hi), axis=1)
            labels[tuple(vox[keep].T)] = FOREGROUND
            if r == 0:
                continue
            lo_box = np.maximum(np.floor(np.minimum(a, b) - r), 0).astype(int)
            hi_box = np.minimum(np.ceil(np.maximum(a, b) + r), hi).astype(int)
            if np.any(hi_box < lo_box):
                continue
            grids = np.meshgrid(*[np.arange(l, h + 1) for l, h in zip(lo_box, hi_box)], indexing="ij")
            pts = np.stack(grids, axis=-1).astype(np.float64)
            close = segment_distance(pts, a, b) <= r
            box = tuple(slice(l, h + 1) for l, h in zip(lo_box, hi_box))
            near[box] |= close
    labels[near & (labels != FOREGROUND)] = IGNORE
    return labels


def rasterize(lines: CenterlineSet, dims, margin_width: int) -> LabelVolume:
    """Foreground voxel chains along every segment, ignore within the margin radius."""
    return LabelVolume(_rasterize(lines.polylines, dims, margin_width))


def rasterize_mip(lines2d, dims, margin_width: int, axis) -> LabelImage:
    """2D analogue of :func:`rasterize` producing an annotation for ``axis``."""
    polys = lines2d.polylines if isinstance(lines2d, CenterlineSet) else list(lines2d)
    return LabelImage(_rasterize(polys, dims, margin_width), AxisId(axis))


def add_margin(fg: np.ndarray, margin_width: int) -> np.ndarray:
    """Ternary labels from a boolean foreground mask: ignore within the margin radius."""
    r = margin_radius(margin_width)
    labels = np.where(fg, FOREGROUND, BACKGROUND).astype(np.uint8)
    if r > 0 and fg.any():
        dist = ndimage.distance_transform_edt(~fg)
        labels[(dist <= r) & ~fg] = IGNORE
    return labels


def mips_from_3d_labels(source, axes, margin_width: int, dims=None) -> MipAnnotationSet:
    """Project foreground centerline voxels along each axis and add 2D ignore margins.

    ``source`` is a LabelVolume or a CenterlineSet (rasterized with ``dims``).
    """
    axes = [AxisId(a) for a in axes]
    if len(set(axes)) != len(axes):
        raise AnnotationError("duplicate axis in %r" % (axes,))
    if isinstance(source, CenterlineSet):
        if dims is None:
            raise AnnotationError("dims are required to project a centerline set")
        fg3d = _rasterize(source.polylines, dims, 1) == FOREGROUND
    else:
        fg3d = source.data == FOREGROUND
    margin_radius(margin_width)
    entries = [LabelImage(add_margin(fg3d.any(axis=int(a)), margin_width), a) for a in axes]
    return MipAnnotationSet(tuple(entries), fg3d.shape)


def project_polylines(lines: CenterlineSet, axis) -> CenterlineSet:
    """Drop the coordinate along ``axis`` from every point."""
    keep = [a for a in range(3) if a != int(axis)]
    return CenterlineSet([p[:, keep] for p in lines.polylines])

