"""Seeded synthetic volumes of bright tubular structures with known centerlines.

Tubes are piecewise-linear random walks with a bounded turning angle, rendered
with a Gaussian cross-section ``intensity * exp(-d^2 / (2 r^2))`` where ``d`` is
the distance to the centerline and ``r`` the tube radius.  Overlapping
structures combine by maximum.  Optional clutter blobs are isotropic Gaussians.
Additive Gaussian noise is applied last and the result clipped to [0, 1].

Draw order from the seed's stream: per tube (radius, start point, start
direction, then per step a turn angle and a perpendicular direction, first
forward then backward from the start), then per blob (center, radius), then
the noise field in storage order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .annotate import CenterlineSet, segment_distance
from .rng import Stream
from .volcore import ScalarVolume

_MAX_STEPS = 256


@dataclass(frozen=True)
class PhantomConfig:
    dims: tuple = (32, 64, 64)
    tube_count: int = 4
    tube_radius_range: tuple = (1.0, 1.5)
    intensity: float = 0.8
    noise_sigma: float = 0.05
    clutter_blob_count: int = 0
    rng_seed: int = 0
    step_length: float = 4.0
    max_turn_deg: float = 30.0
    blob_radius_range: tuple = (1.5, 3.0)
    blob_intensity: float = 0.8

    def validate(self):
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError("dims must be three positive integers")
        if self.tube_count < 1:
            raise ValueError("tube_count must be >= 1")
        lo, hi = self.tube_radius_range
        if not 0 < lo <= hi <= min(self.dims) / 4:
            raise ValueError("tube radii must satisfy 0 < min <= max <= min(dims)/4")
        if not 0 < self.intensity <= 1:
            raise ValueError("intensity must be in (0, 1]")
        if self.noise_sigma < 0 or self.clutter_blob_count < 0:
            raise ValueError("noise_sigma and clutter_blob_count must be non-negative")
        if self.step_length <= 0 or not 0 <= self.max_turn_deg <= 90:
            raise ValueError("step_length must be positive and max_turn_deg in [0, 90]")
        if not 0 < self.blob_intensity <= 1 or self.blob_radius_range[0] <= 0:
            raise ValueError("blob parameters out of range")

    @classmethod
    def from_text(cls, text: str) -> "PhantomConfig":
        """Parse ``key=value`` lines (``#`` comments); tuples are comma separated."""
        kwargs = {}
        fields = cls.__dataclass_fields__
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or key not in fields:
                raise ValueError("bad config line %r" % raw)
            default = fields[key].default
            if isinstance(default, tuple):
                kind = int if key == "dims" else float
                kwargs[key] = tuple(kind(v) for v in value.split(","))
            else:
                kwargs[key] = type(default)(value.strip())
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def _unit(v):
    return v / np.linalg.norm(v)


def _random_direction(stream: Stream):
    while True:
        v = stream.normal(3)
        n = float(np.linalg.norm(v))
        if n > 1e-12:
            return v / n


def _turn(direction, stream: Stream, max_turn: float):
    angle = stream.uniform() * max_turn
    perp = _random_direction(stream)
    perp = perp - (perp @ direction) * direction
    norm = float(np.linalg.norm(perp))
    if norm < 1e-12 or angle == 0.0:
        return direction
    perp /= norm
    return _unit(math.cos(angle) * direction + math.sin(angle) * perp)


def _clip_step(p, q, hi):
    """Largest t in [0, 1] keeping p + t (q - p) inside [0, hi]."""
    t = 1.0
    d = q - p
    for a in range(3):
        if q[a] < 0:
            t = min(t, (0 - p[a]) / d[a])
        elif q[a] > hi[a]:
            t = min(t, (hi[a] - p[a]) / d[a])
    return max(t, 0.0)


def _walk(start, direction, stream, cfg, hi):
    pts = []
    p = start
    max_turn = math.radians(cfg.max_turn_deg)
    for _ in range(_MAX_STEPS):
        q = p + cfg.step_length * direction
        t = _clip_step(p, q, hi)
        if t < 1.0:
            if t > 0:
                pts.append(p + t * (q - p))
            break
        pts.append(q)
        p = q
        direction = _turn(direction, stream, max_turn)
    return pts


def random_tube(stream: Stream, cfg: PhantomConfig):
    hi = np.array(cfg.dims, dtype=np.float64) - 1
    lo_r, hi_r = cfg.tube_radius_range
    radius = lo_r + (hi_r - lo_r) * stream.uniform()
    start = stream.uniform(3) * hi
    direction = _random_direction(stream)
    forward = _walk(start, direction, stream, cfg, hi)
    backward = _walk(start, -direction, stream, cfg, hi)
    pts = np.array(backward[::-1] + [start] + forward)
    return pts, radius


def _grid(dims):
    return np.stack(np.meshgrid(*[np.arange(d, dtype=np.float64) for d in dims], indexing="ij"), axis=-1)


def render_tube(vol: np.ndarray, pts: np.ndarray, radius: float, intensity: float) -> None:
    """Max-composite a Gaussian-profile tube into ``vol`` in place."""
    hi = np.array(vol.shape) - 1
    reach = 4.0 * radius
    segs = [(pts[0], pts[0])] if len(pts) == 1 else list(zip(pts[:-1], pts[1:]))
    for a, b in segs:
        lo_box = np.maximum(np.floor(np.minimum(a, b) - reach), 0).astype(int)
        hi_box = np.minimum(np.ceil(np.maximum(a, b) + reach), hi).astype(int)
        if np.any(hi_box < lo_box):
            continue
        box = tuple(slice(l, h + 1) for l, h in zip(lo_box, hi_box))
        g = _grid(tuple(hi_box - lo_box + 1)) + lo_box
        d = segment_distance(g, a, b)
        np.maximum(vol[box], intensity * np.exp(-(d * d) / (2.0 * radius * radius)), out=vol[box])


def render_blob(vol: np.ndarray, center, radius: float, amplitude: float) -> None:
    hi = np.array(vol.shape) - 1
    reach = 4.0 * radius
    lo_box = np.maximum(np.floor(center - reach), 0).astype(int)
    hi_box = np.minimum(np.ceil(center + reach), hi).astype(int)
    box = tuple(slice(l, h + 1) for l, h in zip(lo_box, hi_box))
    g = _grid(tuple(hi_box - lo_box + 1)) + lo_box
    r2 = ((g - center) ** 2).sum(axis=-1)
    np.maximum(vol[box], amplitude * np.exp(-r2 / (2.0 * radius * radius)), out=vol[box])


def generate(cfg: PhantomConfig, return_clean: bool = False):
    """Return (volume, centerlines), plus the noise-free render if ``return_clean``."""
    cfg.validate()
    stream = Stream(cfg.rng_seed)
    dims = tuple(int(d) for d in cfg.dims)
    clean = np.zeros(dims, dtype=np.float64)
    polylines, radii = [], []
    for _ in range(cfg.tube_count):
        pts, radius = random_tube(stream, cfg)
        render_tube(clean, pts, radius, cfg.intensity)
        polylines.append(pts)
        radii.append(np.full(len(pts), radius))
    hi = np.array(dims, dtype=np.float64) - 1
    for _ in range(cfg.clutter_blob_count):
        center = stream.uniform(3) * hi
        lo_r, hi_r = cfg.blob_radius_range
        render_blob(clean, center, lo_r + (hi_r - lo_r) * stream.uniform(), cfg.blob_intensity)
    noisy = clean
    if cfg.noise_sigma > 0:
        noisy = clean + cfg.noise_sigma * stream.normal(clean.size).reshape(dims)
    vol = ScalarVolume(np.clip(noisy, 0.0, 1.0).astype(np.float32))
    lines = CenterlineSet(polylines, radii)
    if return_clean:
        return vol, lines, clean
    return vol, lines
