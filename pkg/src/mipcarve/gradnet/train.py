"""Training loop: random crops, per-mode supervision, ADAM."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .. import carve, supervise
from ..errors import AnnotationError, NumericError, ShapeError
from ..rng import Stream
from ..volcore import AxisId, LabelVolume, MipAnnotationSet, ScalarVolume, crop, crop_mip_set
from .network import NetConfig, NetState, backpropagate, build_graph, init_state
from .optim import adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Supervision:
    """``kind`` is ``"3d"``, ``"mip"`` or ``"slices"``."""

    kind: str = "3d"
    axes: tuple = ()
    slice_axis: int = 0
    slice_count: int = 0

    @classmethod
    def parse(cls, text: str) -> "Supervision":
        """Parse ``3d``, ``mip:012`` (any subset of axes) or ``slices:<axis>:<count>``."""
        text = text.strip().lower()
        if text == "3d":
            return cls("3d")
        m = re.fullmatch(r"mip:([012]{1,3})", text)
        if m:
            axes = tuple(int(ch) for ch in m.group(1))
            if len(set(axes)) != len(axes):
                raise ValueError("duplicate axis in supervision spec %r" % text)
            return cls("mip", tuple(sorted(axes)))
        m = re.fullmatch(r"slices:([012]):(\d+)", text)
        if m and int(m.group(2)) >= 1:
            return cls("slices", (), int(m.group(1)), int(m.group(2)))
        raise ValueError("malformed supervision spec %r" % text)

    def __str__(self):
        if self.kind == "mip":
            return "mip:" + "".join(str(a) for a in self.axes)
        if self.kind == "slices":
            return "slices:%d:%d" % (self.slice_axis, self.slice_count)
        return "3d"


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    weight_decay: float = 1e-4
    iterations: int = 2000
    crop_size: tuple = (16, 32, 32)
    rng_seed: int = 0
    supervision: Supervision = field(default_factory=Supervision)
    normalization: supervise.Normalization = supervise.Normalization.MEAN_OVER_LABELED

    def __post_init__(self):
        if isinstance(self.supervision, str):
            self.supervision = Supervision.parse(self.supervision)
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        for name in ("learning_rate", "beta1", "beta2", "adam_epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError("%s must be positive" % name)
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass
class TrainingVolume:
    image: ScalarVolume
    labels: LabelVolume | None = None
    mips: MipAnnotationSet | None = None


def slice_positions(length: int, count: int) -> list[int]:
    """``count`` evenly spaced slice indices strictly inside ``[0, length)``."""
    return sorted({(m + 1) * length // (count + 1) for m in range(count)})


def _as_training_volume(item) -> TrainingVolume:
    if isinstance(item, TrainingVolume):
        return item
    return TrainingVolume(*item)


def _check_dataset(dataset, tc: TrainConfig):
    sup = tc.supervision
    for n, item in enumerate(dataset):
        if any(d < s for d, s in zip(item.image.dims, tc.crop_size)):
            raise ShapeError("training volume %d is smaller than the crop size" % n)
        if sup.kind in ("3d", "slices") and item.labels is None:
            raise AnnotationError("volume %d has no 3D labels for %s supervision" % (n, sup), code="missing_annotations")
        if sup.kind == "mip":
            have = set() if item.mips is None else set(item.mips.axes)
            missing = [a for a in sup.axes if AxisId(a) not in have]
            if missing:
                raise AnnotationError(
                    "volume %d lacks MIP annotations for axes %r" % (n, missing), code="missing_annotations"
                )


def crop_loss(pred: ScalarVolume, item: TrainingVolume, origin, size, tc: TrainConfig):
    """Loss and prediction gradient for one crop under the configured supervision."""
    sup = tc.supervision
    if sup.kind == "3d":
        return supervise.loss3d(pred, crop(item.labels, origin, size), tc.normalization)
    if sup.kind == "mip":
        chosen = MipAnnotationSet(tuple(item.mips[AxisId(a)] for a in sup.axes), item.mips.volume_dims)
        mips = crop_mip_set(chosen, origin, size)
        if len(mips) >= 2:
            mips = carve.filter_labels(mips)
        return supervise.loss_mip(pred, mips, tc.normalization)
    ax = sup.slice_axis
    lo = origin[ax]
    wanted = slice_positions(item.labels.dims[ax], sup.slice_count)
    local = [s - lo for s in wanted if lo <= s < lo + size[ax]]
    return supervise.loss_slices(pred, crop(item.labels, origin, size), ax, local, tc.normalization)


def train(dataset, tc: TrainConfig, cfg: NetConfig = NetConfig(), seed: int | None = None,
          state: NetState | None = None, dtype=np.float32):
    """Train from scratch (or from ``state``); returns (final state, per-iteration losses)."""
    dataset = [_as_training_volume(d) for d in dataset]
    if not dataset:
        raise ShapeError("empty training set")
    _check_dataset(dataset, tc)
    seed = tc.rng_seed if seed is None else seed
    root = Stream(seed)
    if state is None:
        state = init_state(cfg, root.spawn(1).seed, dtype=dtype)
    sampler = root.spawn(2)
    size = tuple(int(s) for s in tc.crop_size)
    trace = []
    for it in range(tc.iterations):
        item = dataset[sampler.integers(len(dataset))]
        origin = tuple(sampler.integers(d - s + 1) for d, s in zip(item.image.dims, size))
        x = crop(item.image, origin, size)
        out, params = build_graph(state, cfg, x.data)
        pred = ScalarVolume(out.value[0])
        report, pred_grad = crop_loss(pred, item, origin, size, tc)
        if not math.isfinite(report.total):
            raise NumericError("non-finite loss at iteration %d" % (it + 1), code="nonfinite_loss")
        grads = backpropagate(state, out, params, pred_grad.astype(state.parameters.dtype))
        state = adam_step(state, grads, tc)
        trace.append(report.total)
        if (it + 1) % 200 == 0:
            log.info("iter %d  loss %.5f  (%s)", it + 1, float(np.mean(trace[-200:])), tc.supervision)
    return state, trace

