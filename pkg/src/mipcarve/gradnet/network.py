"""Compact residual U-Net with two pooling steps.

Layout per resolution level (channels ``base * 2**level``)::

    encoder:  conv3 -> ReLU -> residual block(s)         then 2x2x2 max pool
    decoder:  upsample x2 -> conv1 -> concat skip -> conv3 -> ReLU -> residual block(s)
    head:     conv1 -> logistic

A residual block is ``relu(x + conv3(relu(conv3(x))))``.  Convolutions are
zero padded, so the output has the input's spatial dims.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from ..rng import Stream
from ..volcore import ScalarVolume
from . import engine as E


@dataclass(frozen=True)
class NetConfig:
    in_channels: int = 1
    base_channels: int = 8
    levels: int = 3
    kernel: int = 3
    residual_blocks_per_level: int = 1

    def __post_init__(self):
        if self.levels != 3:
            raise ValueError("levels is fixed at 3 (two pooling steps)")
        if self.kernel != 3:
            raise ValueError("kernel is fixed at 3")
        if self.in_channels < 1 or self.base_channels < 1 or self.residual_blocks_per_level < 1:
            raise ValueError("channel and block counts must be positive")

    @property
    def divisor(self) -> int:
        return 2 ** (self.levels - 1)


def param_layout(cfg: NetConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) list of every parameter array."""
    layout = []

    def conv(name, cin, cout, k):
        layout.append((name + ".w", (cout, cin, k, k, k)))
        layout.append((name + ".b", (cout,)))

    def blocks(prefix, ch):
        for r in range(cfg.residual_blocks_per_level):
            conv("%s.res%d.a" % (prefix, r), ch, ch, 3)
            conv("%s.res%d.b" % (prefix, r), ch, ch, 3)

    widths = [cfg.base_channels * 2**lv for lv in range(cfg.levels)]
    cin = cfg.in_channels
    for lv, ch in enumerate(widths):
        conv("enc%d.in" % lv, cin, ch, 3)
        blocks("enc%d" % lv, ch)
        cin = ch
    for lv in reversed(range(cfg.levels - 1)):
        ch = widths[lv]
        conv("dec%d.up" % lv, widths[lv + 1], ch, 1)
        conv("dec%d.in" % lv, 2 * ch, ch, 3)
        blocks("dec%d" % lv, ch)
    conv("head", widths[0], 1, 1)
    return layout


@dataclass
class NetState:
    """Flat parameter vector plus ADAM moments.

    ``layout`` maps segment names to (offset, shape) within ``parameters``.
    """

    parameters: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray
    step_count: int = 0
    layout: list = field(default_factory=list)

    def segment(self, name: str, vec: np.ndarray | None = None) -> np.ndarray:
        vec = self.parameters if vec is None else vec
        for seg_name, offset, shape in self.layout:
            if seg_name == name:
                return vec[offset:offset + int(np.prod(shape))].reshape(shape)
        raise KeyError(name)

    def copy(self) -> "NetState":
        return NetState(
            self.parameters.copy(), self.adam_m.copy(), self.adam_v.copy(), self.step_count, list(self.layout)
        )


def _offsets(cfg: NetConfig):
    out = []
    offset = 0
    for name, shape in param_layout(cfg):
        out.append((name, offset, shape))
        offset += int(np.prod(shape))
    return out, offset


def init_state(cfg: NetConfig, seed: int, dtype=np.float32) -> NetState:
    """Fan-in scaled uniform weights, zero biases."""
    layout, total = _offsets(cfg)
    params = np.zeros(total, dtype=np.float64)
    stream = Stream(seed)
    for name, offset, shape in layout:
        size = int(np.prod(shape))
        if name.endswith(".w"):
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            params[offset:offset + size] = (2.0 * stream.uniform(size) - 1.0) * bound
    params = params.astype(dtype)
    return NetState(params, np.zeros_like(params), np.zeros_like(params), 0, layout)


def _check_input(cfg: NetConfig, x: np.ndarray):
    if x.ndim != 3:
        raise ShapeError("network input must be a 3D volume")
    if any(d % cfg.divisor for d in x.shape):
        raise ShapeError(
            "dims not divisible by %d: %r" % (cfg.divisor, tuple(x.shape)), code="indivisible_dims"
        )


def build_graph(state: NetState, cfg: NetConfig, x: np.ndarray, requires_grad: bool = True):
    """Run the network, returning (output tensor, {name: parameter tensor})."""
    _check_input(cfg, x)
    dtype = state.parameters.dtype
    params = {
        name: E.Tensor(state.segment(name), requires_grad=requires_grad, name=name)
        for name, _, _ in state.layout
    }

    def conv(h, name):
        return E.conv3d(h, params[name + ".w"], params[name + ".b"])

    def blocks(h, prefix):
        for r in range(cfg.residual_blocks_per_level):
            t = E.relu(conv(h, "%s.res%d.a" % (prefix, r)))
            t = conv(t, "%s.res%d.b" % (prefix, r))
            h = E.relu(E.add(h, t))
        return h

    h = E.Tensor(np.asarray(x, dtype=dtype)[None])
    skips = []
    for lv in range(cfg.levels):
        if lv > 0:
            h = E.maxpool2(h)
        h = E.relu(conv(h, "enc%d.in" % lv))
        h = blocks(h, "enc%d" % lv)
        skips.append(h)
    for lv in reversed(range(cfg.levels - 1)):
        up = conv(E.upsample2(h), "dec%d.up" % lv)
        h = E.relu(conv(E.concat(up, skips[lv]), "dec%d.in" % lv))
        h = blocks(h, "dec%d" % lv)
    out = E.sigmoid(conv(h, "head"))
    return out, params


def forward(state: NetState, cfg: NetConfig, volume) -> ScalarVolume:
    """Per-voxel foreground probabilities, same dims as the input."""
    x = volume.data if isinstance(volume, ScalarVolume) else np.asarray(volume)
    out, _ = build_graph(state, cfg, x, requires_grad=False)
    return ScalarVolume(out.value[0])


def gather_grads(state: NetState, params: dict) -> np.ndarray:
    flat = np.zeros_like(state.parameters)
    for name, offset, shape in state.layout:
        g = params[name].grad
        if g is not None:
            flat[offset:offset + int(np.prod(shape))] = g.reshape(-1)
    return flat


def backpropagate(state: NetState, out: E.Tensor, params: dict, loss_grad: np.ndarray) -> np.ndarray:
    """Push d(loss)/d(prediction) through an already-built graph."""
    if loss_grad.shape != out.shape[1:]:
        raise ShapeError("loss gradient dims %r != output dims %r" % (loss_grad.shape, out.shape[1:]))
    out.backward(np.asarray(loss_grad, dtype=out.value.dtype)[None])
    return gather_grads(state, params)


def backward(state: NetState, cfg: NetConfig, volume, loss_grad) -> np.ndarray:
    """Gradient of the loss with respect to the flat parameter vector."""
    x = volume.data if isinstance(volume, ScalarVolume) else np.asarray(volume)
    g = loss_grad.data if isinstance(loss_grad, ScalarVolume) else np.asarray(loss_grad)
    if g.shape != x.shape:
        raise ShapeError("loss gradient dims %r != input dims %r" % (g.shape, x.shape))
    out, params = build_graph(state, cfg, x)
    return backpropagate(state, out, params, g)
