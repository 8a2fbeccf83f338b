"""NET1 binary format for trained networks.

Layout (little endian)::

    bytes 0-3   magic "NET1"
    5 x u32     in_channels, base_channels, levels, kernel, residual_blocks_per_level
    u64         parameter count n
    n x f32     parameters (segment order of ``param_layout``)
    n x f32     ADAM first moments
    n x f32     ADAM second moments
    u64         step count
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .network import NetConfig, NetState, _offsets

MAGIC = b"NET1"
_HEAD = struct.Struct("<4s5IQ")


def encode_net(state: NetState, cfg: NetConfig) -> bytes:
    n = state.parameters.size
    head = _HEAD.pack(
        MAGIC, cfg.in_channels, cfg.base_channels, cfg.levels, cfg.kernel, cfg.residual_blocks_per_level, n
    )
    body = b"".join(np.asarray(a, dtype="<f4").tobytes() for a in (state.parameters, state.adam_m, state.adam_v))
    return head + body + struct.pack("<Q", state.step_count)


def decode_net(buf: bytes) -> tuple[NetState, NetConfig]:
    if len(buf) < _HEAD.size:
        raise FormatError("truncated network header", code="truncated")
    magic, cin, base, levels, kernel, blocks, n = _HEAD.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError("bad magic %r" % magic, code="bad_magic")
    try:
        cfg = NetConfig(cin, base, levels, kernel, blocks)
    except ValueError as exc:
        raise FormatError(str(exc), code="bad_config") from exc
    layout, total = _offsets(cfg)
    if total != n:
        raise FormatError("parameter count %d does not match config (%d)" % (n, total), code="bad_config")
    if len(buf) != _HEAD.size + 12 * n + 8:
        raise FormatError("network payload has wrong length", code="truncated")
    off = _HEAD.size
    arrays = []
    for _ in range(3):
        arrays.append(np.frombuffer(buf, dtype="<f4", count=n, offset=off).astype(np.float32))
        off += 4 * n
    (step,) = struct.unpack_from("<Q", buf, off)
    return NetState(arrays[0], arrays[1], arrays[2], int(step), layout), cfg


def save_net(state: NetState, cfg: NetConfig, path) -> None:
    Path(path).write_bytes(encode_net(state, cfg))


def load_net(path) -> tuple[NetState, NetConfig]:
    try:
        buf = Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise FormatError("no such file: %s" % path, code="not_found") from exc
    return decode_net(buf)
