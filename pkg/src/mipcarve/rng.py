"""Portable random stream.

All randomness in the toolkit comes from :class:`Stream`, which draws raw
64-bit words from the PCG64 generator (XSL-RR 128/64, seeded through NumPy's
``SeedSequence``) and converts them with fixed, documented rules so that the
same seed reproduces the same numbers in any implementation of those rules:

* ``uniform``: ``(word >> 11) * 2**-53``, one word per value, in ``[0, 1)``.
* ``integers(high)``: ``floor(uniform * high)``.
* ``normal``: Box-Muller on consecutive word pairs ``(u1, u2)``, taking
  ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``; one value per pair.

Values are consumed strictly in call order.
"""

from __future__ import annotations

import numpy as np

_INV_2_53 = 1.0 / (1 << 53)


class Stream:
    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._bitgen = np.random.PCG64(self.seed)

    def raw(self, n: int) -> np.ndarray:
        return self._bitgen.random_raw(int(n)).astype(np.uint64)

    def uniform(self, n: int | None = None):
        words = self.raw(1 if n is None else n)
        u = (words >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return float(u[0]) if n is None else u

    def integers(self, high: int, n: int | None = None):
        u = self.uniform(1 if n is None else n)
        v = np.minimum(np.floor(u * high), high - 1).astype(np.int64)
        return int(v[0]) if n is None else v

    def normal(self, n: int | None = None):
        m = 1 if n is None else int(n)
        u = self.uniform(2 * m).reshape(m, 2)
        z = np.sqrt(-2.0 * np.log1p(-u[:, 0])) * np.cos(2.0 * np.pi * u[:, 1])
        return float(z[0]) if n is None else z

    def spawn(self, tag: int) -> "Stream":
        """Independent child stream derived from this stream's seed and ``tag``."""
        mixed = (self.seed * 0x9E3779B97F4A7C15 + int(tag) * 0xBF58476D1CE4E5B9 + 1) & 0xFFFFFFFFFFFFFFFF
        return Stream(mixed)
