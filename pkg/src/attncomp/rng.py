"""Deterministic random streams for synthetic data and weight init.

The generator is PCG-XSH-RR with 64-bit state and 32-bit output
(multiplier 0x5851f42d4c957f2d, per-stream odd increment), seeded the
canonical way: state starts at 0, one step, add the seed, one step.
Doubles take the top 53 bits of two consecutive outputs; normals come from
Box-Muller pairs.  The full recipe is documented so that other-language
implementations can reproduce the streams exactly.
"""

from __future__ import annotations

import numpy as np

from . import _kernels

_MASK64 = 0xFFFFFFFFFFFFFFFF
_PCG_MULT = 0x5851F42D4C957F2D


def mix_seed(*parts: int | str) -> int:
    """Collapse labels and integers into a 64-bit child seed (FNV-1a)."""
    h = 0xCBF29CE484222325
    for part in parts:
        if isinstance(part, str):
            data = part.encode("utf-8")
        else:
            data = int(part).to_bytes(8, "little", signed=False)
        for b in data:
            h = ((h ^ b) * 0x100000001B3) & _MASK64
    return h


class PcgStream:
    """One deterministic random stream.

    `seed` selects the starting point; `stream_id` selects one of 2^63
    independent sequences.  Draw order is part of the contract: callers
    must request whole tensors in a fixed order for reproducibility.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = seed & _MASK64
        self.stream_id = stream_id & 0x7FFFFFFFFFFFFFFF
        self._inc = ((self.stream_id << 1) | 1) & _MASK64
        # canonical seeding: zero state, step, add seed, step
        state = (0 * _PCG_MULT + self._inc) & _MASK64
        state = (state + self.seed) & _MASK64
        self._state = (state * _PCG_MULT + self._inc) & _MASK64

    @classmethod
    def derived(cls, seed: int, *labels: int | str) -> "PcgStream":
        """Child stream keyed by (seed, labels); independent of draw order."""
        return cls(mix_seed(seed, *labels), stream_id=mix_seed(*labels, "stream"))

    def raw32(self, count: int) -> np.ndarray:
        out, self._state = _kernels.pcg_raw32(self._state, self._inc, count)
        return out

    def uniforms(self, count: int) -> np.ndarray:
        out, self._state = _kernels.pcg_uniforms(self._state, self._inc, count)
        return out

    def gaussians(self, count: int) -> np.ndarray:
        out, self._state = _kernels.pcg_gaussians(self._state, self._inc, count)
        return out

    def gaussian_matrix(self, rows: int, cols: int) -> np.ndarray:
        return self.gaussians(rows * cols).reshape(rows, cols)

    def integers(self, count: int, upper: int) -> np.ndarray:
        """Integers in [0, upper) by 53-bit uniform scaling (upper < 2^32)."""
        if upper <= 0:
            raise ValueError("upper bound must be positive")
        return np.minimum(
            (self.uniforms(count) * upper).astype(np.int64), upper - 1
        )

    def shuffled(self, items: list) -> list:
        """Fisher-Yates shuffle driven by this stream; input untouched."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = int(self.integers(1, i + 1)[0])
            out[i], out[j] = out[j], out[i]
        return out
