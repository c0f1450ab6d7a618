"""Reproducible random streams.

Every stochastic component draws from an `RngStream`, a thin wrapper around
numpy's counter-based Philox generator keyed by (seed, stream_id). Identical
(seed, stream_id) pairs give identical sample sequences on every platform,
and derived child streams depend only on their tag, not on how many draws
the parent has made. That keeps sweep results independent of evaluation
order and worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _mix(stream_id: int, tag) -> int:
    """Derive a new 64-bit stream id from (stream_id, tag); order-free."""
    h = hashlib.blake2b(digest_size=8)
    h.update(int(stream_id & _MASK64).to_bytes(8, "little"))
    h.update(repr(tag).encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


class RngStream:
    """Counter-based random stream keyed by (seed, stream_id).

    Draw methods consume from the stream, so repeated calls yield fresh
    values (cycle-to-cycle behaviour). Re-creating the stream with the same
    key replays the identical sequence.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, tag) -> "RngStream":
        """A statistically independent stream addressed by `tag`.

        Derivation uses only (stream_id, tag); it does not advance this
        stream, so children are identical no matter when they are created.
        """
        return RngStream(self.seed, _mix(self.stream_id, tag))

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def standard_normal(self, size=None, dtype=np.float64):
        return self._gen.standard_normal(size, dtype=dtype)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int):
        return self._gen.permutation(n)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"
