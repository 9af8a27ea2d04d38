"""Deterministic, splittable random streams.

Every source of randomness in the library flows through :class:`RngStream`.
A stream is identified by ``(seed, stream_id)`` and backed by a counter-based
bit generator (Philox), so an identical identity plus an identical call
sequence reproduces the same outputs on every platform.  Independent
sub-streams are obtained either by ``split()`` (fresh child per call) or by
``child(tag)`` (a pure function of the parent identity and the tag, so the
same tag always names the same stream).
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _mix(*words: int) -> int:
    h = 0
    for w in words:
        h = _splitmix64(h ^ (w & _MASK64))
    return h


def _tag_word(tag: int | str) -> int:
    if isinstance(tag, int):
        return tag & _MASK64
    h = len(tag) & _MASK64
    for byte in tag.encode("utf-8"):
        h = _splitmix64(h ^ byte)
    return h


class RngStream:
    """Seeded stream of random values with deterministic splitting.

    The (seed, stream_id) pair keys a Philox counter-based generator, so the
    stream's state is exactly the number of values drawn so far.  Children
    get fresh keys, which makes their outputs independent of anything the
    parent draws later.
    """

    def __init__(self, seed: int, stream_id: int = 0) -> None:
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self._spawned = 0
        self._gen = np.random.Generator(
            np.random.Philox(key=(self.seed << 64) | self.stream_id)
        )

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def normal(self, shape: int | tuple[int, ...]) -> np.ndarray:
        """Standard-normal draws of the given shape, float64."""
        return self._gen.standard_normal(size=shape, dtype=np.float64)

    def integers(self, low: int, high: int, size: int | None = None):
        """Uniform integers in [low, high)."""
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        """Uniform random permutation of range(n)."""
        return self._gen.permutation(n)

    def split(self) -> "RngStream":
        """Fresh child stream; each call yields a distinct, independent child."""
        word = _mix(self.stream_id, 1, self._spawned)
        self._spawned += 1
        return RngStream(self.seed, word)

    def child(self, tag: int | str) -> "RngStream":
        """Named child stream.

        Pure function of (seed, stream_id, tag): calling twice with the same
        tag returns streams that replay identically, and the parent's counter
        is untouched.  Used wherever a reproducible sub-stream must be
        re-derivable (fixed sketches, per-layer init).
        """
        return RngStream(self.seed, _mix(self.stream_id, 2, _tag_word(tag)))
