"""Exact running counts of pairwise and 3-way collisions.

Seeing a label whose previous count was ``c`` adds ``c`` new pairs and
``C(c, 2)`` new triples. Totals are Python ints, so they never overflow.
"""

from __future__ import annotations

import numpy as np

from .errors import CapacityExceeded

DEFAULT_CAPACITY = 1 << 40
# above this count the int64 chunk arithmetic for C(c, 2) could overflow
_VECTOR_LIMIT = 1 << 30


class CollisionTracker:
    """Per-label counts plus the collision totals ``s2`` and ``t3``.

    Labels are dense non-negative integer indices, as produced by the
    sample oracles. Only counts are kept, never the sample sequence.
    """

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        self.capacity = capacity
        self.counts = np.zeros(64, dtype=np.int64)
        self.m = 0
        self.s2 = 0
        self.t3 = 0
        self._max_count = 0

    def __repr__(self) -> str:
        return f"CollisionTracker(m={self.m}, s2={self.s2}, t3={self.t3})"

    def _grow(self, top: int) -> None:
        if top >= self.counts.size:
            size = max(top + 1, 2 * self.counts.size)
            counts = np.zeros(size, dtype=np.int64)
            counts[: self.counts.size] = self.counts
            self.counts = counts

    def _check_capacity(self, extra: int) -> None:
        if self.m + extra > self.capacity:
            raise CapacityExceeded(
                f"observing {extra} more samples would exceed the cap of {self.capacity}"
            )

    def observe(self, label: int) -> tuple[int, int]:
        self._check_capacity(1)
        label = int(label)
        if label < 0:
            raise ValueError(f"labels must be non-negative indices, got {label}")
        self._grow(label)
        c = int(self.counts[label])
        self.counts[label] = c + 1
        self.m += 1
        self.s2 += c
        self.t3 += c * (c - 1) // 2
        self._max_count = max(self._max_count, c + 1)
        return self.s2, self.t3

    def count(self, label: int) -> int:
        return int(self.counts[label]) if 0 <= label < self.counts.size else 0

    def feed(self, labels, s2_target: int | None = None, t3_limit: int | None = None) -> int:
        """Observe samples from ``labels`` in order until a stopping rule fires.

        Stops right after the first sample that makes ``s2 >= s2_target`` or
        ``t3 > t3_limit``; otherwise consumes everything. Returns the number
        of samples consumed, which is all the caller should advance past.
        """
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size == 0:
            return 0
        if s2_target is not None and self.s2 >= s2_target:
            return 0
        if t3_limit is not None and self.t3 > t3_limit:
            return 0
        if self._max_count + labels.size > _VECTOR_LIMIT:
            return self._feed_slow(labels, s2_target, t3_limit)

        # prior count of each sample = count before the chunk + earlier hits in it
        order = np.argsort(labels, kind="stable")
        ordered = labels[order]
        starts = np.flatnonzero(np.r_[True, ordered[1:] != ordered[:-1]])
        run = np.arange(labels.size) - np.repeat(starts, np.diff(np.r_[starts, labels.size]))
        self._grow(int(ordered[-1]))
        prior = np.empty(labels.size, dtype=np.int64)
        prior[order] = run + self.counts[ordered]

        stop = labels.size
        if s2_target is not None:
            cum2 = np.cumsum(prior)
            hit = np.searchsorted(cum2, s2_target - self.s2, side="left")
            stop = min(stop, int(hit) + 1)
        if t3_limit is not None:
            cum3 = np.cumsum(prior * (prior - 1) // 2)
            hit = np.searchsorted(cum3, t3_limit - self.t3, side="right")
            stop = min(stop, int(hit) + 1)

        self._check_capacity(stop)
        used = prior[:stop]
        self.s2 += int(used.sum())
        self.t3 += int((used * (used - 1) // 2).sum())
        np.add.at(self.counts, labels[:stop], 1)
        self.m += stop
        self._max_count = max(self._max_count, int(used.max()) + 1)
        return stop

    def _feed_slow(self, labels, s2_target, t3_limit) -> int:
        for i, label in enumerate(labels.tolist()):
            s2, t3 = self.observe(label)
            if (s2_target is not None and s2 >= s2_target) or (
                t3_limit is not None and t3 > t3_limit
            ):
                return i + 1
        return labels.size

    def snapshot(self) -> dict:
        return {"m": self.m, "s2": self.s2, "t3": self.t3, "distinct": int(np.count_nonzero(self.counts))}
