"""Fixed-capacity sample buffers with time-weighted reservoir sampling.

Each arriving sample draws u ~ Uniform(0, 1) and competes with stored items
on the key u^(1/w), where the weight w = q^frame grows with the frame index
for q > 1. The buffer keeps the largest keys, so recent samples are retained
preferentially while old ones age out stochastically. q = 1 reduces to
classical uniform reservoir sampling.

Keys are compared in the log domain, rebased to the current frame: the raw
weight q^frame overflows within a few hundred frames at practical q, but
ordering only depends on age differences. Items store (u, frame) so the
rebased key ln(u) * q^(age) is exact for any reference frame; very old items
saturate to -inf, which is the correct limit (evicted first).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatchError


@dataclass
class BufferedSample:
    feature: np.ndarray
    frame_index: int
    u: float
    log_u: float


@dataclass
class InsertResult:
    """What an insert did: appended, replaced some slot, or rejected.

    On replacement the evicted slot is deleted and the new sample appended
    at the end, so downstream per-slot mirrors (basis columns) can apply
    the same delete-then-append reordering.
    """

    inserted: bool
    evicted_index: Optional[int] = None


def effective_log_key(item: BufferedSample, reference_frame: int, q: float) -> float:
    """Rebased log key ln(u) * q^(reference_frame - item.frame_index).

    Monotone transform of the raw key u^(1/q^frame) shared by all items at
    a common reference frame, so orderings agree. Saturates to -inf when
    the age term overflows.
    """
    age = reference_frame - item.frame_index
    if age < 0:
        raise ValueError(f"reference frame {reference_frame} precedes item frame {item.frame_index}")
    try:
        weight = q ** age
    except OverflowError:
        return float("-inf")
    key = item.log_u * weight
    return key if np.isfinite(key) else float("-inf")


class ReservoirBuffer:
    """At most ``capacity`` samples of one class, plus their sampling keys."""

    def __init__(self, capacity: int, q: float, class_label: str, dim: Optional[int] = None):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        if q <= 0:
            raise ValueError(f"time-weighted factor must be positive, got {q}")
        self.capacity = int(capacity)
        self.q = float(q)
        self.class_label = class_label
        self.dim = dim
        self.items: list[BufferedSample] = []
        self.last_frame_index = -1
        # Cached argmin slot; valid because pairwise key order does not
        # depend on the reference frame. Invalidated on any content change.
        self._min_slot: Optional[int] = None

    def __len__(self) -> int:
        return len(self.items)

    def feature_matrix(self) -> np.ndarray:
        """Stored features as a d x n column matrix."""
        if not self.items:
            raise ValueError("buffer is empty")
        return np.stack([it.feature for it in self.items], axis=1)

    def min_key_item(self, reference_frame: int) -> tuple[int, float]:
        """Slot index and log key of the smallest-key item; ties pick the lowest index."""
        if not self.items:
            raise ValueError("buffer is empty")
        keys = [effective_log_key(it, reference_frame, self.q) for it in self.items]
        idx = int(np.argmin(keys))
        return idx, keys[idx]

    def _draw_u(self, rng: np.random.Generator) -> float:
        u = float(rng.random())
        while u == 0.0:
            u = float(rng.random())
        return u

    def copy(self) -> "ReservoirBuffer":
        """Shallow-ish copy: items are shared (treated as immutable), list is new."""
        dup = ReservoirBuffer(self.capacity, self.q, self.class_label, self.dim)
        dup.items = list(self.items)
        dup.last_frame_index = self.last_frame_index
        dup._min_slot = self._min_slot
        return dup

    def insert(self, sample, frame_index: int, rng: np.random.Generator) -> InsertResult:
        """Offer one sample from the stream.

        Always consumes one uniform draw, so replay with the same generator
        state is reproducible regardless of accept/reject outcomes. Under
        capacity the sample is appended; at capacity it replaces the
        minimum-key item iff its own key is larger.
        """
        feat = np.asarray(sample, dtype=np.float64)
        if self.dim is None:
            self.dim = feat.shape[0]
        if feat.shape != (self.dim,):
            raise DimensionMismatchError(f"sample has shape {feat.shape}, buffer holds ({self.dim},)")
        if frame_index < self.last_frame_index:
            raise ValueError(
                f"stream order violated: frame {frame_index} after {self.last_frame_index}"
            )
        self.last_frame_index = frame_index
        u = self._draw_u(rng)
        item = BufferedSample(feature=feat, frame_index=frame_index, u=u, log_u=float(np.log(u)))

        if len(self.items) < self.capacity:
            self.items.append(item)
            self._min_slot = None
            return InsertResult(inserted=True)

        if self._min_slot is None:
            self._min_slot, _ = self.min_key_item(frame_index)
        evict = self._min_slot
        min_key = effective_log_key(self.items[evict], frame_index, self.q)
        if min_key == float("-inf"):
            # Saturation can create new ties; rescan so ties break by lowest index.
            evict, min_key = self.min_key_item(frame_index)
            self._min_slot = evict
        # New sample has zero age at its own frame, so its rebased key is ln(u).
        if item.log_u > min_key:
            del self.items[evict]
            self.items.append(item)
            self._min_slot = None
            return InsertResult(inserted=True, evicted_index=evict)
        return InsertResult(inserted=False)
