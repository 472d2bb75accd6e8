"""Metric-weighted least squares over a maintained basis.

Solves min_x (y - P x)^T M (y - P x) in closed form, x* = H P^T M y with
H = (P^T M P)^{-1}, and keeps H current under four kinds of change without
re-inverting from scratch:

* column expansion (block bordering of the inverse),
* column removal (Schur complement downdate),
* column replacement (removal followed by expansion),
* rank-one change of the weighting matrix M (Sherman-Morrison on P^T M P).

A full rebuild recomputes H directly and falls back to the pseudoinverse
when P^T M P is singular; it also serves as the drift control for long
chains of incremental edits.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateRemovalError,
    DimensionMismatchError,
    EmptyBasisError,
    NearSingularError,
    NearSingularExpansionError,
    RankOneSingularityError,
    StaleMetricError,
)

log = logging.getLogger(__name__)

# Relative cutoffs for the incremental pivots and pseudoinverse truncation.
EPS_SCHUR = 1e-10
EPS_SM = 1e-10
EPS_PINV = 1e-10

DEFAULT_REBUILD_PERIOD = 200


class MetricMatrix:
    """Symmetric d x d weighting matrix with a revision counter.

    Every in-place change must bump ``version`` so that basis caches can
    detect staleness. The triplet learning rule keeps the entries exactly
    symmetric by construction; ``max_asymmetry`` exists for audits.
    """

    __slots__ = ("m", "version")

    def __init__(self, entries: np.ndarray, version: int = 0):
        m = np.array(entries, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatchError(f"metric must be square, got shape {m.shape}")
        self.m = m
        self.version = version

    @classmethod
    def identity(cls, dim: int) -> "MetricMatrix":
        if dim < 1:
            raise DimensionMismatchError(f"metric dimension must be positive, got {dim}")
        return cls(np.eye(dim))

    @property
    def dim(self) -> int:
        return self.m.shape[0]

    def rank_one_update(self, direction: np.ndarray, scale: float) -> None:
        """Apply M <- M + scale * a a^T in place and bump the revision."""
        a = np.asarray(direction, dtype=np.float64)
        if a.shape != (self.dim,):
            raise DimensionMismatchError(
                f"direction has dimension {a.shape}, metric is {self.dim}x{self.dim}"
            )
        self.m += scale * np.outer(a, a)
        self.version += 1

    def max_asymmetry(self) -> float:
        off = np.max(np.abs(self.m - self.m.T))
        scale = max(np.max(np.abs(self.m)), 1.0)
        return float(off / scale)

    def copy(self) -> "MetricMatrix":
        return MetricMatrix(self.m.copy(), version=self.version)


@dataclass
class Representation:
    """Solution of the weighted least-squares problem for one test vector."""

    coefficients: np.ndarray
    residual: float
    clamped: bool = False


def _as_column(vec, dim: int, what: str) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64)
    if v.shape != (dim,):
        raise DimensionMismatchError(f"{what} has shape {v.shape}, expected ({dim},)")
    return v


class BasisSet:
    """Ordered basis columns P plus the cached inverse H = (P^T M P)^{-1}.

    Mutations are not thread safe; concurrent use is limited to pure solves
    against an unchanging BasisSet. ``metric_version`` records the metric
    revision the cache was built for, and every solve checks it: using a
    stale cache raises instead of silently returning garbage.
    """

    def __init__(self, samples, metric: MetricMatrix,
                 rebuild_period: int = DEFAULT_REBUILD_PERIOD):
        p = np.array(samples, dtype=np.float64)
        if p.ndim == 1:
            p = p[:, None]
        if p.ndim != 2:
            raise DimensionMismatchError(f"samples must be a d x N matrix, got shape {p.shape}")
        if p.shape[0] != metric.dim:
            raise DimensionMismatchError(
                f"samples have dimension {p.shape[0]}, metric is {metric.dim}x{metric.dim}"
            )
        self._p = p
        self._h = np.zeros((p.shape[1], p.shape[1]))
        self.rebuild_period = int(rebuild_period)
        self.metric_version = -1
        self.edits_since_rebuild = 0
        self.rebuild(metric)

    # ------------------------------------------------------------------ #
    # introspection

    @property
    def dim(self) -> int:
        return self._p.shape[0]

    @property
    def n(self) -> int:
        return self._p.shape[1]

    @property
    def samples(self) -> np.ndarray:
        """The d x N column matrix P. Treat as read-only."""
        return self._p

    @property
    def cached_inverse(self) -> np.ndarray:
        """The N x N cache H. Treat as read-only."""
        return self._h

    def column(self, index: int) -> np.ndarray:
        return self._p[:, self._check_index(index)].copy()

    def _check_index(self, index: int) -> int:
        if not 0 <= index < self.n:
            raise IndexError(f"column index {index} out of range for basis of size {self.n}")
        return index

    def _check_metric(self, metric: MetricMatrix) -> None:
        if metric.dim != self.dim:
            raise DimensionMismatchError(
                f"metric is {metric.dim}x{metric.dim}, basis dimension is {self.dim}"
            )
        if metric.version != self.metric_version:
            raise StaleMetricError(
                f"cache built for metric revision {self.metric_version}, "
                f"got revision {metric.version}; rebuild or refresh first"
            )

    # ------------------------------------------------------------------ #
    # solving

    def solve(self, metric: MetricMatrix, y) -> Representation:
        """Closed-form solve for one test vector.

        Returns coefficients x* = H P^T M y and the weighted residual
        (y - P x*)^T M (y - P x*), clamped below at zero. The clamp only
        activates when M has drifted indefinite; it is recorded on the
        result and logged.
        """
        if self.n == 0:
            raise EmptyBasisError("cannot solve against an empty basis")
        self._check_metric(metric)
        yv = _as_column(y, self.dim, "test vector")
        my = metric.m @ yv
        x = self._h @ (self._p.T @ my)
        e = yv - self._p @ x
        raw = float(e @ (metric.m @ e))
        clamped = raw < 0.0
        if clamped:
            log.debug("negative weighted residual %.3e clamped to 0", raw)
        return Representation(coefficients=x, residual=max(raw, 0.0), clamped=clamped)

    def solve_batch(self, metric: MetricMatrix, ys) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized solve for a d x K matrix of test vectors.

        Returns (coefficients N x K, residuals K). Matches ``solve`` on
        each column up to floating-point reassociation.
        """
        if self.n == 0:
            raise EmptyBasisError("cannot solve against an empty basis")
        self._check_metric(metric)
        y = np.asarray(ys, dtype=np.float64)
        if y.ndim != 2 or y.shape[0] != self.dim:
            raise DimensionMismatchError(f"expected ({self.dim}, K) test matrix, got {y.shape}")
        x = self._h @ (self._p.T @ (metric.m @ y))
        e = y - self._p @ x
        raw = np.einsum("ik,ik->k", e, metric.m @ e)
        n_neg = int(np.count_nonzero(raw < 0.0))
        if n_neg:
            log.debug("%d negative weighted residuals clamped to 0", n_neg)
        return x, np.maximum(raw, 0.0)

    # ------------------------------------------------------------------ #
    # incremental maintenance

    def expand(self, metric: MetricMatrix, new_sample) -> None:
        """Append a column and border the cached inverse.

        With c = P^T M dp and r = dp^T M dp, the new inverse is the block
        matrix [[H + H c c^T H / s, -H c / s], [-c^T H / s, 1/s]] where
        s = r - c^T H c is the Schur complement of the grown Gram matrix.
        """
        self._check_metric(metric)
        dp = _as_column(new_sample, self.dim, "new sample")
        mdp = metric.m @ dp
        c = self._p.T @ mdp
        r = float(dp @ mdp)
        hc = self._h @ c
        chc = float(c @ hc)
        schur = r - chc
        scale = max(abs(r), abs(chc))
        if scale == 0.0 or abs(schur) < EPS_SCHUR * scale:
            raise NearSingularExpansionError(
                f"Schur complement {schur:.3e} vanishes relative to scale {scale:.3e}"
            )
        n = self.n
        grown = np.empty((n + 1, n + 1))
        grown[:n, :n] = self._h + np.outer(hc, hc) / schur
        grown[:n, n] = -hc / schur
        grown[n, :n] = -hc / schur
        grown[n, n] = 1.0 / schur
        self._h = grown
        self._p = np.column_stack([self._p, dp])
        self._note_edit(metric)

    def remove(self, index: int) -> None:
        """Delete a column and downdate the cached inverse.

        The surviving block is H' = H[J, J] - H[J, i] H[i, J] / H[i, i]
        with J the index set without i.
        """
        i = self._check_index(index)
        if self.n < 2:
            raise EmptyBasisError("cannot remove the last basis column")
        pivot = float(self._h[i, i])
        diag_scale = float(np.mean(np.abs(np.diag(self._h))))
        if pivot == 0.0 or abs(pivot) < EPS_SCHUR * diag_scale:
            raise DegenerateRemovalError(
                f"pivot H[{i},{i}] = {pivot:.3e} vanishes relative to scale {diag_scale:.3e}"
            )
        col = self._h[:, i].copy()
        corrected = self._h - np.outer(col, col) / pivot
        keep = np.arange(self.n) != i
        self._h = corrected[np.ix_(keep, keep)]
        self._p = self._p[:, keep]
        self.edits_since_rebuild += 1

    def replace(self, metric: MetricMatrix, index: int, new_sample) -> None:
        """Swap one column for a new sample: removal followed by expansion.

        The new sample lands in the last position; solve residuals are
        invariant to column order, so callers that track slots by position
        must mirror the same delete-then-append reordering. On failure the
        basis is restored to its prior state before the error propagates.
        """
        i = self._check_index(index)
        dp = _as_column(new_sample, self.dim, "new sample")
        # remove/expand reassign _p and _h, so saved references restore exactly
        saved_p, saved_h = self._p, self._h
        saved_edits = self.edits_since_rebuild
        self.remove(i)
        try:
            self.expand(metric, dp)
        except NearSingularExpansionError:
            self._p, self._h = saved_p, saved_h
            self.edits_since_rebuild = saved_edits
            raise

    def apply_metric_rank_one(self, direction, scale: float) -> None:
        """Refresh H after the metric changed by M <- M + scale * a a^T.

        The Gram matrix changes by the rank-one term (scale * P^T a)(P^T a)^T,
        so Sherman-Morrison applies: H <- H - scale (H v)(H v)^T / (1 + scale v^T H v)
        with v = P^T a. Does not touch ``metric_version``; callers sync it
        once the metric object and all caches agree again.
        """
        a = _as_column(direction, self.dim, "direction")
        if scale == 0.0 or not np.any(a):
            return
        v = self._p.T @ a
        hv = self._h @ v
        vhv = float(v @ hv)
        denom = 1.0 + scale * vhv
        if abs(denom) < EPS_SM * max(1.0, abs(scale * vhv)):
            raise RankOneSingularityError(
                f"rank-one denominator {denom:.3e} vanishes; rebuild required"
            )
        self._h -= (scale / denom) * np.outer(hv, hv)
        self.edits_since_rebuild += 1

    def rebuild(self, metric: MetricMatrix) -> None:
        """Recompute H from scratch, with a pseudoinverse fallback.

        Always succeeds: when P^T M P is singular (singular values below
        EPS_PINV times the largest) the truncated pseudoinverse is used.
        Resets the incremental-edit counter and re-syncs the metric tag.
        """
        if metric.dim != self.dim:
            raise DimensionMismatchError(
                f"metric is {metric.dim}x{metric.dim}, basis dimension is {self.dim}"
            )
        if self.n == 0:
            self._h = np.zeros((0, 0))
        else:
            g = self._p.T @ (metric.m @ self._p)
            g = (g + g.T) / 2.0
            self._h = np.linalg.pinv(g, rcond=EPS_PINV, hermitian=True)
        self.edits_since_rebuild = 0
        self.metric_version = metric.version

    def _note_edit(self, metric: MetricMatrix) -> None:
        self.edits_since_rebuild += 1
        if self.edits_since_rebuild >= self.rebuild_period:
            self.rebuild(metric)

    # ------------------------------------------------------------------ #
    # recovery wrappers

    def safe_expand(self, metric: MetricMatrix, new_sample) -> None:
        """Expand, falling back to append-and-rebuild near singularity."""
        try:
            self.expand(metric, new_sample)
        except NearSingularExpansionError:
            dp = _as_column(new_sample, self.dim, "new sample")
            self._p = np.column_stack([self._p, dp])
            self.rebuild(metric)

    def safe_replace(self, metric: MetricMatrix, index: int, new_sample) -> None:
        """Replace, falling back to a rebuild near singularity."""
        i = self._check_index(index)
        dp = _as_column(new_sample, self.dim, "new sample")
        try:
            self.replace(metric, i, dp)
        except NearSingularError:
            keep = np.arange(self.n) != i
            self._p = np.column_stack([self._p[:, keep], dp])
            self.rebuild(metric)

    def mark_metric_current(self, metric: MetricMatrix) -> None:
        """Declare the cache consistent with the metric's revision.

        Valid only after the cache has been refreshed to match every
        intervening metric change (rank-one replay or rebuild).
        """
        if metric.dim != self.dim:
            raise DimensionMismatchError(
                f"metric is {metric.dim}x{metric.dim}, basis dimension is {self.dim}"
            )
        self.metric_version = metric.version

    def copy(self) -> "BasisSet":
        dup = object.__new__(BasisSet)
        dup._p = self._p.copy()
        dup._h = self._h.copy()
        dup.rebuild_period = self.rebuild_period
        dup.metric_version = self.metric_version
        dup.edits_since_rebuild = self.edits_since_rebuild
        return dup
