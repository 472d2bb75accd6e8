"""Online metric learning from proximity-comparison triplets.

A triplet (p, p_plus, p_minus) asserts that p should be closer to p_plus
than to p_minus by a unit margin under the bilinear form
D(p, q) = (p - q)^T M (p - q). Violations are corrected passive-aggressively:
the smallest Frobenius-norm step that zeroes the margin violation, clamped
by an aggressiveness cap C. Each step is the symmetric rank-two change

    M <- M + eta * (a_minus a_minus^T - a_plus a_plus^T)

with a_plus = p - p_plus, a_minus = p - p_minus. No positive-semidefinite
projection is applied; M may drift indefinite and distances are then read
as bilinear similarities rather than true squared metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError
from .regression import MetricMatrix


@dataclass
class Triplet:
    p: np.ndarray
    p_plus: np.ndarray
    p_minus: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        self.p_plus = np.asarray(self.p_plus, dtype=np.float64)
        self.p_minus = np.asarray(self.p_minus, dtype=np.float64)
        if not (self.p.shape == self.p_plus.shape == self.p_minus.shape) or self.p.ndim != 1:
            raise DimensionMismatchError(
                f"triplet members must share one dimension, got "
                f"{self.p.shape}, {self.p_plus.shape}, {self.p_minus.shape}"
            )

    @property
    def dim(self) -> int:
        return self.p.shape[0]


@dataclass
class LearnerConfig:
    """Aggressiveness cap and the degenerate-triplet guard.

    ``degenerate_norm_floor`` is a relative factor: a step is skipped when
    the Frobenius norm of the rank-two direction falls below
    floor * (|a_plus|^2 + |a_minus|^2), since the step length divides by it.
    """

    c: float = 1.0
    degenerate_norm_floor: float = 1e-12

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError(f"aggressiveness must be positive, got {self.c}")


@dataclass
class UpdateRecord:
    """What one triplet did to the metric."""

    eta: float
    a_plus: np.ndarray
    a_minus: np.ndarray
    loss_before: float
    loss_after: float


@dataclass
class BatchSummary:
    """Aggregate outcome of a sequential pass over a triplet list."""

    loss_before: float
    loss_after: float
    n_triplets: int
    n_updates: int
    records: list[UpdateRecord] = field(default_factory=list)


def mahalanobis(metric: MetricMatrix, p, q) -> float:
    """Bilinear distance (p - q)^T M (p - q).

    May be negative once M has drifted indefinite; that is reported
    faithfully, not treated as an error.
    """
    pv = np.asarray(p, dtype=np.float64)
    qv = np.asarray(q, dtype=np.float64)
    if pv.shape != qv.shape or pv.shape != (metric.dim,):
        raise DimensionMismatchError(
            f"vectors {pv.shape} and {qv.shape} must both match metric dimension {metric.dim}"
        )
    d = pv - qv
    return float(d @ (metric.m @ d))


def _margin_violation(metric: MetricMatrix, t: Triplet) -> tuple[float, np.ndarray, np.ndarray]:
    """Raw margin term 1 + D(p, p+) - D(p, p-) and the difference vectors."""
    if t.dim != metric.dim:
        raise DimensionMismatchError(
            f"triplet dimension {t.dim} does not match metric dimension {metric.dim}"
        )
    a_plus = t.p - t.p_plus
    a_minus = t.p - t.p_minus
    raw = 1.0 + float(a_plus @ (metric.m @ a_plus)) - float(a_minus @ (metric.m @ a_minus))
    return raw, a_plus, a_minus


def hinge_loss(metric: MetricMatrix, t: Triplet) -> float:
    """max{0, 1 + D(p, p_plus) - D(p, p_minus)}."""
    raw, _, _ = _margin_violation(metric, t)
    return max(0.0, raw)


def _direction_norm_sq(a_plus: np.ndarray, a_minus: np.ndarray) -> float:
    """Squared Frobenius norm of a_minus a_minus^T - a_plus a_plus^T.

    Expanded form |a-|^4 + |a+|^4 - 2 (a+ . a-)^2, clamped at zero against
    cancellation when the two vectors nearly coincide.
    """
    nm = float(a_minus @ a_minus)
    np_ = float(a_plus @ a_plus)
    cross = float(a_plus @ a_minus)
    return max(nm * nm + np_ * np_ - 2.0 * cross * cross, 0.0)


def step_length(metric: MetricMatrix, t: Triplet, cfg: LearnerConfig) -> float:
    """Optimal clamped step eta = min{C, max{0, loss} / |U|_F^2}.

    U is the rank-two direction a_minus a_minus^T - a_plus a_plus^T; the
    closed-form denominator reduces to its squared Frobenius norm. Returns
    0 for satisfied margins and for degenerate triplets whose direction
    norm vanishes.
    """
    raw, a_plus, a_minus = _margin_violation(metric, t)
    return _step_from_parts(raw, a_plus, a_minus, cfg)


def _step_from_parts(raw: float, a_plus: np.ndarray, a_minus: np.ndarray,
                     cfg: LearnerConfig) -> float:
    if raw <= 0.0:
        return 0.0
    u_sq = _direction_norm_sq(a_plus, a_minus)
    floor = cfg.degenerate_norm_floor * (float(a_plus @ a_plus) + float(a_minus @ a_minus))
    if np.sqrt(u_sq) <= floor:
        return 0.0
    return min(cfg.c, raw / u_sq)


def update(metric: MetricMatrix, t: Triplet, cfg: LearnerConfig) -> UpdateRecord:
    """Apply one passive-aggressive step to the metric in place.

    Leaves M untouched when the margin is already satisfied or the triplet
    is degenerate. Effective steps bump the metric revision twice, once per
    rank-one term, so inverse caches can replay them individually.
    """
    raw, a_plus, a_minus = _margin_violation(metric, t)
    loss_before = max(0.0, raw)
    if loss_before == 0.0:
        return UpdateRecord(0.0, a_plus, a_minus, 0.0, 0.0)
    eta = _step_from_parts(raw, a_plus, a_minus, cfg)
    if eta == 0.0:
        return UpdateRecord(0.0, a_plus, a_minus, loss_before, loss_before)
    metric.rank_one_update(a_minus, eta)
    metric.rank_one_update(a_plus, -eta)
    # Closed-form value of the re-evaluated hinge: the step reduces the raw
    # margin term by exactly eta * |U|_F^2.
    u_sq = _direction_norm_sq(a_plus, a_minus)
    loss_after = max(0.0, raw - eta * u_sq)
    return UpdateRecord(eta, a_plus, a_minus, loss_before, loss_after)


def batch_loss(metric: MetricMatrix, triplets: list[Triplet]) -> float:
    """Sum of hinge losses over a triplet list under the current metric."""
    if not triplets:
        return 0.0
    a_plus = np.stack([t.p - t.p_plus for t in triplets])
    a_minus = np.stack([t.p - t.p_minus for t in triplets])
    d_plus = np.einsum("ij,ij->i", a_plus @ metric.m, a_plus)
    d_minus = np.einsum("ij,ij->i", a_minus @ metric.m, a_minus)
    return float(np.sum(np.maximum(0.0, 1.0 + d_plus - d_minus)))


def batch_update(metric: MetricMatrix, triplets: list[Triplet],
                 cfg: LearnerConfig) -> BatchSummary:
    """Run the online update over a list in order.

    The summary reports the summed hinge loss of the whole batch measured
    before the first step and again after the last one. A dimension
    mismatch anywhere aborts before any mutation.
    """
    for t in triplets:
        if t.dim != metric.dim:
            raise DimensionMismatchError(
                f"triplet dimension {t.dim} does not match metric dimension {metric.dim}"
            )
    loss_before = batch_loss(metric, triplets)
    records = []
    n_updates = 0
    for t in triplets:
        rec = update(metric, t, cfg)
        records.append(rec)
        if rec.eta > 0.0:
            n_updates += 1
    loss_after = batch_loss(metric, triplets)
    return BatchSummary(
        loss_before=loss_before,
        loss_after=loss_after,
        n_triplets=len(triplets),
        n_updates=n_updates,
        records=records,
    )
