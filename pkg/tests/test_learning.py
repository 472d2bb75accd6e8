"""Triplet metric learning: distances, hinge loss, step length, updates."""

import numpy as np
import pytest

from helpers import correlated_two_cluster, triplets_from_labels
from metrack import (
    DimensionMismatchError,
    LearnerConfig,
    MetricMatrix,
    Triplet,
    batch_loss,
    batch_update,
    hinge_loss,
    mahalanobis,
    step_length,
    update,
)

CFG = LearnerConfig()


def _random_symmetric(rng, d):
    a = rng.normal(size=(d, d))
    return (a + a.T) / 2


class TestMahalanobis:
    def test_squared_euclidean_under_identity(self):
        m = MetricMatrix.identity(2)
        assert mahalanobis(m, [1.0, 2.0], [0.0, 0.0]) == pytest.approx(5.0)

    def test_zero_difference(self):
        m = MetricMatrix.identity(4)
        p = np.arange(4.0)
        assert mahalanobis(m, p, p) == 0.0

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            d = int(rng.integers(2, 12))
            m = MetricMatrix(_random_symmetric(rng, d))
            p, q = rng.normal(size=d), rng.normal(size=d)
            expected = sum(
                (p[i] - q[i]) * m.m[i, j] * (p[j] - q[j])
                for i in range(d) for j in range(d)
            )
            assert mahalanobis(m, p, q) == pytest.approx(expected, rel=1e-12, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            mahalanobis(MetricMatrix.identity(3), np.ones(3), np.ones(2))


class TestHingeLoss:
    def test_margin_satisfied(self):
        m = MetricMatrix.identity(2)
        t = Triplet([0.0, 0.0], [0.0, 0.0], [2.0, 0.0])  # a+ = 0, |a-|^2 = 4
        assert hinge_loss(m, t) == 0.0

    def test_margin_violated(self):
        m = MetricMatrix.identity(2)
        t = Triplet([0.0, 0.0], [0.0, 0.0], [np.sqrt(0.5), 0.0])
        assert hinge_loss(m, t) == pytest.approx(0.5)

    def test_compositional_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            d = int(rng.integers(2, 10))
            m = MetricMatrix(_random_symmetric(rng, d))
            t = Triplet(rng.normal(size=d), rng.normal(size=d), rng.normal(size=d))
            expected = max(0.0, 1.0 + mahalanobis(m, t.p, t.p_plus)
                           - mahalanobis(m, t.p, t.p_minus))
            assert hinge_loss(m, t) == pytest.approx(expected, rel=1e-12, abs=1e-12)


class TestStepLength:
    def test_zero_when_margin_satisfied(self):
        m = MetricMatrix.identity(2)
        t = Triplet([0.0, 0.0], [0.0, 0.0], [2.0, 0.0])
        assert step_length(m, t, CFG) == 0.0

    def test_zero_for_degenerate_direction(self):
        m = MetricMatrix.identity(3)
        p_same = np.array([1.0, 1.0, 0.0])
        t = Triplet(np.zeros(3), p_same, p_same)  # a+ = a-, direction vanishes
        assert step_length(m, t, CFG) == 0.0

    def test_denominator_identity_and_closed_form(self):
        # The full closed-form denominator 2a-ᵀUa- - 2a+ᵀUa+ - |U|F² collapses
        # to |U|F², hence eta = min{C, max{0, loss} / |U|F²}.
        rng = np.random.default_rng(5)
        for _ in range(200):
            d = int(rng.integers(2, 12))
            m = MetricMatrix(_random_symmetric(rng, d))
            t = Triplet(rng.normal(size=d), rng.normal(size=d), rng.normal(size=d))
            ap, am = t.p - t.p_plus, t.p - t.p_minus
            u = np.outer(am, am) - np.outer(ap, ap)
            fro2 = float(np.sum(u * u))
            denominator = 2 * am @ u @ am - 2 * ap @ u @ ap - fro2
            assert denominator == pytest.approx(fro2, rel=1e-10)
            raw = 1.0 + mahalanobis(m, t.p, t.p_plus) - mahalanobis(m, t.p, t.p_minus)
            expected = min(CFG.c, max(0.0, raw) / fro2) if raw > 0 else 0.0
            assert step_length(m, t, CFG) == pytest.approx(expected, rel=1e-10, abs=1e-15)

    def test_clamped_by_aggressiveness(self):
        m = MetricMatrix.identity(2)
        t = Triplet([0.0, 0.0], [0.0, 0.0], [0.1, 0.0])  # tiny |U|, huge raw step
        cfg = LearnerConfig(c=0.5)
        assert step_length(m, t, cfg) == 0.5


class TestUpdate:
    def test_passive_branch_leaves_metric_untouched(self):
        m = MetricMatrix.identity(2)
        before = m.m.copy()
        t = Triplet([0.0, 0.0], [0.0, 0.0], [2.0, 0.0])
        rec = update(m, t, CFG)
        assert rec.eta == 0.0
        assert np.array_equal(m.m, before)
        assert m.version == 0

    def test_unclamped_update_zeroes_the_loss(self):
        rng = np.random.default_rng(11)
        cfg = LearnerConfig(c=1e9)
        for _ in range(30):
            d = int(rng.integers(3, 10))
            m = MetricMatrix.identity(d)
            t = Triplet(rng.normal(size=d), rng.normal(size=d) * 2, rng.normal(size=d) * 0.1)
            if hinge_loss(m, t) == 0.0:
                continue
            rec = update(m, t, cfg)
            assert rec.eta > 0.0
            assert hinge_loss(m, t) == pytest.approx(0.0, abs=1e-9)
            assert rec.loss_after == pytest.approx(0.0, abs=1e-9)

    def test_symmetry_preserved_exactly(self):
        rng = np.random.default_rng(13)
        m = MetricMatrix.identity(6)
        for _ in range(200):
            t = Triplet(rng.normal(size=6), rng.normal(size=6), rng.normal(size=6))
            update(m, t, CFG)
        assert m.max_asymmetry() == 0.0

    def test_version_bumps_track_rank_one_terms(self):
        m = MetricMatrix.identity(3)
        t = Triplet([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.1, 0.0, 0.0])
        rec = update(m, t, CFG)
        assert rec.eta > 0
        assert m.version == 2

    def test_record_invariants(self):
        rng = np.random.default_rng(17)
        m = MetricMatrix.identity(5)
        for _ in range(100):
            t = Triplet(rng.normal(size=5), rng.normal(size=5), rng.normal(size=5))
            rec = update(m, t, CFG)
            assert 0.0 <= rec.eta <= CFG.c
            assert rec.loss_after <= rec.loss_before + 1e-12


class TestBatchUpdate:
    def test_empty_list(self):
        m = MetricMatrix.identity(3)
        before = m.m.copy()
        summary = batch_update(m, [], CFG)
        assert summary.loss_before == summary.loss_after == 0.0
        assert np.array_equal(m.m, before)

    def test_batch_of_one_equals_single_update(self):
        rng = np.random.default_rng(19)
        t = Triplet(rng.normal(size=4), rng.normal(size=4), rng.normal(size=4))
        m1 = MetricMatrix.identity(4)
        m2 = MetricMatrix.identity(4)
        rec = update(m1, t, CFG)
        summary = batch_update(m2, [t], CFG)
        assert np.array_equal(m1.m, m2.m)
        assert summary.records[0].eta == rec.eta

    def test_two_cluster_loss_halves(self):
        rng = np.random.default_rng(23)
        x, y = correlated_two_cluster(rng, d=5, n_per_class=60)
        triplets = triplets_from_labels(x, y, 500, rng)
        m = MetricMatrix.identity(5)
        summary = batch_update(m, triplets, CFG)
        assert summary.loss_before > 0
        assert summary.loss_after < 0.5 * summary.loss_before

    def test_per_triplet_monotonicity(self):
        rng = np.random.default_rng(29)
        x, y = correlated_two_cluster(rng, d=6, n_per_class=30)
        triplets = triplets_from_labels(x, y, 200, rng)
        m = MetricMatrix.identity(6)
        summary = batch_update(m, triplets, CFG)
        for rec in summary.records:
            assert rec.loss_after <= rec.loss_before + 1e-12

    def test_dimension_mismatch_aborts_without_mutation(self):
        rng = np.random.default_rng(31)
        good = Triplet(rng.normal(size=4), rng.normal(size=4) * 3, rng.normal(size=4) * 0.1)
        bad = Triplet(rng.normal(size=5), rng.normal(size=5), rng.normal(size=5))
        m = MetricMatrix.identity(4)
        before = m.m.copy()
        with pytest.raises(DimensionMismatchError):
            batch_update(m, [good, bad], CFG)
        assert np.array_equal(m.m, before)
        assert m.version == 0

    def test_batch_loss_matches_sum_of_hinges(self):
        rng = np.random.default_rng(37)
        m = MetricMatrix(_random_symmetric(rng, 4) + 2 * np.eye(4))
        triplets = [Triplet(rng.normal(size=4), rng.normal(size=4), rng.normal(size=4))
                    for _ in range(40)]
        expected = sum(hinge_loss(m, t) for t in triplets)
        assert batch_loss(m, triplets) == pytest.approx(expected, rel=1e-12)
