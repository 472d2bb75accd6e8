"""Particle-filter object tracker over grayscale image sequences.

Per frame: propagate particle hypotheses with a Gaussian random walk over
(center x, center y, scale), score each candidate region by how much better
the foreground basis reconstructs it than the background basis under the
current metric, pick the best-scoring particle as the new state, harvest
positive and negative training patches around it, push them through the
time-weighted reservoir buffers (mirroring every buffer edit into the
matching regression basis), and periodically refresh the metric from
sampled triplets.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace

import numpy as np

from . import features
from .errors import RankOneSingularityError
from .learning import LearnerConfig, Triplet, batch_update
from .metrics import Box
from .regression import BasisSet, MetricMatrix
from .reservoir import ReservoirBuffer

log = logging.getLogger(__name__)


@dataclass
class ParticleState:
    """One object-state hypothesis: box center, scale multiplier, score."""

    cx: float
    cy: float
    scale: float
    score: float = 0.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")


@dataclass
class TrackerConfig:
    particles: int = 200
    dynamics_std: tuple[float, float, float] = (10.0, 10.0, 0.1)
    gamma_f: float = 1.0
    gamma_b: float = 1.0
    rho: float = 0.1
    buffer_capacity: int = 300
    q: float = 1.6
    triplets_per_update: int = 500
    metric_update_period: int = 5
    c: float = 1.0
    pos_radius: float = 2.0
    neg_radius_inner: float = 8.0
    neg_radius_outer: float = 30.0
    pos_per_frame: int = 2
    neg_per_frame: int = 8
    seed: int = 0
    feature_mode: str = "hog"
    scale_min: float = 0.2
    scale_max: float = 5.0
    rebuild_period: int = 200
    refresh_mode: str = "rebuild"
    metric_learning: bool = True

    def __post_init__(self):
        if self.particles < 1:
            raise ValueError("need at least one particle")
        for name in ("gamma_f", "gamma_b", "q", "c", "buffer_capacity",
                     "triplets_per_update", "metric_update_period",
                     "pos_per_frame", "neg_per_frame"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if not self.neg_radius_inner > self.pos_radius:
            raise ValueError("negative annulus must start outside the positive radius")
        if self.neg_radius_outer <= self.neg_radius_inner:
            raise ValueError("annulus outer radius must exceed the inner radius")
        if not 0 < self.scale_min < self.scale_max:
            raise ValueError("scale clamp must satisfy 0 < min < max")
        if self.feature_mode not in ("hog", "raw"):
            raise ValueError(f"unknown feature mode {self.feature_mode!r}")
        if self.refresh_mode not in ("rebuild", "rank_one"):
            raise ValueError(f"unknown refresh mode {self.refresh_mode!r}")


@dataclass
class TrainingSample:
    feature: np.ndarray
    cx: float
    cy: float


def likelihood_score(theta_f: float, theta_b: float, gamma_f: float,
                     gamma_b: float, rho: float):
    """Sigmoid of exp(-theta_f / gamma_f) - rho * exp(-theta_b / gamma_b).

    Strictly decreasing in the foreground residual and increasing in the
    background residual; accepts scalars or arrays.
    """
    z = np.exp(-np.asarray(theta_f) / gamma_f) - rho * np.exp(-np.asarray(theta_b) / gamma_b)
    out = 1.0 / (1.0 + np.exp(-z))
    return float(out) if out.ndim == 0 else out


def propagate(prev: ParticleState, cfg: TrackerConfig,
              rng: np.random.Generator) -> list[ParticleState]:
    """Gaussian random-walk proposals around the previous state."""
    sx, sy, ss = cfg.dynamics_std
    k = cfg.particles
    cx = prev.cx + rng.normal(0.0, sx, k)
    cy = prev.cy + rng.normal(0.0, sy, k)
    scale = np.clip(prev.scale + rng.normal(0.0, ss, k), cfg.scale_min, cfg.scale_max)
    return [ParticleState(cx[i], cy[i], scale[i]) for i in range(k)]


def map_estimate(particles: list[ParticleState]) -> ParticleState:
    """Highest-scoring particle; ties pick the first."""
    if not particles:
        raise ValueError("cannot take the MAP of an empty particle set")
    idx = int(np.argmax([p.score for p in particles]))
    return particles[idx]


def select_training_samples(frame: features.GrayFrame, state: ParticleState,
                            base_size: tuple[float, float], cfg: TrackerConfig,
                            rng: np.random.Generator,
                            extractor=None) -> tuple[list[TrainingSample], list[TrainingSample]]:
    """Harvest positives near the state center and negatives from an annulus.

    Positive centers are uniform in the disk of radius ``pos_radius``;
    negative centers are uniform (by area) in the annulus between the inner
    and outer negative radii. All patches share the state's scale.
    """
    if extractor is None:
        extractor = _extractor_for(cfg.feature_mode)
    base_w, base_h = base_size
    w = base_w * state.scale
    h = base_h * state.scale

    def _patch_at(cx, cy):
        return features.crop_and_resize(frame, Box(cx - w / 2.0, cy - h / 2.0, w, h))

    def _draw(n, r_lo, r_hi):
        out = []
        for _ in range(n):
            r = np.sqrt(r_lo * r_lo + rng.random() * (r_hi * r_hi - r_lo * r_lo))
            th = rng.random() * 2.0 * np.pi
            out.append((state.cx + r * np.cos(th), state.cy + r * np.sin(th)))
        return out

    pos_centers = _draw(cfg.pos_per_frame, 0.0, cfg.pos_radius)
    neg_centers = _draw(cfg.neg_per_frame, cfg.neg_radius_inner, cfg.neg_radius_outer)
    centers = pos_centers + neg_centers
    patches = np.stack([_patch_at(cx, cy) for cx, cy in centers])
    feats = extractor(patches)
    samples = [TrainingSample(feats[i], centers[i][0], centers[i][1])
               for i in range(len(centers))]
    return samples[:cfg.pos_per_frame], samples[cfg.pos_per_frame:]


def sample_triplets(buf_f: ReservoirBuffer, buf_b: ReservoirBuffer, n: int,
                    rng: np.random.Generator) -> tuple[list[Triplet], bool]:
    """Draw proximity triplets from the two class buffers.

    Each draw picks a class uniformly, takes (p, p_plus) without replacement
    from that class and p_minus from the other. Returns fewer than ``n``
    with a warning flag when a buffer is too small to serve a draw.
    """
    buffers = (buf_f, buf_b)
    out: list[Triplet] = []
    shortfall = False
    for _ in range(n):
        side = int(rng.integers(0, 2))
        same, other = buffers[side], buffers[1 - side]
        if len(same) < 2 or len(other) < 1:
            shortfall = True
            continue
        i1, i2 = rng.choice(len(same), size=2, replace=False)
        j = int(rng.integers(0, len(other)))
        out.append(Triplet(same.items[i1].feature, same.items[i2].feature,
                           other.items[j].feature))
    if shortfall:
        log.warning("triplet sampling produced %d of %d requested", len(out), n)
    return out, shortfall


def _extractor_for(mode: str):
    return features.extract_stack if mode == "hog" else features.extract_raw_stack


class Tracker:
    """Stateful tracker over one sequence. Not shareable across threads."""

    def __init__(self, first_frame: features.GrayFrame, init_box: Box, cfg: TrackerConfig):
        if (init_box.x < 0 or init_box.y < 0
                or init_box.x + init_box.w > first_frame.width
                or init_box.y + init_box.h > first_frame.height):
            raise ValueError(f"initial box {init_box} not inside the frame")
        self.cfg = cfg
        self.base_w = float(init_box.w)
        self.base_h = float(init_box.h)
        self._extract = _extractor_for(cfg.feature_mode)
        streams = np.random.SeedSequence(cfg.seed).spawn(4)
        self.rng_particles = np.random.default_rng(streams[0])
        self.rng_samples = np.random.default_rng(streams[1])
        self.rng_reservoir = np.random.default_rng(streams[2])
        self.rng_triplets = np.random.default_rng(streams[3])

        self.frame_index = 0
        self.current = ParticleState(init_box.cx, init_box.cy, 1.0)
        init_patch = features.crop_and_resize(first_frame, init_box)
        init_feat = self._extract(init_patch[None])[0]
        dim = init_feat.shape[0]
        self.metric = MetricMatrix.identity(dim)

        pos, neg = select_training_samples(first_frame, self.current,
                                           (self.base_w, self.base_h), cfg,
                                           self.rng_samples, self._extract)
        self.buffer_fg = ReservoirBuffer(cfg.buffer_capacity, cfg.q, "foreground", dim)
        self.buffer_bg = ReservoirBuffer(cfg.buffer_capacity, cfg.q, "background", dim)
        for feat in [init_feat] + [s.feature for s in pos]:
            self.buffer_fg.insert(feat, 0, self.rng_reservoir)
        for s in neg:
            self.buffer_bg.insert(s.feature, 0, self.rng_reservoir)

        self.basis_fg = BasisSet(self.buffer_fg.feature_matrix(), self.metric,
                                 rebuild_period=cfg.rebuild_period)
        self.basis_bg = BasisSet(self.buffer_bg.feature_matrix(), self.metric,
                                 rebuild_period=cfg.rebuild_period)
        self.current.score = self.score(init_feat)

        self.timings = {"features": 0.0, "scoring": 0.0, "reservoir": 0.0,
                        "metric": 0.0, "total": 0.0}
        self.frames_processed = 0

    # ------------------------------------------------------------------ #

    def box_for(self, state: ParticleState) -> Box:
        w = self.base_w * state.scale
        h = self.base_h * state.scale
        return Box(state.cx - w / 2.0, state.cy - h / 2.0, w, h)

    def score(self, y: np.ndarray) -> float:
        """Foreground-likeness of one feature vector, in (0, 1)."""
        theta_f = self.basis_fg.solve(self.metric, y).residual
        theta_b = self.basis_bg.solve(self.metric, y).residual
        return likelihood_score(theta_f, theta_b, self.cfg.gamma_f,
                                self.cfg.gamma_b, self.cfg.rho)

    def _score_batch(self, ys: np.ndarray) -> np.ndarray:
        _, theta_f = self.basis_fg.solve_batch(self.metric, ys)
        _, theta_b = self.basis_bg.solve_batch(self.metric, ys)
        return likelihood_score(theta_f, theta_b, self.cfg.gamma_f,
                                self.cfg.gamma_b, self.cfg.rho)

    def _snapshot(self):
        return (self.metric.copy(), self.buffer_fg.copy(), self.buffer_bg.copy(),
                self.basis_fg.copy(), self.basis_bg.copy(),
                replace(self.current), self.frame_index)

    def _restore(self, snap) -> None:
        (self.metric, self.buffer_fg, self.buffer_bg,
         self.basis_fg, self.basis_bg, self.current, self.frame_index) = snap

    def step(self, frame: features.GrayFrame) -> ParticleState:
        """Process one frame and return the new state estimate.

        Any error leaves the tracker at the state it had before the call.
        """
        snap = self._snapshot()
        try:
            return self._step(frame)
        except Exception:
            self._restore(snap)
            raise

    def _step(self, frame: features.GrayFrame) -> ParticleState:
        cfg = self.cfg
        t_start = time.perf_counter()
        self.frame_index += 1

        particles = propagate(self.current, cfg, self.rng_particles)

        t0 = time.perf_counter()
        patches = np.stack([features.crop_and_resize(frame, self.box_for(p))
                            for p in particles])
        feats = self._extract(patches)
        self.timings["features"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        scores = self._score_batch(feats.T)
        for p, s in zip(particles, scores):
            p.score = float(s)
        self.timings["scoring"] += time.perf_counter() - t0

        best = map_estimate(particles)
        self.current = replace(best)

        pos, neg = select_training_samples(frame, best, (self.base_w, self.base_h),
                                           cfg, self.rng_samples, self._extract)

        t0 = time.perf_counter()
        for s in pos:
            self._mirror_insert(self.buffer_fg, self.basis_fg, s.feature)
        for s in neg:
            self._mirror_insert(self.buffer_bg, self.basis_bg, s.feature)
        self.timings["reservoir"] += time.perf_counter() - t0

        if cfg.metric_learning and self.frame_index % cfg.metric_update_period == 0:
            t0 = time.perf_counter()
            self._update_metric()
            self.timings["metric"] += time.perf_counter() - t0

        self.timings["total"] += time.perf_counter() - t_start
        self.frames_processed += 1
        return replace(self.current)

    def _mirror_insert(self, buffer: ReservoirBuffer, basis: BasisSet,
                       feat: np.ndarray) -> None:
        res = buffer.insert(feat, self.frame_index, self.rng_reservoir)
        if not res.inserted:
            return
        if res.evicted_index is None:
            basis.safe_expand(self.metric, feat)
        else:
            basis.safe_replace(self.metric, res.evicted_index, feat)

    def _update_metric(self) -> None:
        cfg = self.cfg
        triplets, _ = sample_triplets(self.buffer_fg, self.buffer_bg,
                                      cfg.triplets_per_update, self.rng_triplets)
        if not triplets:
            return
        summary = batch_update(self.metric, triplets, LearnerConfig(c=cfg.c))
        for basis in (self.basis_fg, self.basis_bg):
            if cfg.refresh_mode == "rebuild":
                basis.rebuild(self.metric)
                continue
            try:
                for rec in summary.records:
                    if rec.eta == 0.0:
                        continue
                    basis.apply_metric_rank_one(rec.a_minus, rec.eta)
                    basis.apply_metric_rank_one(rec.a_plus, -rec.eta)
                basis.mark_metric_current(self.metric)
                if basis.edits_since_rebuild >= basis.rebuild_period:
                    basis.rebuild(self.metric)
            except RankOneSingularityError:
                # The metric already holds every step; one rebuild lands the
                # cache on the final Gram inverse directly.
                basis.rebuild(self.metric)

    # ------------------------------------------------------------------ #

    def mean_timings(self) -> dict[str, float]:
        n = max(self.frames_processed, 1)
        return {k: v / n for k, v in self.timings.items()}
