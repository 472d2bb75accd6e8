"""Synthetic grayscale sequences with exact ground truth.

A textured square rides a sinusoidal path over a structured background.
Appearance changes per frame through an intensity ramp plus additive noise
(independent per pixel, or blockwise-correlated), and an optional occluding
bar can cover part of the scene for a frame range. Frames are written as
binary PGM along with a ground-truth file of one `frame,x,y,w,h` row per
frame, 1-indexed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .features import write_pgm
from .metrics import Box


@dataclass
class SynthSpec:
    width: int = 160
    height: int = 120
    length: int = 200
    amplitude: float = 40.0
    period: float = 100.0
    drift: float = 0.3
    noise: float = 3.0
    noise_mode: str = "iid"
    occlude: Optional[tuple[int, int]] = None
    object_size: int = 24
    seed: int = 0

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("sequence length must be positive")
        if self.width < self.object_size or self.height < self.object_size:
            raise ValueError("frame must be at least as large as the object")
        if self.period <= 0:
            raise ValueError("path period must be positive")
        if self.amplitude < 0 or self.drift < 0 or self.noise < 0:
            raise ValueError("amplitude, drift and noise must be nonnegative")
        if self.noise_mode not in ("iid", "correlated"):
            raise ValueError(f"unknown noise mode {self.noise_mode!r}")
        if self.occlude is not None:
            t0, t1 = self.occlude
            if t0 > t1:
                raise ValueError("occlusion interval must satisfy t0 <= t1")


def _smooth_field(rng: np.random.Generator, h: int, w: int, block: int) -> np.ndarray:
    coarse = rng.normal(size=((h + block - 1) // block, (w + block - 1) // block))
    return np.repeat(np.repeat(coarse, block, axis=0), block, axis=1)[:h, :w]


def _background(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    ys, xs = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    base = 90.0 + 25.0 * np.sin(2 * np.pi * xs / 37.0) * np.cos(2 * np.pi * ys / 29.0)
    base += 12.0 * _smooth_field(rng, spec.height, spec.width, 8)
    return base


def _object_texture(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """Scale- and position-coded target pattern.

    A bright ring near the border, diagonal stripes inside it and a center
    blob: the ring pins the object boundary so zoomed crops stop matching,
    and the oriented interior keeps translation sharply localized.
    """
    n = spec.object_size
    ys, xs = np.mgrid[0:n, 0:n].astype(np.float64)
    c = (n - 1) / 2.0
    r = np.hypot(ys - c, xs - c)
    tex = 60.0 + 10.0 * rng.normal(size=(n, n))
    tex += 150.0 * np.exp(-((r - 0.42 * n) ** 2) / (2 * 1.8 ** 2))
    tex += 45.0 * np.sin(2 * np.pi * (xs + ys) / 7.0) * (r < 0.30 * n)
    tex += 90.0 * np.exp(-(r ** 2) / (2 * (0.10 * n) ** 2))
    return np.clip(tex, 0.0, 255.0)


def path_center(spec: SynthSpec, t: int) -> tuple[float, float]:
    """Object center at 0-based frame t: a sinusoidal loop around the frame middle."""
    cx0 = spec.width / 2.0
    cy0 = spec.height / 2.0
    phase = 2.0 * np.pi * t / spec.period
    return (float(cx0 + spec.amplitude * np.sin(phase)),
            float(cy0 + spec.amplitude * np.cos(phase)))


def render_sequence(spec: SynthSpec) -> tuple[list[np.ndarray], list[Box]]:
    """All frames as uint8 arrays plus the ground-truth box per frame."""
    rng = np.random.default_rng(spec.seed)
    bg = _background(spec, rng)
    obj = _object_texture(spec, rng)
    n = spec.object_size
    half = n / 2.0

    frames: list[np.ndarray] = []
    boxes: list[Box] = []
    for t in range(spec.length):
        cx, cy = path_center(spec, t)
        canvas = bg.copy()
        tex = obj + spec.drift * t
        if spec.noise > 0:
            if spec.noise_mode == "iid":
                tex = tex + rng.normal(0.0, spec.noise, size=(n, n))
            else:
                tex = tex + spec.noise * _smooth_field(rng, n, n, 6)
        x0 = int(round(cx - half))
        y0 = int(round(cy - half))
        sx0, sy0 = max(0, -x0), max(0, -y0)
        dx0, dy0 = max(0, x0), max(0, y0)
        dx1 = min(spec.width, x0 + n)
        dy1 = min(spec.height, y0 + n)
        if dx1 > dx0 and dy1 > dy0:
            canvas[dy0:dy1, dx0:dx1] = tex[sy0:sy0 + (dy1 - dy0), sx0:sx0 + (dx1 - dx0)]
        if spec.occlude is not None and spec.occlude[0] <= t <= spec.occlude[1]:
            bar_x = int(round(spec.width / 2.0)) - 6
            canvas[:, max(0, bar_x):max(0, bar_x) + 12] = 30.0
        frames.append(np.clip(canvas, 0, 255).astype(np.uint8))
        boxes.append(Box(cx - half, cy - half, float(n), float(n)))
    return frames, boxes


def write_sequence(spec: SynthSpec, out_dir) -> tuple[list[Path], Path]:
    """Render and write frames plus gt.txt; returns frame paths and the gt path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frames, boxes = render_sequence(spec)
    paths = []
    for i, px in enumerate(frames, start=1):
        p = out / f"frame_{i:05d}.pgm"
        write_pgm(p, px)
        paths.append(p)
    gt_path = out / "gt.txt"
    with open(gt_path, "w") as f:
        for i, b in enumerate(boxes, start=1):
            f.write(f"{i},{b.x!r},{b.y!r},{b.w!r},{b.h!r}\n")
    return paths, gt_path
