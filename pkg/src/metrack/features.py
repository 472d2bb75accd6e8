"""Appearance features for candidate image regions.

A candidate box is resampled to a canonical 32x32 patch (bilinear, edge
clamped) and described by gradient-orientation histograms: the patch and
its four quadrants each contribute a 3x3 grid of cells, every cell a
9-bin unsigned-orientation histogram of gradient magnitude with linear
bin interpolation. Each of the five region blocks is L2-normalized
independently, giving a 405-dimensional vector.

A raw-pixel mode (intensities scaled to [0, 1], mean-subtracted, 1024-dim)
is available for comparisons against plain least-squares appearance models.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, InvalidBoxError
from .metrics import Box

PATCH = 32
BINS = 9
CELLS = 3
N_MODES = 5
FEATURE_DIM = N_MODES * CELLS * CELLS * BINS
RAW_DIM = PATCH * PATCH
NORM_GUARD = 1e-6

# Region blocks (y0, x0, y1, x1): whole patch plus the four quadrants.
_HALF = PATCH // 2
MODES = (
    (0, 0, PATCH, PATCH),
    (0, 0, _HALF, _HALF),
    (0, _HALF, _HALF, PATCH),
    (_HALF, 0, PATCH, _HALF),
    (_HALF, _HALF, PATCH, PATCH),
)


@dataclass
class GrayFrame:
    """One 8-bit grayscale frame, row-major."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise DimensionMismatchError(f"frame must be 2-D, got shape {px.shape}")
        self.pixels = px.astype(np.uint8, copy=False)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def load_frame(path) -> GrayFrame:
    """Read a PGM (binary P5) or 8-bit grayscale PNG frame."""
    p = Path(path)
    if p.suffix.lower() == ".pgm":
        return GrayFrame(_read_pgm(p))
    if p.suffix.lower() == ".png":
        from PIL import Image

        with Image.open(p) as img:
            return GrayFrame(np.asarray(img.convert("L")))
    raise ValueError(f"unsupported frame format: {p.name}")


def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    # Header: magic, width, height, maxval as whitespace/comment separated tokens.
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = re.compile(rb"\s*(#[^\n]*\n|\S+)").match(data, pos)
        if m is None:
            raise ValueError(f"{path}: truncated PGM header")
        pos = m.end()
        tok = m.group(1)
        if not tok.startswith(b"#"):
            tokens.append(tok)
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM supported, maxval={maxval}")
    pos += 1  # single whitespace byte after maxval
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    if raster.size != width * height:
        raise ValueError(f"{path}: truncated PGM raster")
    return raster.reshape(height, width)


def write_pgm(path, pixels: np.ndarray) -> None:
    px = np.ascontiguousarray(np.asarray(pixels, dtype=np.uint8))
    h, w = px.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(px.tobytes())


def crop_and_resize(frame: GrayFrame, box: Box) -> np.ndarray:
    """Resample a box to the canonical PATCH x PATCH float patch.

    Bilinear sampling at target pixel centers; source coordinates outside
    the frame clamp to the nearest edge pixel. An integer-aligned box of
    exactly PATCH x PATCH is an identity crop.
    """
    if box.w <= 0 or box.h <= 0:
        raise InvalidBoxError(f"box {box} has no area")
    img = frame.pixels
    sx = box.x + (np.arange(PATCH) + 0.5) * (box.w / PATCH) - 0.5
    sy = box.y + (np.arange(PATCH) + 0.5) * (box.h / PATCH) - 0.5
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    x0c = np.clip(x0, 0, frame.width - 1)
    x1c = np.clip(x0 + 1, 0, frame.width - 1)
    y0c = np.clip(y0, 0, frame.height - 1)
    y1c = np.clip(y0 + 1, 0, frame.height - 1)
    img_f = img.astype(np.float64)
    top = img_f[np.ix_(y0c, x0c)] * (1 - fx) + img_f[np.ix_(y0c, x1c)] * fx
    bot = img_f[np.ix_(y1c, x0c)] * (1 - fx) + img_f[np.ix_(y1c, x1c)] * fx
    return top * (1 - fy)[:, None] + bot * fy[:, None]


def _gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel central-difference gradients, one-sided at borders.

    Axes of length one get zero gradient. Works on (h, w) or stacked
    (k, h, w) arrays.
    """
    gy = np.gradient(img, axis=-2) if img.shape[-2] > 1 else np.zeros_like(img)
    gx = np.gradient(img, axis=-1) if img.shape[-1] > 1 else np.zeros_like(img)
    return gy, gx


def binned_magnitudes(img: np.ndarray) -> np.ndarray:
    """Per-pixel histogram image: gradient magnitude split over BINS
    unsigned-orientation bins with linear interpolation.

    Accepts (h, w) or (k, h, w); returns one extra trailing bin axis.
    """
    img = np.asarray(img, dtype=np.float64)
    gy, gx = _gradients(img)
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx) % np.pi
    t = ang * (BINS / np.pi)
    lo = np.floor(t)
    frac = t - lo
    b0 = lo.astype(np.int64) % BINS
    b1 = (b0 + 1) % BINS
    out = np.zeros(img.shape + (BINS,))
    flat = out.reshape(-1, BINS)
    idx = np.arange(flat.shape[0])
    flat[idx, b0.ravel()] += (mag * (1.0 - frac)).ravel()
    flat[idx, b1.ravel()] += (mag * frac).ravel()
    return out


def _cell_bounds(lo: int, hi: int) -> np.ndarray:
    return np.rint(np.linspace(lo, hi, CELLS + 1)).astype(np.int64)


def _normalize_modes(vec: np.ndarray) -> np.ndarray:
    """L2-normalize each mode block in place; near-zero blocks become exact zeros."""
    block = CELLS * CELLS * BINS
    v = vec.reshape(vec.shape[:-1] + (N_MODES, block))
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    live = norms >= NORM_GUARD
    np.divide(v, norms, out=v, where=live)
    v *= live
    return vec


def extract_stack(patches: np.ndarray) -> np.ndarray:
    """Feature vectors for a stack of canonical patches, shape (k, FEATURE_DIM)."""
    pts = np.asarray(patches, dtype=np.float64)
    if pts.ndim != 3 or pts.shape[1:] != (PATCH, PATCH):
        raise DimensionMismatchError(f"expected (k, {PATCH}, {PATCH}) patches, got {pts.shape}")
    binned = binned_magnitudes(pts)
    cells = []
    for y0, x0, y1, x1 in MODES:
        ys = _cell_bounds(y0, y1)
        xs = _cell_bounds(x0, x1)
        for r in range(CELLS):
            for c in range(CELLS):
                cells.append(
                    binned[:, ys[r]:ys[r + 1], xs[c]:xs[c + 1], :].sum(axis=(1, 2))
                )
    vec = np.stack(cells, axis=1).reshape(pts.shape[0], FEATURE_DIM)
    return _normalize_modes(vec)


def extract(patch: np.ndarray, via_integral: bool = False) -> np.ndarray:
    """Feature vector of one canonical patch.

    ``via_integral`` computes cell sums through the patch's integral
    histogram instead of direct accumulation; both paths agree to
    floating-point reassociation.
    """
    p = np.asarray(patch, dtype=np.float64)
    if p.shape != (PATCH, PATCH):
        raise DimensionMismatchError(f"expected ({PATCH}, {PATCH}) patch, got {p.shape}")
    if not via_integral:
        return extract_stack(p[None])[0]
    integral = integral_histogram(p)
    vec = np.empty(FEATURE_DIM)
    k = 0
    for y0, x0, y1, x1 in MODES:
        ys = _cell_bounds(y0, y1)
        xs = _cell_bounds(x0, x1)
        for r in range(CELLS):
            for c in range(CELLS):
                vec[k * BINS:(k + 1) * BINS] = rect_sum(
                    integral, ys[r], xs[c], ys[r + 1], xs[c + 1]
                )
                k += 1
    return _normalize_modes(vec)


def extract_raw(patch: np.ndarray) -> np.ndarray:
    """Raw-pixel feature: intensities scaled to [0, 1], mean-subtracted."""
    p = np.asarray(patch, dtype=np.float64)
    if p.shape != (PATCH, PATCH):
        raise DimensionMismatchError(f"expected ({PATCH}, {PATCH}) patch, got {p.shape}")
    v = p.ravel() / 255.0
    return v - v.mean()


def extract_raw_stack(patches: np.ndarray) -> np.ndarray:
    pts = np.asarray(patches, dtype=np.float64)
    if pts.ndim != 3 or pts.shape[1:] != (PATCH, PATCH):
        raise DimensionMismatchError(f"expected (k, {PATCH}, {PATCH}) patches, got {pts.shape}")
    v = pts.reshape(pts.shape[0], RAW_DIM) / 255.0
    return v - v.mean(axis=1, keepdims=True)


def integral_histogram(image) -> np.ndarray:
    """Per-bin integral images with a zero border row and column.

    Shape (h + 1, w + 1, BINS); any axis-aligned rectangle's bin sums come
    from four lookups via ``rect_sum``.
    """
    img = image.pixels if isinstance(image, GrayFrame) else image
    binned = binned_magnitudes(np.asarray(img, dtype=np.float64))
    h, w, _ = binned.shape
    out = np.zeros((h + 1, w + 1, BINS))
    out[1:, 1:] = binned.cumsum(axis=0).cumsum(axis=1)
    return out


def rect_sum(integral: np.ndarray, y0: int, x0: int, y1: int, x1: int) -> np.ndarray:
    """Bin sums over rows [y0, y1) and columns [x0, x1)."""
    return (
        integral[y1, x1] - integral[y0, x1] - integral[y1, x0] + integral[y0, x0]
    )
