"""Frame containers and image-space primitives shared by the feature encoders.

Person-box normalization, median filtering, breath-trace smoothing and
breath-to-frame alignment. Everything here is a pure function of its inputs;
the containers are immutable, so all of it is safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

DEFAULT_PATCH_SIDE = 60
DEFAULT_MEDIAN_KERNEL = 5
DEFAULT_SMOOTH_SPAN = 20

# Fallback person detector (used when no box file is available).
PERSON_NEAR_MM = 500.0
PERSON_FAR_MM = 4500.0
PERSON_MARGIN_MM = 150.0
PERSON_MIN_AREA_PX = 25


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned person box; (x, y) is the top-left corner in pixels."""

    x: int
    y: int
    w: int
    h: int

    def clamped(self, height: int, width: int) -> "BoundingBox":
        """Intersect the box with an image of the given size."""
        x0 = min(max(self.x, 0), width)
        y0 = min(max(self.y, 0), height)
        x1 = min(max(self.x + self.w, 0), width)
        y1 = min(max(self.y + self.h, 0), height)
        return BoundingBox(x0, y0, x1 - x0, y1 - y0)

    @property
    def area(self) -> int:
        return self.w * self.h


@dataclass(frozen=True)
class FrameBundle:
    """One timestamped RGB-D frame with an optional person detection.

    ``time_s`` is seconds from session start (``index / fps`` for a
    constant-rate recording). ``bbox is None`` means no person was detected.
    """

    index: int
    time_s: float
    rgb: np.ndarray
    depth: np.ndarray
    bbox: BoundingBox | None = None

    def __post_init__(self):
        if self.rgb.shape[:2] != self.depth.shape[:2]:
            raise ValueError("rgb and depth dimensions differ")


@dataclass(frozen=True)
class NormalizedPatch:
    """Square patch holding the resized content of a bounding-box crop.

    The crop keeps its aspect ratio: its longer side is resized to exactly
    ``side`` pixels, the content is centered, and the leftover border is
    padding. ``scale`` is the resize factor that was applied.
    """

    data: np.ndarray
    side: int
    scale: float
    content_shape: tuple[int, int]
    offset: tuple[int, int]


def bilinear_resize(grid: np.ndarray, out_rows: int, out_cols: int) -> np.ndarray:
    """Resize a 2-D grid with bilinear interpolation.

    Sample positions follow the half-pixel-center convention, so resizing to
    the same shape is an exact identity.
    """
    grid = np.asarray(grid, dtype=np.float64)
    rows, cols = grid.shape
    r = (np.arange(out_rows) + 0.5) * rows / out_rows - 0.5
    c = (np.arange(out_cols) + 0.5) * cols / out_cols - 0.5
    r = np.clip(r, 0.0, rows - 1.0)
    c = np.clip(c, 0.0, cols - 1.0)
    r0 = np.floor(r).astype(np.intp)
    c0 = np.floor(c).astype(np.intp)
    r1 = np.minimum(r0 + 1, rows - 1)
    c1 = np.minimum(c0 + 1, cols - 1)
    fr = (r - r0)[:, None]
    fc = (c - c0)[None, :]
    top = grid[np.ix_(r0, c0)] * (1.0 - fc) + grid[np.ix_(r0, c1)] * fc
    bot = grid[np.ix_(r1, c0)] * (1.0 - fc) + grid[np.ix_(r1, c1)] * fc
    return top * (1.0 - fr) + bot * fr


def normalize_bbox_patch(
    image: np.ndarray,
    bbox: BoundingBox,
    side: int = DEFAULT_PATCH_SIDE,
    pad_value: float = 0.0,
) -> NormalizedPatch:
    """Crop a box, resize its longer side to ``side`` px and center it.

    The crop is resampled bilinearly, aspect ratio preserved, and placed in
    the middle of a ``side`` x ``side`` canvas whose remaining pixels are set
    to ``pad_value``. Raises ``ValueError`` for a box with no area inside the
    image.
    """
    image = np.asarray(image, dtype=np.float64)
    height, width = image.shape
    box = bbox.clamped(height, width)
    if box.w <= 0 or box.h <= 0:
        raise ValueError("empty person region")
    scale = side / max(box.w, box.h)
    if box.h >= box.w:
        out_h = side
        out_w = max(1, int(round(box.w * scale)))
    else:
        out_w = side
        out_h = max(1, int(round(box.h * scale)))
    crop = image[box.y : box.y + box.h, box.x : box.x + box.w]
    resized = bilinear_resize(crop, out_h, out_w)
    canvas = np.full((side, side), float(pad_value), dtype=np.float64)
    oy = (side - out_h) // 2
    ox = (side - out_w) // 2
    canvas[oy : oy + out_h, ox : ox + out_w] = resized
    return NormalizedPatch(canvas, side, scale, (out_h, out_w), (oy, ox))


def median_filter(grid: np.ndarray, k: int = DEFAULT_MEDIAN_KERNEL) -> np.ndarray:
    """k x k median filter with replicate-padded borders. k must be odd."""
    if k < 1 or k % 2 == 0:
        raise ValueError(f"median kernel size must be odd, got {k}")
    grid = np.asarray(grid, dtype=np.float64)
    return ndimage.median_filter(grid, size=k, mode="nearest")


def smooth_breaths(readings, span: int = DEFAULT_SMOOTH_SPAN) -> np.ndarray:
    """Centered moving average of (time_s, kcal_per_min) breath samples.

    Windows are truncated at the sequence ends; timestamps pass through
    unchanged. For an even span the window covers the ``span // 2`` samples
    after the center and ``span // 2 - 1`` before it.
    """
    arr = np.asarray(readings, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise ValueError("expected a non-empty (n, 2) sequence of breath samples")
    if span < 1:
        raise ValueError("span must be >= 1")
    times = arr[:, 0]
    if np.any(np.diff(times) < 0):
        raise ValueError("breath samples must be time-ordered")
    values = arr[:, 1]
    n = len(values)
    left = (span - 1) // 2
    right = span // 2
    idx = np.arange(n)
    lo = np.maximum(idx - left, 0)
    hi = np.minimum(idx + right + 1, n)
    cs = np.concatenate(([0.0], np.cumsum(values)))
    smoothed = (cs[hi] - cs[lo]) / (hi - lo)
    return np.column_stack((times, smoothed))


def rate_at_frame(smoothed, t) -> float | np.ndarray:
    """Linearly interpolate a breath trace at time(s) ``t`` (seconds).

    Times outside the sampled range clamp to the first/last value.
    """
    arr = np.asarray(smoothed, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise ValueError("expected a non-empty (n, 2) breath trace")
    out = np.interp(t, arr[:, 0], arr[:, 1])
    return float(out) if np.isscalar(t) else out


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    """Luma conversion with ITU-R 601 weights, returned as float64."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114


def background_depth_mode(depth_frames, bin_mm: float = 50.0) -> np.ndarray:
    """Per-pixel modal depth over a stack of frames, quantized to bin_mm."""
    stack = np.asarray(depth_frames, dtype=np.float64)
    if stack.ndim != 3 or stack.shape[0] == 0:
        raise ValueError("expected a non-empty (frames, H, W) depth stack")
    q = np.floor(stack / bin_mm).astype(np.int64)
    # Mode along axis 0 via sort + longest run; ties resolve to the lower bin.
    s = np.sort(q, axis=0)
    best = s[0].copy()
    best_count = np.ones_like(best)
    run = np.ones_like(best)
    for f in range(1, s.shape[0]):
        same = s[f] == s[f - 1]
        run = np.where(same, run + 1, 1)
        better = run > best_count
        best = np.where(better, s[f], best)
        best_count = np.where(better, run, best_count)
    return (best + 0.5) * bin_mm


def detect_person_bbox(
    depth: np.ndarray,
    background_mm: np.ndarray,
    near_mm: float = PERSON_NEAR_MM,
    far_mm: float = PERSON_FAR_MM,
    margin_mm: float = PERSON_MARGIN_MM,
    min_area: int = PERSON_MIN_AREA_PX,
) -> BoundingBox | None:
    """Depth-threshold fallback detector.

    Flags pixels inside [near_mm, far_mm] that sit at least ``margin_mm``
    nearer than the per-pixel background mode, then returns the bounding box
    of the largest connected component, or None when nothing plausible is
    found.
    """
    d = np.asarray(depth, dtype=np.float64)
    mask = (d >= near_mm) & (d <= far_mm) & (d < background_mm - margin_mm)
    labels, count = ndimage.label(mask)
    if count == 0:
        return None
    sizes = np.bincount(labels.ravel())[1:]
    best = int(np.argmax(sizes)) + 1
    if sizes[best - 1] < min_area:
        return None
    rows, cols = np.nonzero(labels == best)
    x = int(cols.min())
    y = int(rows.min())
    return BoundingBox(x, y, int(cols.max()) - x + 1, int(rows.max()) - y + 1)
