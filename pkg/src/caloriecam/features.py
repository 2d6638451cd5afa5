"""Per-frame descriptors: flow spatial-pyramid histograms and depth HOG + PCA.

The per-frame feature vector is the concatenation of an orientation histogram
pyramid over the normalized flow patch and a PCA-reduced HOG over the
normalized depth patch. Stacked over time these vectors form the series the
pooling stage consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_NORM_EPS = 1e-12


@dataclass(frozen=True)
class SpatialPyramidConfig:
    """Flow histogram layout: bins, pyramid grid sizes, magnitude gate."""

    n_b: int = 9
    levels: tuple[int, ...] = (1, 2)
    min_magnitude: float = 0.1

    def __post_init__(self):
        if self.n_b < 2:
            raise ValueError("need at least 2 orientation bins")
        if not self.levels or any(g < 1 for g in self.levels):
            raise ValueError("grid sizes must be >= 1")

    @property
    def length(self) -> int:
        return self.n_b * sum(g * g for g in self.levels)


@dataclass(frozen=True)
class HogConfig:
    """Depth HOG geometry: cell/block layout and normalization floor."""

    cell: int = 10
    bins: int = 9
    block: int = 2
    block_stride: int = 1
    epsilon: float = 1e-5

    def cells_per_side(self, side: int) -> int:
        if side % self.cell != 0:
            raise ValueError(f"patch side {side} not divisible by cell {self.cell}")
        return side // self.cell

    def blocks_per_side(self, side: int) -> int:
        n = self.cells_per_side(side)
        if self.block > n:
            raise ValueError("block larger than the cell grid")
        return (n - self.block) // self.block_stride + 1

    def length(self, side: int) -> int:
        b = self.blocks_per_side(side)
        return b * b * self.block * self.block * self.bins


@dataclass(frozen=True)
class PcaModel:
    """Mean, orthonormal basis rows and per-component variance."""

    mean: np.ndarray
    basis: np.ndarray
    explained_variance: np.ndarray
    k: int
    degenerate: bool = False


@dataclass(frozen=True)
class FrameDescriptor:
    """One column of the per-frame time series: flow part then depth part."""

    flow_part: np.ndarray
    depth_part: np.ndarray
    frame_index: int
    combined: np.ndarray = field(init=False)

    def __post_init__(self):
        combined = np.concatenate([self.flow_part, self.depth_part])
        if not np.all(np.isfinite(combined)):
            raise ValueError("descriptor contains non-finite values")
        object.__setattr__(self, "combined", combined)


def flow_pyramid_histogram(
    u_patch: np.ndarray, v_patch: np.ndarray, cfg: SpatialPyramidConfig = SpatialPyramidConfig()
) -> np.ndarray:
    """Magnitude-weighted orientation histograms over a grid pyramid.

    Orientation is the joint angle atan2(v, u) in [0, 2pi); pixels whose
    magnitude falls below ``cfg.min_magnitude`` contribute nothing. Each cell
    histogram is L2-normalized (zero cells stay zero); cells concatenate
    coarsest level first, row-major within a level.
    """
    u = np.asarray(u_patch, dtype=np.float64)
    v = np.asarray(v_patch, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 2:
        raise ValueError("u and v patches must share a 2-D shape")
    side_r, side_c = u.shape
    mag = np.hypot(u, v)
    ang = np.arctan2(v, u)
    ang = np.where(ang < 0, ang + 2.0 * np.pi, ang)
    bin_idx = np.minimum((ang * cfg.n_b / (2.0 * np.pi)).astype(np.intp), cfg.n_b - 1)
    keep = mag >= cfg.min_magnitude
    parts = []
    for g in cfg.levels:
        for gr in range(g):
            r0, r1 = gr * side_r // g, (gr + 1) * side_r // g
            for gc in range(g):
                c0, c1 = gc * side_c // g, (gc + 1) * side_c // g
                sel = keep[r0:r1, c0:c1]
                hist = np.bincount(
                    bin_idx[r0:r1, c0:c1][sel],
                    weights=mag[r0:r1, c0:c1][sel],
                    minlength=cfg.n_b,
                )
                hist = hist / max(np.linalg.norm(hist), _NORM_EPS)
                parts.append(hist)
    return np.concatenate(parts)


def depth_hog(depth_patch: np.ndarray, cfg: HogConfig = HogConfig()) -> np.ndarray:
    """Block-normalized histogram of oriented gradients on a depth patch.

    Central-difference gradients, unsigned orientation over [0, pi) with
    linear interpolation between the two nearest bins, square cells
    accumulated into overlapping blocks, each block L2-normalized against
    ``cfg.epsilon`` as a floor.
    """
    patch = np.asarray(depth_patch, dtype=np.float64)
    if patch.ndim != 2 or patch.shape[0] != patch.shape[1]:
        raise ValueError("expected a square 2-D depth patch")
    side = patch.shape[0]
    n_cells = cfg.cells_per_side(side)
    n_blocks = cfg.blocks_per_side(side)

    gy, gx = np.gradient(patch)
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx)
    ang = np.where(ang < 0, ang + np.pi, ang)
    ang = np.where(ang >= np.pi, ang - np.pi, ang)

    width = np.pi / cfg.bins
    pos = ang / width - 0.5
    lo = np.floor(pos)
    frac = pos - lo
    lo_bin = (lo.astype(np.int64)) % cfg.bins
    hi_bin = (lo_bin + 1) % cfg.bins

    rows, cols = np.indices(patch.shape)
    cell_flat = (rows // cfg.cell) * n_cells + (cols // cfg.cell)
    n_hist = n_cells * n_cells * cfg.bins
    flat_lo = cell_flat * cfg.bins + lo_bin
    flat_hi = cell_flat * cfg.bins + hi_bin
    hist = np.bincount(flat_lo.ravel(), weights=(mag * (1.0 - frac)).ravel(), minlength=n_hist)
    hist += np.bincount(flat_hi.ravel(), weights=(mag * frac).ravel(), minlength=n_hist)
    cells = hist.reshape(n_cells, n_cells, cfg.bins)

    out = []
    for br in range(n_blocks):
        r = br * cfg.block_stride
        for bc in range(n_blocks):
            c = bc * cfg.block_stride
            block = cells[r : r + cfg.block, c : c + cfg.block].ravel()
            out.append(block / max(np.linalg.norm(block), cfg.epsilon))
    return np.concatenate(out)


def pca_fit(samples, max_k: int = 150, var_target: float = 0.95) -> PcaModel:
    """Fit a PCA basis by eigendecomposition of the sample covariance.

    The retained dimension is the smallest of ``max_k``, the component count
    reaching ``var_target`` of total variance, and the numerical rank.
    All-identical input yields a k=0 model flagged degenerate.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least 2 sample vectors")
    n, dim = X.shape
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (n - 1)
    eigval, eigvec = np.linalg.eigh(cov)
    order = np.argsort(eigval)[::-1]
    eigval = np.clip(eigval[order], 0.0, None)
    eigvec = eigvec[:, order]
    total = float(eigval.sum())
    if total <= 0.0:
        empty = np.zeros((0, dim))
        return PcaModel(mean, empty, np.zeros(0), 0, degenerate=True)
    rank = int(np.sum(eigval > eigval[0] * 1e-10))
    k_var = int(np.searchsorted(np.cumsum(eigval) / total, var_target) + 1)
    k = max(1, min(max_k, k_var, rank))
    basis = eigvec[:, :k].T.copy()
    # Fix component signs so serialized models are reproducible.
    for row in basis:
        j = np.argmax(np.abs(row))
        if row[j] < 0:
            row *= -1.0
    return PcaModel(mean, basis, eigval[:k].copy(), k)


def pca_project(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """Project vector(s) onto the basis: basis @ (x - mean)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.mean.shape[0]:
        raise ValueError(
            f"input length {x.shape[-1]} does not match model dimension {model.mean.shape[0]}"
        )
    return (x - model.mean) @ model.basis.T


def pca_reconstruct(model: PcaModel, z: np.ndarray) -> np.ndarray:
    """Map projected coordinates back to the input space."""
    return np.asarray(z, dtype=np.float64) @ model.basis + model.mean


def build_frame_descriptor(flow_hist: np.ndarray, depth_proj: np.ndarray, idx: int) -> FrameDescriptor:
    """Concatenate the flow and depth parts, flow first."""
    return FrameDescriptor(
        np.asarray(flow_hist, dtype=np.float64),
        np.asarray(depth_proj, dtype=np.float64),
        idx,
    )
