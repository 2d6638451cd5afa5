"""Dense optical flow between consecutive grayscale frames.

A classic variational solver: minimize the linearized brightness-constancy
data term plus a quadratic smoothness penalty weighted by alpha^2, iterated
with Jacobi updates. Deterministic for fixed parameters, no pyramid, no GPU.
The flow stage sits behind this one interface so precomputed flow files can
substitute for it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imaging import BoundingBox, NormalizedPatch, median_filter, normalize_bbox_patch

FLO_MAGIC = 202021.25


@dataclass(frozen=True)
class FlowParams:
    """Solver knobs: smoothness weight, Jacobi iterations, input blur."""

    alpha: float = 15.0
    iterations: int = 100
    presmooth_sigma: float = 1.0


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement in px/frame; u horizontal, v vertical."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if self.u.shape != self.v.shape:
            raise ValueError("u and v dimensions differ")


def _neighbor_mean(field: np.ndarray) -> np.ndarray:
    """4-neighbor average with replicated edges; field is (..., H, W)."""
    p = np.pad(field, [(0, 0)] * (field.ndim - 2) + [(1, 1), (1, 1)], mode="edge")
    return 0.25 * (
        p[..., :-2, 1:-1] + p[..., 2:, 1:-1] + p[..., 1:-1, :-2] + p[..., 1:-1, 2:]
    )


def _flow_derivatives(prev: np.ndarray, nxt: np.ndarray, sigma: float):
    if sigma > 0:
        prev = ndimage.gaussian_filter(prev, sigma, axes=(-2, -1))
        nxt = ndimage.gaussian_filter(nxt, sigma, axes=(-2, -1))
    avg = 0.5 * (prev + nxt)
    iy, ix = np.gradient(avg, axis=(-2, -1))
    it = nxt - prev
    return ix, iy, it


def dense_flow(
    prev: np.ndarray,
    nxt: np.ndarray,
    params: FlowParams = FlowParams(),
    energy_log: list | None = None,
) -> FlowField:
    """Estimate dense flow from ``prev`` to ``nxt``.

    Both frames must be 2-D grayscale grids of the same shape. When
    ``energy_log`` is given, the objective value is appended after every
    iteration (useful to confirm the solver is actually descending).
    """
    prev = np.asarray(prev, dtype=np.float64)
    nxt = np.asarray(nxt, dtype=np.float64)
    if prev.shape != nxt.shape or prev.ndim != 2:
        raise ValueError("frames must be 2-D grids of identical shape")
    ix, iy, it = _flow_derivatives(prev, nxt, params.presmooth_sigma)
    u, v = _iterate(ix, iy, it, params, energy_log)
    return FlowField(u, v)


def dense_flow_pairs(frames: np.ndarray, params: FlowParams = FlowParams()) -> np.ndarray:
    """Flow for every consecutive pair of a (T, H, W) stack, batched.

    Returns a (T-1, H, W, 2) array with (u, v) in the last axis. Produces the
    same values as calling :func:`dense_flow` pair by pair.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3 or frames.shape[0] < 2:
        raise ValueError("expected a (T>=2, H, W) frame stack")
    ix, iy, it = _flow_derivatives(frames[:-1], frames[1:], params.presmooth_sigma)
    u, v = _iterate(ix, iy, it, params, None)
    return np.stack((u, v), axis=-1)


def _iterate(ix, iy, it, params: FlowParams, energy_log: list | None):
    u = np.zeros_like(ix)
    v = np.zeros_like(ix)
    denom = params.alpha**2 + ix**2 + iy**2
    for _ in range(params.iterations):
        ubar = _neighbor_mean(u)
        vbar = _neighbor_mean(v)
        t = (ix * ubar + iy * vbar + it) / denom
        u = ubar - ix * t
        v = vbar - iy * t
        if energy_log is not None:
            energy_log.append(flow_energy(ix, iy, it, u, v, params.alpha))
    return u, v


def flow_energy(ix, iy, it, u, v, alpha: float) -> float:
    """Data + alpha^2 * smoothness objective on the discrete grid."""
    data = ix * u + iy * v + it
    du_y = np.diff(u, axis=-2)
    du_x = np.diff(u, axis=-1)
    dv_y = np.diff(v, axis=-2)
    dv_x = np.diff(v, axis=-1)
    smooth = (
        np.sum(du_y**2) + np.sum(du_x**2) + np.sum(dv_y**2) + np.sum(dv_x**2)
    )
    return float(np.sum(data**2) + alpha**2 * smooth)


def resample_flow(
    flow: FlowField, bbox: BoundingBox, side: int = 60
) -> tuple[NormalizedPatch, NormalizedPatch]:
    """Crop flow to a person box and map it onto the normalized square.

    Each component is cropped, bilinearly resized into the normalized
    geometry, multiplied by the spatial scale factor so displacements stay in
    normalized-patch pixel units, and finally smoothed with the 5x5 median
    filter.
    """
    out = []
    for comp in (flow.u, flow.v):
        patch = normalize_bbox_patch(comp, bbox, side, pad_value=0.0)
        data = median_filter(patch.data * patch.scale, 5)
        out.append(
            NormalizedPatch(data, patch.side, patch.scale, patch.content_shape, patch.offset)
        )
    return out[0], out[1]


def write_flo(path, flow: FlowField) -> None:
    """Write a flow field in the common .flo interchange layout."""
    h, w = flow.u.shape
    data = np.empty((h, w, 2), dtype="<f4")
    data[..., 0] = flow.u
    data[..., 1] = flow.v
    with open(path, "wb") as fh:
        fh.write(struct.pack("<fii", FLO_MAGIC, w, h))
        fh.write(data.tobytes())


def read_flo(path) -> FlowField:
    """Read a .flo flow field; raises ValueError on a bad magic number."""
    with open(path, "rb") as fh:
        magic, w, h = struct.unpack("<fii", fh.read(12))
        if abs(magic - FLO_MAGIC) > 1e-3:
            raise ValueError(f"{path}: not a .flo file (magic {magic!r})")
        raw = np.frombuffer(fh.read(w * h * 2 * 4), dtype="<f4")
    if raw.size != w * h * 2:
        raise ValueError(f"{path}: truncated flow data")
    data = raw.reshape(h, w, 2).astype(np.float64)
    return FlowField(data[..., 0], data[..., 1])
