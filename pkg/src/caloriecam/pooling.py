"""Temporal pyramid pooling of per-frame feature series.

A window's series is segmented at level i into 2^i contiguous pieces; every
segment is reduced with max, sum and frequency (DCT magnitude) pooling and
the results concatenate into one fixed-length vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPERATOR_ORDER = ("max", "sum", "dct")

_dct_rows_cache: dict[tuple[int, int], np.ndarray] = {}


@dataclass(frozen=True)
class TimeSeriesWindow:
    """N feature dimensions over T frames, column t = frame t0 + t."""

    S: np.ndarray
    t0: int = 0

    def __post_init__(self):
        if self.S.ndim != 2 or self.S.shape[1] < 1:
            raise ValueError("series must be a non-empty (N, T) matrix")
        if not np.all(np.isfinite(self.S)):
            raise ValueError("series contains non-finite values")

    @property
    def T(self) -> int:
        return self.S.shape[1]


@dataclass(frozen=True)
class PoolingConfig:
    levels: int = 3
    operators: tuple[str, ...] = OPERATOR_ORDER
    j: int = 8

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("need at least one pyramid level")
        if self.j < 1:
            raise ValueError("need at least one frequency coefficient")
        ops = tuple(op for op in OPERATOR_ORDER if op in self.operators)
        if not ops:
            raise ValueError("operator set is empty or unknown")
        object.__setattr__(self, "operators", ops)

    @property
    def segments(self) -> int:
        return 2**self.levels - 1

    def values_per_dim(self) -> int:
        n = 0
        for op in self.operators:
            n += self.j if op == "dct" else 1
        return n


def pooled_length(n_dims: int, cfg: PoolingConfig) -> int:
    """Output length of :func:`pool_window` for an N-dimensional series."""
    return cfg.segments * n_dims * cfg.values_per_dim()


def segment_bounds(T: int, L: int) -> list[tuple[int, int]]:
    """1-based inclusive (t_min, t_max) pairs, level-major, coarsest first.

    Level i splits [1, T] into 2^i pieces with floor-based boundaries, so
    every frame belongs to exactly one segment per level.
    """
    if L < 1:
        raise ValueError("need at least one level")
    if T < 2 ** (L - 1):
        raise ValueError("window shorter than finest level")
    bounds = []
    for i in range(L):
        n = 2**i
        for k in range(1, n + 1):
            bounds.append(((k - 1) * T // n + 1, k * T // n))
    return bounds


def pool_max(series, t_min: int, t_max: int) -> float:
    s = np.asarray(series, dtype=np.float64)
    _check_bounds(s, t_min, t_max)
    return float(np.max(s[t_min - 1 : t_max]))


def pool_sum(series, t_min: int, t_max: int) -> float:
    s = np.asarray(series, dtype=np.float64)
    _check_bounds(s, t_min, t_max)
    return float(np.sum(s[t_min - 1 : t_max]))


def _check_bounds(s: np.ndarray, t_min: int, t_max: int) -> None:
    if t_min < 1 or t_max > s.shape[-1] or t_min > t_max:
        raise ValueError(f"empty or out-of-range segment [{t_min}, {t_max}]")


def dct_rows(T: int, j: int) -> np.ndarray:
    """First j rows of the orthonormal type-II DCT matrix for length T."""
    key = (T, j)
    cached = _dct_rows_cache.get(key)
    if cached is not None:
        return cached
    k = np.arange(min(j, T))[:, None]
    t = np.arange(T)[None, :]
    m = np.sqrt(2.0 / T) * np.cos(np.pi * k * (2 * t + 1) / (2.0 * T))
    m[0, :] = np.sqrt(1.0 / T)
    _dct_rows_cache[key] = m
    return m


def pool_dct(series, j: int) -> np.ndarray:
    """Magnitudes of the j lowest orthonormal DCT-II coefficients.

    Coefficients past the series length are zero-padded.
    """
    s = np.asarray(series, dtype=np.float64)
    if s.shape[-1] < 1:
        raise ValueError("empty series")
    if j < 1:
        raise ValueError("need at least one coefficient")
    coeffs = dct_rows(s.shape[-1], j) @ s
    out = np.zeros(j, dtype=np.float64)
    out[: coeffs.shape[0]] = np.abs(coeffs)
    return out


def pool_window(win: TimeSeriesWindow, cfg: PoolingConfig = PoolingConfig()) -> np.ndarray:
    """Pool every feature row over every pyramid segment.

    Segments run level-major; inside a segment the operators apply in the
    fixed (max, sum, dct) order, each reducing all N rows before the next
    operator's values. DCT output is row-major: row n's j magnitudes are
    contiguous.
    """
    S = win.S
    parts = []
    for t_min, t_max in segment_bounds(win.T, cfg.levels):
        seg = S[:, t_min - 1 : t_max]
        for op in cfg.operators:
            if op == "max":
                parts.append(seg.max(axis=1))
            elif op == "sum":
                parts.append(seg.sum(axis=1))
            else:
                coeffs = np.abs(dct_rows(seg.shape[1], cfg.j) @ seg.T).T
                if coeffs.shape[1] < cfg.j:
                    coeffs = np.pad(coeffs, ((0, 0), (0, cfg.j - coeffs.shape[1])))
                parts.append(coeffs.ravel())
    return np.concatenate(parts)
