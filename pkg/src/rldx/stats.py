"""Numerical primitives the diagnostic checks are built from.

Everything here is a pure function over immutable inputs.  Conventions that
the check thresholds depend on are fixed once, in this module:

  - standard deviations are population std (divide by N)
  - entropy is normalized by ln(K) so results live in [0, 1]
  - KL divergence with disjoint support returns ``math.inf`` rather than
    raising, so callers can treat it as a maximal violation
  - the discrete second derivative is the three-point stencil
    ``v[i+1] - 2 v[i] + v[i-1]`` over consecutive samples
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class InsufficientDataError(ValueError):
    """The input series is too short for the requested statistic."""


@dataclass(frozen=True)
class Series:
    """A scalar time series indexed by episode or update counters."""

    index: np.ndarray
    values: np.ndarray

    def __init__(self, index, values):
        idx = np.asarray(index, dtype=np.int64)
        val = np.asarray(values, dtype=np.float64)
        if idx.ndim != 1 or val.ndim != 1 or idx.size != val.size:
            raise ValueError("index and values must be 1-d and equally long")
        if idx.size < 1:
            raise ValueError("series must hold at least one point")
        if np.any(idx < 0):
            raise ValueError("indices must be non-negative")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise ValueError("indices must be strictly increasing")
        object.__setattr__(self, "index", idx)
        object.__setattr__(self, "values", val)

    def __len__(self) -> int:
        return int(self.index.size)

    @classmethod
    def _trusted(cls, index: np.ndarray, values: np.ndarray) -> "Series":
        """Wrap arrays the caller guarantees already satisfy the invariants."""
        series = object.__new__(cls)
        object.__setattr__(series, "index", index)
        object.__setattr__(series, "values", values)
        return series

    def window(self, lo: int, hi: int) -> "Series | None":
        """Sub-series with lo <= index < hi, or None if empty."""
        left, right = np.searchsorted(self.index, (lo, hi))
        if left == right:
            return None
        return Series._trusted(self.index[left:right], self.values[left:right])


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    rmse_residual: float


def linear_fit(s: Series) -> LinearFit:
    """Least-squares line through (index, values).

    ``rmse_residual`` is the RMSE between the fitted line and the values.
    Constant input short-circuits to an exact (0, value, 0) fit.
    """
    if len(s) < 2:
        raise InsufficientDataError("linear fit needs at least 2 points")
    v = s.values
    if np.all(v == v[0]):
        return LinearFit(0.0, float(v[0]), 0.0)
    x = s.index.astype(np.float64)
    design = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(design, v, rcond=None)
    resid = v - (slope * x + intercept)
    return LinearFit(float(slope), float(intercept), float(np.sqrt(np.mean(resid * resid))))


def rmse(a, b) -> float:
    """Root mean squared difference between two equal-length vectors."""
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape or av.ndim != 1:
        raise ValueError("rmse needs two 1-d vectors of equal length")
    if av.size == 0:
        raise ValueError("rmse needs at least one point")
    d = av - bv
    return float(np.sqrt(np.mean(d * d)))


def max_abs_second_derivative(s: Series, normalize: bool = False) -> float:
    """Largest |v[i+1] - 2 v[i] + v[i-1]| over the series.

    With ``normalize`` the values are min-max rescaled to [0, 1] first (a
    constant series rescales to zeros) and samples are treated as unit-spaced,
    which makes the 0.22 exploration-curvature threshold comparable across
    runs.
    """
    if len(s) < 3:
        raise InsufficientDataError("second derivative needs at least 3 points")
    v = s.values
    if normalize:
        lo, hi = float(v.min()), float(v.max())
        v = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    return float(np.abs(v[2:] - 2.0 * v[1:-1] + v[:-2]).max())


def _check_simplex(p: np.ndarray, name: str) -> None:
    if p.ndim != 1 or p.size < 2:
        raise ValueError(f"{name} must be a vector of length >= 2")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError(f"{name} must be non-negative and finite")
    if abs(float(p.sum()) - 1.0) > 1e-6:
        raise ValueError(f"{name} must sum to 1 +/- 1e-6, got {float(p.sum())!r}")


def normalized_entropy(p) -> float:
    """Shannon entropy of a probability vector, scaled by ln(K) into [0, 1]."""
    pv = np.asarray(p, dtype=np.float64)
    _check_simplex(pv, "p")
    nz = pv[pv > 0]
    h = float(-(nz * np.log(nz)).sum() / math.log(pv.size))
    return min(max(h, 0.0), 1.0)


def kl_divergence(p, q) -> float:
    """KL(p || q) in nats; ``math.inf`` when q lacks support p has."""
    pv = np.asarray(p, dtype=np.float64)
    qv = np.asarray(q, dtype=np.float64)
    if pv.shape != qv.shape:
        raise ValueError("p and q must have equal length")
    _check_simplex(pv, "p")
    _check_simplex(qv, "q")
    support = pv > 0
    if np.any(qv[support] == 0):
        return math.inf
    ps = pv[support]
    return max(float((ps * np.log(ps / qv[support])).sum()), 0.0)


def mc_dropout_dispersion(samples) -> float:
    """Mean per-output std across stochastic forward passes.

    ``samples`` is S x B x K; the std over the S axis is taken per (b, k)
    cell (population convention) and the B*K stds are averaged.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError("samples must be an S x B x K tensor")
    if arr.shape[0] < 2:
        raise InsufficientDataError("dispersion needs at least 2 stochastic samples")
    return float(arr.std(axis=0).mean())


def strictly_monotone_decreasing(s: Series, tol: float = 0.0) -> bool:
    """True iff the series never rises by more than ``tol`` and its
    least-squares slope is negative."""
    if len(s) < 2:
        raise InsufficientDataError("monotonicity needs at least 2 points")
    diffs = np.diff(s.values)
    if np.any(diffs > tol):
        return False
    return linear_fit(s).slope < 0.0


def windowed_std(values, window: int) -> Series:
    """Sliding population std over consecutive windows, indexed by window end."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("values must be a 1-d vector")
    if window < 1:
        raise ValueError("window must be positive")
    if window > v.size:
        raise InsufficientDataError(f"window {window} exceeds series length {v.size}")
    sliding = np.lib.stride_tricks.sliding_window_view(v, window)
    return Series(np.arange(window - 1, v.size), sliding.std(axis=1))
