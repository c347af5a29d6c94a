"""Variance stabilisation and STL seasonal-trend decomposition built on loess.

All arithmetic is float64. The remainder is defined as the residual
``log(y + c) - trend - seasonal`` so reconstruction holds by construction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from errors import DecompositionSkipped, InverseTransformError
from utils import next_odd

logger = logging.getLogger(__name__)

PERIODIC = "periodic"
MIN_CYCLES = 3
# seasonal smoother length used by the trend-window formula when the seasonal is periodic
PERIODIC_EQUIVALENT_WINDOW = 7


@dataclass(frozen=True)
class StlParams:
    """Smoothing windows and iteration counts for STL; None windows are derived from the period."""

    seasonal_window: int | str = PERIODIC
    trend_window: int | None = None
    lowpass_window: int | None = None
    inner_iterations: int = 2
    outer_iterations: int = 0

    def __post_init__(self) -> None:
        if isinstance(self.seasonal_window, str):
            if self.seasonal_window != PERIODIC:
                raise ValueError(f"seasonal_window must be an odd integer or {PERIODIC!r}")
            windows = {}
        else:
            windows = {"seasonal_window": self.seasonal_window}
        windows.update(trend_window=self.trend_window, lowpass_window=self.lowpass_window)
        for name, value in windows.items():
            if value is not None and (int(value) != value or value < 3 or value % 2 == 0):
                raise ValueError(f"{name} must be an odd integer >= 3, got {value!r}")
        if self.inner_iterations < 1:
            raise ValueError("inner_iterations must be >= 1")
        if self.outer_iterations < 0:
            raise ValueError("outer_iterations must be >= 0")

    @property
    def periodic(self) -> bool:
        return self.seasonal_window == PERIODIC

    def resolve(self, period: int) -> "StlParams":
        """Fill unset windows with the classic defaults for this period."""
        s = PERIODIC_EQUIVALENT_WINDOW if self.periodic else self.seasonal_window
        trend = self.trend_window or next_odd(math.ceil(1.5 * period / (1.0 - 1.5 / s)))
        lowpass = self.lowpass_window or next_odd(period)
        return replace(self, trend_window=max(3, trend), lowpass_window=max(3, lowpass))

    @classmethod
    def from_dict(cls, data: dict | None) -> "StlParams":
        return cls(**(data or {}))


@dataclass(frozen=True, eq=False)
class Decomposition:
    trend: np.ndarray
    seasonal: np.ndarray
    remainder: np.ndarray
    log_offset: float = 0.0
    series_id: str | None = None

    def reconstruct(self) -> np.ndarray:
        """trend + seasonal + remainder, i.e. the log-scale input."""
        return self.trend + self.seasonal + self.remainder

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "idx": np.arange(1, self.trend.size + 1),
            "trend": self.trend,
            "seasonal": self.seasonal,
            "remainder": self.remainder,
        })


def log_transform(values) -> tuple[np.ndarray, float]:
    """Natural log, shifted so the smallest value maps to ln(1) when the series is not positive."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("log_transform needs a nonempty sequence")
    low = float(values.min())
    offset = 0.0 if low > 0 else 1.0 - low
    return np.log(values + offset), offset


def inverse_log(values, offset: float, series_id: str | None = None) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.exp(values) - offset
    bad = ~np.isfinite(out)
    if bad.any():
        raise InverseTransformError(series_id, int(np.flatnonzero(bad)[0]))
    return out


def _nearest_windows(x: np.ndarray, x_eval: np.ndarray, q: int) -> np.ndarray:
    """Start index of the q nearest neighbours of every evaluation point (x sorted)."""
    n = x.size
    left = np.clip(np.searchsorted(x, x_eval) - q // 2, 0, n - q)
    for _ in range(n):
        outer_left = x[np.maximum(left - 1, 0)]
        outer_right = x[np.minimum(left + q, n - 1)]
        move_left = (left > 0) & (x_eval - outer_left < x[left + q - 1] - x_eval)
        move_right = (left + q < n) & (outer_right - x_eval < x_eval - x[left])
        if not (move_left.any() or move_right.any()):
            break
        left = left - move_left.astype(int) + move_right.astype(int)
    return left


def loess(x, y, window: int, degree: int = 1, weights=None, x_eval=None) -> np.ndarray:
    """Local weighted regression with tricube weights over the `window` nearest neighbours.

    Degree 0 is a weighted mean, degree 1 a weighted straight line. Points whose local
    system is singular fall back to the weighted mean. `weights` multiplies the tricube
    weights (robustness weights in STL). `x_eval` defaults to `x`.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.size
    if y.size != n or n < 2:
        raise ValueError("loess needs x and y of equal length >= 2")
    if window < 3:
        raise ValueError("loess window must be >= 3")
    if degree not in (0, 1):
        raise ValueError("loess degree must be 0 or 1")
    x_eval = x if x_eval is None else np.asarray(x_eval, dtype=np.float64)

    q = min(int(window), n)
    left = _nearest_windows(x, x_eval, q)
    idx = left[:, None] + np.arange(q)
    xn, yn = x[idx], y[idx]
    dist = np.abs(xn - x_eval[:, None])
    bandwidth = dist.max(axis=1)
    if window > n:
        spacing = (x[-1] - x[0]) / (n - 1)
        bandwidth = bandwidth + 0.5 * (window - n) * spacing
    bandwidth = np.where(bandwidth > 0, bandwidth, 1.0)

    u = dist / bandwidth[:, None]
    tricube = np.where(u < 1.0, (1.0 - u ** 3) ** 3, 0.0)
    w = tricube if weights is None else tricube * np.asarray(weights, dtype=np.float64)[idx]
    total = w.sum(axis=1)
    dead = total <= 0
    if dead.any():
        w[dead] = tricube[dead]
        total = w.sum(axis=1)

    y_bar = (w * yn).sum(axis=1) / total
    if degree == 0:
        return y_bar

    x_bar = (w * xn).sum(axis=1) / total
    dx = xn - x_bar[:, None]
    sxx = (w * dx * dx).sum(axis=1)
    sxy = (w * dx * yn).sum(axis=1)
    solvable = sxx > 1e-10 * total * bandwidth ** 2
    slope = np.divide(sxy, sxx, out=np.zeros_like(sxx), where=solvable)
    return np.where(solvable, y_bar + slope * (x_eval - x_bar), y_bar)


def _moving_average(values: np.ndarray, length: int) -> np.ndarray:
    return np.convolve(values, np.full(length, 1.0 / length), mode="valid")


def _cycle_subseries(detrended: np.ndarray, period: int, params: StlParams,
                     robust: np.ndarray) -> np.ndarray:
    """Smooth each cycle-subseries and extend it by one cycle on both ends (length n + 2m)."""
    n = detrended.size
    out = np.empty(n + 2 * period)
    for k in range(period):
        sub = detrended[k::period]
        w = robust[k::period]
        if params.periodic:
            total = w.sum()
            level = (w * sub).sum() / total if total > 0 else sub.mean()
            smoothed = np.full(sub.size + 2, level)
        else:
            positions = np.arange(sub.size, dtype=np.float64)
            smoothed = loess(positions, sub, params.seasonal_window, 1, weights=w,
                             x_eval=np.arange(-1, sub.size + 1, dtype=np.float64))
        out[k::period] = smoothed
    return out


def _lowpass(cycle: np.ndarray, period: int, window: int) -> np.ndarray:
    smoothed = _moving_average(_moving_average(_moving_average(cycle, period), period), 3)
    return loess(np.arange(smoothed.size, dtype=np.float64), smoothed, window, 1)


def _bisquare_weights(residual: np.ndarray) -> np.ndarray:
    r = np.abs(residual)
    h = 6.0 * np.median(r)
    if h <= 0:
        return (r == 0).astype(np.float64)
    u = r / h
    return np.where(u < 1.0, (1.0 - u ** 2) ** 2, 0.0)


def stl(values, period: int, params: StlParams | None = None,
        series_id: str | None = None) -> Decomposition:
    """Additive seasonal-trend decomposition by loess of a log-scale series."""
    y = np.asarray(values, dtype=np.float64)
    n = y.size
    m = int(period)
    if m < 2:
        raise DecompositionSkipped(f"seasonal period must be >= 2, got {m}", series_id)
    if n < MIN_CYCLES * m:
        raise DecompositionSkipped(
            f"needs at least {MIN_CYCLES * m} observations ({MIN_CYCLES} cycles), got {n}", series_id
        )
    params = (params or StlParams()).resolve(m)

    positions = np.arange(n, dtype=np.float64)
    trend = np.zeros(n)
    seasonal = np.zeros(n)
    robust = np.ones(n)
    for outer in range(params.outer_iterations + 1):
        for _ in range(params.inner_iterations):
            cycle = _cycle_subseries(y - trend, m, params, robust)
            seasonal = cycle[m:m + n] - _lowpass(cycle, m, params.lowpass_window)
            trend = loess(positions, y - seasonal, params.trend_window, 1, weights=robust)
        if outer < params.outer_iterations:
            robust = _bisquare_weights(y - trend - seasonal)

    return Decomposition(trend, seasonal, y - trend - seasonal, 0.0, series_id)


def decompose_series(series, params: StlParams | None = None) -> Decomposition:
    """log_transform followed by stl for one Series."""
    log_values, offset = log_transform(series.values)
    decomposition = stl(log_values, series.period, params, series.id)
    return replace(decomposition, log_offset=offset)
