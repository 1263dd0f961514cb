"""Workload characterization: variability (CoV), regularity (period + score), intensity.

Period detection takes candidate lags from autocorrelation maxima and scores
each by seasonal strength from an additive decomposition; scores live in
[0,1) and degrade with noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import List, NamedTuple, Tuple

import numpy as np

from .errors import SeriesTooShort, ZeroMean

DEFAULT_CAP_W = 200.0

VARIABILITY_EDGES = (0.2, 0.6)
REGULARITY_EDGES = (0.2, 0.6)
INTENSITY_EDGES = (0.15, 0.5)  # fractions of the per-job cap


class Level(Enum):
    Low = "Low"
    Medium = "Medium"
    High = "High"


class ClassTriple(NamedTuple):
    variability: Level
    regularity: Level
    intensity: Level


@dataclass
class PeriodEstimate:
    period_samples: int
    score: float


@dataclass
class JobProfile:
    cov: float
    periods: List[PeriodEstimate]
    intensity_w: float
    classes: ClassTriple

    @property
    def dominant_period(self):
        return self.periods[0].period_samples if self.periods else None

    @property
    def dominant_score(self) -> float:
        return self.periods[0].score if self.periods else 0.0


def cov(series) -> float:
    """Population standard deviation over the mean."""
    x = np.asarray(series, dtype=float)
    if len(x) < 2:
        raise SeriesTooShort(f"cov needs T >= 2, got {len(x)}")
    m = float(x.mean())
    if m <= 1e-9:
        raise ZeroMean(f"mean {m} too small for CoV")
    return float(x.std() / m)


def _centered_ma(x: np.ndarray, width: int) -> np.ndarray:
    """Moving average of `width` samples, edges extended by the nearest valid value."""
    T = len(x)
    width = min(width, T)
    offset = (width - 1) // 2
    csum = np.concatenate(([0.0], np.cumsum(x)))
    n_valid = T - width + 1
    valid = (csum[width:] - csum[:-width]) / width
    out = np.empty(T)
    out[offset : offset + n_valid] = valid
    out[:offset] = valid[0]
    out[offset + n_valid :] = valid[-1]
    return out


def decompose(series, period: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Additive trend/seasonal/residual split; the three parts sum back exactly."""
    x = np.asarray(series, dtype=float)
    T = len(x)
    if T < 2 * period:
        raise SeriesTooShort(f"decompose needs T >= 2*period ({2 * period}), got {T}")
    trend = _centered_ma(x, period)
    detrended = x - trend
    phase = np.arange(T) % period
    phase_mean = np.zeros(period)
    for k in range(period):
        phase_mean[k] = detrended[phase == k].mean()
    seasonal = phase_mean[phase]
    seasonal = seasonal - seasonal.mean()
    residual = x - trend - seasonal
    return trend, seasonal, residual


def _autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    d = x - x.mean()
    n = len(d)
    size = 1
    while size < 2 * n:
        size *= 2
    f = np.fft.rfft(d, size)
    acf = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1]
    if acf[0] <= 0:
        return np.zeros(max_lag + 1)
    return acf / acf[0]


def _seasonal_strength(x: np.ndarray, period: int) -> float:
    """Score in [0,1): residual-vs-seasonal variance ratio with a small-sample penalty.

    The raw strength 1 - Var(res)/Var(seas+res) rewards long lags on pure
    noise (per-phase means soak up ~p/T of the variance); the (T+p)/(T-p)
    factor cancels that, zeroing noise and favoring the fundamental over
    its harmonics.
    """
    T = len(x)
    _, seasonal, residual = decompose(x, period)
    denom = float(np.var(seasonal + residual))
    if denom <= 1e-18:
        return 0.0
    ratio = float(np.var(residual)) / denom
    score = 1.0 - ratio * (T + period) / (T - period)
    return float(min(max(score, 0.0), 1.0 - 1e-9))


def detect_periods(series) -> List[PeriodEstimate]:
    """Candidate lags from ACF local maxima, kept when seasonal strength is positive."""
    x = np.asarray(series, dtype=float)
    T = len(x)
    if T < 8:
        raise SeriesTooShort(f"detect_periods needs T >= 8, got {T}")
    if float(x.std()) <= 1e-12:
        return []
    detrended = x - _centered_ma(x, max(4, T // 2))
    max_period = T // 2
    acf = _autocorrelation(detrended, max_period + 1)
    n_lags = max(max_period - 1, 1)
    c = max(2.0, np.sqrt(2.0 * np.log(n_lags)) + 0.5)
    threshold = c / np.sqrt(T)
    out = []
    for lag in range(2, max_period + 1):
        if acf[lag] <= threshold:
            continue
        if not (acf[lag] > acf[lag - 1] and acf[lag] > acf[lag + 1]):
            continue
        score = _seasonal_strength(x, lag)
        if score > 0.0:
            out.append(PeriodEstimate(period_samples=lag, score=score))
    out.sort(key=lambda p: (-p.score, p.period_samples))
    return out


def _bucket(value: float, edges) -> Level:
    lo, hi = edges
    if value < lo:
        return Level.Low
    if value <= hi:
        return Level.Medium
    return Level.High


def profile(series, cap: float = DEFAULT_CAP_W) -> JobProfile:
    """Assemble the characterization triple and its class labels."""
    x = np.asarray(series, dtype=float)
    try:
        c = cov(x)
        variability = _bucket(c, VARIABILITY_EDGES)
    except ZeroMean:
        c = float("inf")
        variability = Level.High
    periods = detect_periods(x) if len(x) >= 8 else []
    score = periods[0].score if periods else 0.0
    intensity_w = float(x.mean())
    classes = ClassTriple(
        variability=variability,
        regularity=_bucket(score, REGULARITY_EDGES),
        intensity=_bucket(intensity_w / cap, INTENSITY_EDGES),
    )
    return JobProfile(cov=c, periods=periods, intensity_w=intensity_w, classes=classes)
