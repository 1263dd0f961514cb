"""Usage-to-watts mapping: cubic curve in CPU utilization plus a linear memory term."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import NonMonotoneFit, OutOfRange, Underdetermined

_GRID = np.linspace(0.0, 1.0, 101)


@dataclass
class PowerCurve:
    """watts(u, m) = c0 + c1*u + c2*u^2 + c3*u^3 + mem_coeff*m."""

    coeffs: np.ndarray  # constant -> cubic
    mem_coeff_w_per_gb: float = 0.0
    baseload_w: float = 0.0
    peak_w: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (4,):
            raise Underdetermined("PowerCurve needs exactly 4 polynomial coefficients")
        grid_vals = self._poly(_GRID)
        if np.any(np.diff(grid_vals) < -1e-9):
            raise NonMonotoneFit("curve decreases somewhere on [0,1]")
        if abs(grid_vals[0] - self.baseload_w) > 1e-6:
            raise NonMonotoneFit(
                f"value at u=0 is {grid_vals[0]:.6f}, declared baseload {self.baseload_w:.6f}"
            )
        if grid_vals[-1] > self.peak_w * 1.001 + 1e-9:
            raise NonMonotoneFit(
                f"value at u=1 ({grid_vals[-1]:.3f}W) exceeds declared peak {self.peak_w:.3f}W"
            )

    def _poly(self, u):
        c = self.coeffs
        return c[0] + u * (c[1] + u * (c[2] + u * c[3]))

    def power_of_series(self, cpu_util: np.ndarray, mem_gb: np.ndarray) -> np.ndarray:
        u = np.asarray(cpu_util, dtype=float)
        m = np.asarray(mem_gb, dtype=float)
        if np.any((u < 0) | (u > 1)):
            raise OutOfRange("cpu_util outside [0,1]")
        if np.any(m < 0):
            raise OutOfRange("mem_gb negative")
        return self._poly(u) + self.mem_coeff_w_per_gb * m


def power_of(
    curve: PowerCurve, cpu_util: float, mem_gb: float = 0.0, noise_seed: Optional[int] = None
) -> float:
    """Evaluate the curve at one point, optionally with seeded 2% jitter."""
    if not (0.0 <= cpu_util <= 1.0):
        raise OutOfRange(f"cpu_util {cpu_util} outside [0,1]")
    if mem_gb < 0:
        raise OutOfRange(f"mem_gb {mem_gb} negative")
    value = float(curve._poly(cpu_util) + curve.mem_coeff_w_per_gb * mem_gb)
    if noise_seed is not None:
        rng = np.random.default_rng(noise_seed)
        value += float(rng.normal(0.0, 0.02 * abs(value)))
        value = float(np.clip(value, 0.0, curve.peak_w))
    return value


def fit_power_curve(samples: Sequence[Tuple[float, float, float]]) -> PowerCurve:
    """OLS fit of watts against [1, u, u^2, u^3, mem] via normal equations.

    The mem column is dropped when it carries no variance, otherwise the
    normal matrix is singular and exact polynomial recovery impossible.
    """
    if len(samples) < 8:
        raise Underdetermined(f"need >= 8 samples, got {len(samples)}")
    u = np.array([s[0] for s in samples], dtype=float)
    m = np.array([s[1] for s in samples], dtype=float)
    w = np.array([s[2] for s in samples], dtype=float)
    if np.any((u < 0) | (u > 1)):
        raise OutOfRange("cpu_util outside [0,1]")
    if len(np.unique(u)) < 3:
        raise Underdetermined("need at least 3 distinct cpu_util values")
    use_mem = float(m.std()) > 1e-12
    cols = [np.ones_like(u), u, u**2, u**3]
    if use_mem:
        cols.append(m)
    X = np.stack(cols, axis=1)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise Underdetermined("rank-deficient design (too few distinct utilization levels)")
    beta = np.linalg.solve(X.T @ X, X.T @ w)
    coeffs = beta[:4]
    mem_coeff = float(beta[4]) if use_mem else 0.0
    max_mem = float(m.max()) if use_mem else 0.0
    baseload = float(coeffs[0])
    peak = float(coeffs.sum() + mem_coeff * max_mem)
    return PowerCurve(
        coeffs=coeffs,
        mem_coeff_w_per_gb=mem_coeff,
        baseload_w=baseload,
        peak_w=peak,
    )


def reference_curve() -> PowerCurve:
    """Default server curve: 105W idle rising to 175W at full utilization."""
    return PowerCurve(
        coeffs=np.array([105.0, 50.0, 10.0, 10.0]),
        mem_coeff_w_per_gb=0.0,
        baseload_w=105.0,
        peak_w=175.0,
    )
