"""Gaussian kernel density estimates of penalty distributions."""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from estimation.exceptions import InputError

logger = logging.getLogger(__name__)

GRID_POINTS = 512
_SPAN = 3.0


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    degenerate: bool = False

    def integral(self):
        return float(np.trapezoid(self.density, self.grid))

    def peak(self):
        k = int(np.argmax(self.density))
        return float(self.grid[k]), float(self.density[k])


def bw_silverman(x):
    """Silverman's rule, 0.9 * min(sd, IQR / 1.34) * n^(-1/5)."""
    x_std = np.std(x, ddof=1)
    x_iqr = stats.iqr(x)
    a = min(x_std, x_iqr / 1.34) if x_iqr > 0 else x_std
    return 0.9 * a * len(x) ** (-0.2)


def kde(samples, bandwidth=None):
    """Density on a 512-point grid spanning [min - 3h, max + 3h]."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise InputError(f"kernel density needs at least 2 samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise InputError("kernel density samples contain non-finite values")
    if bandwidth is not None and not bandwidth > 0:
        raise InputError(f"bandwidth must be positive, got {bandwidth}")

    degenerate = bool(np.ptp(x) == 0)
    if degenerate:
        # All mass at one point: a narrow spike
        h = bandwidth or 1e-3 * max(1.0, abs(x[0]))
        logger.warning(f"Zero-variance samples at {x[0]:.6g}; density is a degenerate spike")
    else:
        h = bandwidth or bw_silverman(x)

    grid = np.linspace(x.min() - _SPAN * h, x.max() + _SPAN * h, GRID_POINTS)
    density = stats.norm.pdf((grid[:, None] - x[None, :]) / h).sum(axis=1) / (x.size * h)
    return DensityEstimate(grid=grid, density=density, bandwidth=float(h), degenerate=degenerate)


def penalty_densities(result, rho=None):
    """One density per method over its per-replication penalties, plus the threshold penalty."""
    out = {}
    methods = []
    for method, _ in result.cells():
        if method not in methods and method != 'zeros':
            methods.append(method)
    for method in methods:
        values = result.penalties(method, rho)
        if values.size >= 2:
            out[method] = kde(values)
    thresholds = result.thresholds(rho)
    if thresholds.size >= 2:
        out['threshold'] = kde(thresholds)
    return out
