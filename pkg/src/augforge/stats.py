"""Trend and distribution statistics over candidate accuracies.

Two reports are produced from loop output: the Pearson correlation between
epoch index and mean accuracy (the upward-trajectory figure of merit), and a
Gaussian kernel density estimate of the accuracy distribution (used to show
the early-to-late generation-quality shift).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_GRID_POINTS = 512
# Lower bound on the KDE bandwidth: keeps the kernel resolvable on the
# default grid and covers the degenerate zero-spread case.
MIN_BANDWIDTH = 0.01


def trend_correlation(series: list[tuple[float, float]]) -> float:
    """Pearson product-moment correlation over (epoch index, mean accuracy).

    Args:
        series: at least two (x, y) points with non-zero variance in both
            coordinates.

    Raises:
        ValueError: fewer than 2 points, or zero variance in either
            coordinate.
    """
    if len(series) < 2:
        raise ValueError("correlation requires at least 2 points")
    xs = np.asarray([p[0] for p in series], dtype=float)
    ys = np.asarray([p[1] for p in series], dtype=float)
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("correlation undefined for zero-variance coordinates")
    return float(np.dot(dx, dy) / np.sqrt(sxx * syy))


def silverman_bandwidth(samples: np.ndarray) -> float:
    """Silverman's rule of thumb: 0.9 * min(std, IQR/1.34) * n^(-1/5).

    Falls back to MIN_BANDWIDTH when the samples have (near-)zero spread.
    """
    n = len(samples)
    std = float(np.std(samples))
    q75, q25 = np.percentile(samples, [75, 25])
    spread = min(std, (q75 - q25) / 1.34)
    bw = 0.9 * spread * n ** (-0.2)
    return max(bw, MIN_BANDWIDTH)


@dataclass(frozen=True)
class DensityCurve:
    """A KDE sampled on a uniform grid over [0, 1]."""

    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def trapezoid_integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid))


def accuracy_density(
    accuracies,
    bandwidth: float | None = None,
    grid_points: int = DEFAULT_GRID_POINTS,
) -> DensityCurve:
    """Gaussian-kernel density of accuracies on a uniform grid over [0, 1].

    The raw kernel sum is renormalized by its own trapezoid integral over the
    grid, so the returned curve integrates to 1 on [0, 1] even when samples
    sit near the boundary (the kernel mass that would fall outside the unit
    interval is folded back by the normalization rather than lost).

    Args:
        accuracies: at least 2 samples, each in [0, 1].
        bandwidth: kernel bandwidth; defaults to Silverman's rule with a
            floor of MIN_BANDWIDTH.
        grid_points: number of uniform grid points, endpoints included.

    Raises:
        ValueError: fewer than 2 samples or non-positive bandwidth.
    """
    samples = np.asarray(list(accuracies), dtype=float)
    if samples.size < 2:
        raise ValueError("density estimation requires at least 2 samples")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(samples)
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")

    grid = np.linspace(0.0, 1.0, grid_points)
    z = (grid[:, None] - samples[None, :]) / bandwidth
    raw = np.exp(-0.5 * z * z).sum(axis=1) / (samples.size * bandwidth * np.sqrt(2 * np.pi))
    norm = float(np.trapezoid(raw, grid))
    density = raw / norm
    return DensityCurve(grid=grid, density=density, bandwidth=float(bandwidth))
