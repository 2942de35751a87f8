"""Truncated Gaussian histograms on a 1-D grid and 1-D W2 evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMass, DimensionMismatch
from .ot_core import as_histogram, default_rho, floor_histogram


@dataclass(frozen=True)
class GridSpec:
    lo: float = -5.0
    hi: float = 5.0
    n: int = 100

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("grid needs lo < hi")
        if self.n < 2:
            raise ValueError("grid needs at least two points")

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parse ``lo:hi:n``."""
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid must look like lo:hi:n, got {text!r}")
        return cls(float(parts[0]), float(parts[1]), int(parts[2]))

    def __str__(self):
        return f"{self.lo:g}:{self.hi:g}:{self.n}"


@dataclass(frozen=True)
class GaussianFamily:
    mean_range: tuple[float, float] = (-1.0, 1.0)
    std_range: tuple[float, float] = (0.5, 1.5)
    count: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.std_range[0] <= 0 or self.std_range[1] < self.std_range[0]:
            raise ValueError("std_range must be a positive interval")
        if self.mean_range[1] < self.mean_range[0]:
            raise ValueError("mean_range must be an interval")
        if self.count < 1:
            raise ValueError("count must be positive")


@dataclass(frozen=True)
class MeasureSet:
    """Sampled histograms (one per row) with the Gaussian parameters behind them."""

    histograms: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    grid: GridSpec = field(default_factory=GridSpec)

    def __len__(self):
        return self.histograms.shape[0]

    def __iter__(self):
        return iter(self.histograms)


def discretize_gaussian(mean: float, std: float, grid: GridSpec, rho: float | None = None) -> np.ndarray:
    """Gaussian density on the grid, renormalized over [lo, hi], then floored."""
    z = (grid.points - mean) / std
    dens = np.exp(-0.5 * z * z)
    if not dens.sum() > 0:
        raise DegenerateMass(f"N({mean}, {std}^2) has no mass on grid [{grid.lo}, {grid.hi}]")
    return floor_histogram(dens, default_rho(grid.n) if rho is None else rho)


def sample_truncated_gaussians(fam: GaussianFamily, grid: GridSpec, rho: float | None = None) -> MeasureSet:
    """Draw ``fam.count`` truncated Gaussian histograms; deterministic in ``fam.seed``."""
    rng = np.random.default_rng(fam.seed)
    means = rng.uniform(*fam.mean_range, size=fam.count)
    stds = rng.uniform(*fam.std_range, size=fam.count)
    hists = np.stack([discretize_gaussian(mu, s, grid, rho) for mu, s in zip(means, stds)])
    return MeasureSet(histograms=hists, means=means, stds=stds, grid=grid)


def true_gaussian_barycenter(means, stds, grid: GridSpec, rho: float | None = None) -> np.ndarray:
    """Discretized W2 barycenter of 1-D Gaussians: averaged mean and averaged std."""
    means = np.atleast_1d(np.asarray(means, dtype=float))
    stds = np.atleast_1d(np.asarray(stds, dtype=float))
    if means.size == 0 or means.shape != stds.shape:
        raise DimensionMismatch("means and stds must be nonempty and of equal length")
    return discretize_gaussian(float(means.mean()), float(stds.mean()), grid, rho)


def w2_distance_1d(p, q, grid: GridSpec | np.ndarray) -> float:
    """W2 between histograms on a common sorted 1-D support via the quantile coupling."""
    x = grid.points if isinstance(grid, GridSpec) else np.asarray(grid, dtype=float)
    p = as_histogram(p, x.shape[0])
    q = as_histogram(q, x.shape[0])
    cp = np.cumsum(p)
    cq = np.cumsum(q)
    cp[-1] = cq[-1] = 1.0
    levels = np.union1d(cp, cq)
    widths = np.diff(np.concatenate([[0.0], levels]))
    # quantile index for each level interval (right-closed)
    mids = levels - widths / 2
    ip = np.minimum(np.searchsorted(cp, mids), x.shape[0] - 1)
    iq = np.minimum(np.searchsorted(cq, mids), x.shape[0] - 1)
    w2sq = float(np.sum(widths * (x[ip] - x[iq]) ** 2))
    return float(np.sqrt(max(w2sq, 0.0)))
