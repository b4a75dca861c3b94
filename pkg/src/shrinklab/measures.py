"""Piecewise-uniform probability measures on a grid of [0, 1]."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Masses on the cells ``[edges[i], edges[i+1])``, uniform inside each cell."""

    edges: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        if len(self.edges) != len(self.masses) + 1:
            raise ConfigError("edges must be one longer than masses")
        if np.any(np.diff(self.edges) <= 0):
            raise ConfigError("edges must be strictly increasing")
        if np.any(self.masses < 0):
            raise ConfigError("masses must be nonnegative")

    @classmethod
    def lebesgue(cls, bins: int = 1) -> "DiscreteMeasure":
        return cls(np.linspace(0.0, 1.0, bins + 1), np.full(bins, 1.0 / bins))

    @classmethod
    def uniform_on(cls, a: float, b: float, bins: int = 1024) -> "DiscreteMeasure":
        """Normalised Lebesgue measure on ``[a, b]`` discretised on a ``bins`` grid."""
        edges = np.linspace(0.0, 1.0, bins + 1)
        overlap = np.clip(np.minimum(edges[1:], b) - np.maximum(edges[:-1], a), 0, None)
        return cls(edges, overlap / overlap.sum())

    @classmethod
    def from_density(cls, edges, density) -> "DiscreteMeasure":
        edges = np.asarray(edges, dtype=float)
        masses = np.asarray(density, dtype=float) * np.diff(edges)
        return cls(edges, masses / masses.sum())

    @property
    def bins(self) -> int:
        return len(self.masses)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def density(self) -> np.ndarray:
        return self.masses / self.widths

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    def cdf(self, y) -> np.ndarray:
        cum = np.concatenate(([0.0], np.cumsum(self.masses)))
        return np.interp(y, self.edges, cum)

    def interval_mass(self, a, b) -> np.ndarray:
        return self.cdf(b) - self.cdf(a)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Inverse-CDF sampling: pick a cell by mass, then a uniform point in it."""
        cells, offsets = self.sample_cells(rng, n)
        return self.edges[cells] + offsets * self.widths[cells]

    def sample_cells(self, rng: np.random.Generator, n: int):
        cum = np.cumsum(self.masses)
        u = rng.random(n) * cum[-1]
        cells = np.minimum(np.searchsorted(cum, u, side="right"), self.bins - 1)
        return cells, rng.random(n)

    def integrate(self, f, nodes: int = 8) -> float:
        """``∫ f dμ`` by Gauss-Legendre quadrature on each cell."""
        t, w = np.polynomial.legendre.leggauss(nodes)
        mid = 0.5 * (self.edges[:-1] + self.edges[1:])
        half = 0.5 * self.widths
        xs = mid[:, None] + half[:, None] * t[None, :]
        vals = np.asarray(f(xs.ravel())).reshape(xs.shape)
        return float(np.sum(self.density * half * (vals @ w)))

    def rows(self):
        """CSV rows ``(bin_left, bin_right, value)`` with ``value`` the density."""
        dens = self.density
        return [(float(a), float(b), float(v))
                for a, b, v in zip(self.edges[:-1], self.edges[1:], dens)]
