"""Uniform truncation grid on [-L, L]."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Grid", "GridError"]


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Nodes ``x_i = -L + i h`` with ``h = 2L/(n-1)``.

    Node ``i`` owns the cell ``[x_i - h/2, x_i + h/2]``; functions vanish outside
    the union of cells, i.e. outside ``(-L - h/2, L + h/2)``.
    """

    half_width: float
    n: int

    def __post_init__(self):
        if self.n < 16:
            raise GridError(f"grid needs n >= 16 nodes, got {self.n}")
        if not self.half_width > 0:
            raise GridError("half_width must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.n)

    @property
    def box(self) -> tuple[float, float]:
        """Open interval outside of which grid functions vanish."""
        edge = self.half_width + 0.5 * self.spacing
        return (-edge, edge)

    def indices_within(self, center: float, radius: float) -> np.ndarray:
        """Indices of nodes in the open ball B(center, radius)."""
        return np.flatnonzero(np.abs(self.nodes - center) < radius)

    def check_supports(self, *radii: float) -> None:
        for r in radii:
            if r > self.half_width / 2.0:
                raise GridError(f"support radius {r} exceeds L/2 = {self.half_width / 2}")

    def check_resolution(self, alpha: float, beta: float) -> None:
        if self.spacing ** (beta - alpha) > 0.1:
            raise GridError(
                f"spacing {self.spacing:.4g} does not resolve beta={beta}: h^(beta-alpha) > 0.1")

    def interpolate(self, values: np.ndarray, x) -> np.ndarray:
        """Piecewise-linear interpolation of nodal values, zero outside [-L, L]."""
        x = np.asarray(x, dtype=float)
        return np.interp(x, self.nodes, values, left=0.0, right=0.0)
