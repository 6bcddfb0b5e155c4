"""Boxes, subbox grids and shifts.

All boxes are half-open: ``center + [-R, R)^d``.  This makes the tiling of a
macrobox by subboxes an exact partition and removes boundary ties.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_RATIO_TOL = 1e-9


@dataclass(frozen=True)
class CenteredBox:
    """The box ``center + [-radius, radius)^dim``.

    A radius of zero gives the empty box (used for degenerate windows).
    """

    radius: float
    dim: int
    center: tuple = field(default=None)

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"box radius must be >= 0, got {self.radius}")
        if self.dim < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")
        c = (0.0,) * self.dim if self.center is None else tuple(float(v) for v in self.center)
        if len(c) != self.dim:
            raise ValueError("center has wrong dimension")
        object.__setattr__(self, "center", c)

    @property
    def center_array(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    @property
    def side(self) -> float:
        return 2.0 * self.radius

    @property
    def volume(self) -> float:
        return self.side ** self.dim

    @property
    def diameter(self) -> float:
        return self.side * np.sqrt(self.dim)

    def contains(self, points) -> np.ndarray | bool:
        """Half-open membership test; works on a single point or an ``(..., d)`` array."""
        p = np.asarray(points, dtype=float)
        lo = self.center_array - self.radius
        hi = self.center_array + self.radius
        inside = np.all((p >= lo) & (p < hi), axis=-1)
        return bool(inside) if inside.ndim == 0 else inside

    def shifted(self, offset) -> "CenteredBox":
        return CenteredBox(self.radius, self.dim, tuple(self.center_array + np.asarray(offset, float)))

    def is_subset_of(self, other: "CenteredBox") -> bool:
        lo, hi = self.center_array - self.radius, self.center_array + self.radius
        olo, ohi = other.center_array - other.radius, other.center_array + other.radius
        return bool(np.all(lo >= olo - 1e-12) and np.all(hi <= ohi + 1e-12))

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.center_array + rng.uniform(-self.radius, self.radius, size=(n, self.dim))

    def wrap(self, points: np.ndarray) -> np.ndarray:
        """Map points into the box by periodic identification."""
        c = self.center_array
        return c + np.mod(np.asarray(points) - c + self.radius, self.side) - self.radius


@dataclass(frozen=True)
class SubboxGrid:
    """Partition of ``macro`` into cells ``z + [-R, R)^d`` with ``z`` in ``2R Z^d``."""

    macro: CenteredBox
    cell_radius: float
    centers: np.ndarray = field(repr=False, compare=False)

    @property
    def per_axis(self) -> int:
        return int(round(self.macro.radius / self.cell_radius))

    @property
    def n_cells(self) -> int:
        return len(self.centers)

    @property
    def dim(self) -> int:
        return self.macro.dim

    def cell_box(self, index: int) -> CenteredBox:
        return CenteredBox(self.cell_radius, self.dim, tuple(self.centers[index]))

    def cell_indices(self, points) -> np.ndarray:
        """Flat cell index of each point, -1 for points outside the macrobox."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.per_axis
        rel = (p - self.macro.center_array + self.macro.radius) / (2.0 * self.cell_radius)
        ijk = np.floor(rel).astype(np.int64)
        inside = self.macro.contains(p) & np.all((ijk >= 0) & (ijk < n), axis=-1)
        ijk = np.clip(ijk, 0, n - 1)
        flat = np.ravel_multi_index(tuple(ijk.T), (n,) * self.dim)
        return np.where(inside, flat, -1)


def build_grid(macro_radius: float, cell_radius: float, d: int) -> SubboxGrid:
    """Tile ``[-macro_radius, macro_radius)^d`` by cells of half side ``cell_radius``.

    The ratio must be an odd integer so that one cell is centred at the origin.
    """
    if cell_radius <= 0 or macro_radius <= 0:
        raise ValueError("macro_radius and cell_radius must be positive")
    ratio = macro_radius / cell_radius
    n = int(round(ratio))
    if abs(ratio - n) > _RATIO_TOL * max(1.0, ratio) or n % 2 == 0:
        raise ValueError(
            f"macro_radius/cell_radius = {ratio:g} must be an odd positive integer "
            "(non-commensurate radii)"
        )
    half = (n - 1) // 2
    axis = 2.0 * cell_radius * np.arange(-half, half + 1)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=-1)
    return SubboxGrid(CenteredBox(float(macro_radius), d), float(cell_radius), centers)


def subbox_of(point, grid: SubboxGrid) -> np.ndarray | None:
    """Center ``z`` of the cell containing ``point``, or ``None`` outside the macrobox."""
    idx = grid.cell_indices(point)[0]
    if idx < 0:
        return None
    return grid.centers[idx].copy()


@dataclass(frozen=True)
class Shift:
    """The shift operator theta_x, mapping x to the origin."""

    vector: tuple

    def __post_init__(self):
        object.__setattr__(self, "vector", tuple(float(v) for v in self.vector))

    def then(self, other: "Shift") -> "Shift":
        return Shift(tuple(np.add(self.vector, other.vector)))

    def inverse(self) -> "Shift":
        return Shift(tuple(-np.asarray(self.vector)))

    def apply(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) - np.asarray(self.vector)


def shift_config(config, by: Shift):
    """Translate every coordinate of ``config`` by ``-by.vector``."""
    return config.translated(-np.asarray(by.vector, dtype=float))
