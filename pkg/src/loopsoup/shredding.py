"""Projections of loop/interlacement configurations onto a box.

A loop whose particles all lie in ``W`` is kept whole.  Every other path is
cut into W-shreds: maximal runs of consecutive particles inside ``W``, each
extended by the one leg that leaves ``W``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .geometry import CenteredBox, SubboxGrid
from .paths import InterlacementFragment, InterlacementWindow, Loop, LoopConfiguration, Shred


@dataclass(eq=False)
class ShredConfiguration:
    shreds: list
    host_box: CenteredBox

    def __len__(self) -> int:
        return len(self.shreds)

    def __iter__(self):
        return iter(self.shreds)

    def n_particles(self) -> int:
        return sum(s.length for s in self.shreds)

    def keys(self) -> Counter:
        return Counter(s.key() for s in self.shreds)

    def translated(self, offset) -> "ShredConfiguration":
        off = np.asarray(offset, dtype=float)
        return ShredConfiguration([s.translated(off) for s in self.shreds], self.host_box.shifted(off))


@dataclass(eq=False)
class BoundaryShredConfiguration:
    """Multiset of (entry site, particle count, exit site) triples."""

    triples: list
    host_box: CenteredBox

    def __post_init__(self):
        for x, l, y in self.triples:
            if l < 1:
                raise ValueError("shred length must be >= 1")
            if not self.host_box.contains(x) or self.host_box.contains(y):
                raise ValueError("entry must lie inside and exit outside the host box")

    def __len__(self) -> int:
        return len(self.triples)

    def n_particles(self) -> int:
        return int(sum(l for _, l, _ in self.triples))

    def keys(self) -> Counter:
        return Counter((np.asarray(x, float).tobytes(), int(l), np.asarray(y, float).tobytes())
                       for x, l, y in self.triples)


def restrict_loops(config: LoopConfiguration, W: CenteredBox) -> LoopConfiguration:
    """Loops anchored in ``W`` with every particle in ``W``."""
    keep = [lp for lp in config.loops if np.all(W.contains(lp.particles()))]
    return config.with_loops(keep)


def _runs(inside: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs ``[start, stop)`` of True values in a 1-d mask."""
    padded = np.concatenate([[False], inside, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def shred_path(path, W: CenteredBox) -> list[Shred]:
    """W-shreds of a loop, interlacement fragment or shred.

    Loops are cyclic.  Open paths (fragments, shreds) contribute only runs
    that are followed by a particle outside ``W``; a run reaching the stored
    end of the path has no recorded exit and is left out.
    """
    if isinstance(path, Loop):
        p = path.particles()
        inside = np.atleast_1d(W.contains(p))
        if inside.all():
            raise ValueError("every particle of the loop lies in W; it belongs to the loop part")
        if not inside.any():
            return []
        first_out = int(np.argmin(inside))
        k = len(p)
        order = (np.arange(k) + first_out) % k
        return [Shred(path.legs[order[a:b]], path.beta, W) for a, b in _runs(inside[order])]
    if isinstance(path, (InterlacementFragment, Shred)):
        legs = path.legs
        endpoints = np.concatenate([legs[:, 0], legs[-1:, -1]], axis=0)
        inside = np.atleast_1d(W.contains(endpoints))
        n = len(legs)
        return [Shred(legs[a:b], path.beta, W) for a, b in _runs(inside) if b <= n]
    raise TypeError(f"cannot shred {type(path).__name__}")


def shred_config(config: LoopConfiguration | None, W: CenteredBox,
                 window: InterlacementWindow | None = None) -> ShredConfiguration:
    """Shreds of every loop not contained in ``W`` plus those of every fragment."""
    shreds: list[Shred] = []
    if config is not None:
        for lp in config.loops:
            inside = np.atleast_1d(W.contains(lp.particles()))
            if inside.any() and not inside.all():
                shreds.extend(shred_path(lp, W))
    if window is not None:
        for frag in window.fragments:
            shreds.extend(shred_path(frag, W))
    return ShredConfiguration(shreds, W)


def project(config: LoopConfiguration, W: CenteredBox, window: InterlacementWindow | None = None,
            shreds: ShredConfiguration | None = None):
    """``(restricted loops, shreds)`` of a configuration, optionally with extra shreds."""
    loops = restrict_loops(config, W)
    sc = shred_config(config, W, window)
    if shreds is not None:
        for s in shreds:
            sc.shreds.extend(shred_path(s, W))
    return loops, sc


def _loop_keys(config: LoopConfiguration) -> Counter:
    return Counter(np.ascontiguousarray(lp.legs).tobytes() for lp in config.loops)


def consistency_check(config: LoopConfiguration, W: CenteredBox, W2: CenteredBox,
                      window: InterlacementWindow | None = None) -> bool:
    """Whether projecting onto ``W2`` and then onto ``W`` equals projecting onto ``W``."""
    if not W.is_subset_of(W2):
        raise ValueError("W must be contained in the larger box")
    loops_big, shreds_big = project(config, W2, window)
    loops_two, shreds_two = project(loops_big, W, shreds=shreds_big)
    loops_one, shreds_one = project(config, W, window)
    return _loop_keys(loops_two) == _loop_keys(loops_one) and shreds_two.keys() == shreds_one.keys()


def boundary_shreds(sc: ShredConfiguration) -> BoundaryShredConfiguration:
    triples = [(s.entry.copy(), s.length, s.exit.copy()) for s in sc.shreds]
    return BoundaryShredConfiguration(triples, sc.host_box)


def _loop_cells(config: LoopConfiguration, grid: SubboxGrid):
    """Per loop: its unique cell index, or -1 when it is R-crossing."""
    if len(config) == 0:
        return np.zeros(0, np.int64)
    particles = np.concatenate([lp.particles() for lp in config.loops], axis=0)
    starts = np.concatenate([[0], np.cumsum(config.lengths())[:-1]])
    cells = grid.cell_indices(particles)
    lo = np.minimum.reduceat(cells, starts)
    hi = np.maximum.reduceat(cells, starts)
    # a particle outside the macrobox (-1) makes the loop crossing
    return np.where((lo == hi) & (lo >= 0), lo, -1)


@dataclass(frozen=True)
class CondensateCounters:
    N_ell: int
    N_R_crossing: int
    N_not_crossing: int
    N_long: int
    N_short: int
    histogram: dict = field(default_factory=dict)  # loop length -> particles in loops of that length

    def as_dict(self) -> dict:
        return {
            "N_ell": self.N_ell, "N_R_crossing": self.N_R_crossing, "N_not_crossing": self.N_not_crossing,
            "N_long": self.N_long, "N_short": self.N_short,
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
        }


def condensate_counters(config: LoopConfiguration, grid: SubboxGrid, L: int) -> CondensateCounters:
    """Particle counts split by R-crossing and by loop length ``> L``."""
    lengths = config.lengths()
    if len(lengths) == 0:
        return CondensateCounters(0, 0, 0, 0, 0, {})
    crossing = _loop_cells(config, grid) < 0
    total = int(lengths.sum())
    n_cross = int(lengths[crossing].sum())
    n_long = int(lengths[lengths > L].sum())
    ks, counts = np.unique(lengths, return_counts=True)
    hist = {int(k): int(k * c) for k, c in zip(ks, counts)}
    return CondensateCounters(total, n_cross, total - n_cross, n_long, total - n_long, hist)


@dataclass(eq=False)
class EmpiricalSubboxMeasure:
    """Origin-shifted (loops, shreds) snapshots of every cell, each of weight ``1/#cells``."""

    cells: list
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.cells)

    def integrate(self, fn) -> float:
        return float(sum(w * fn(loops, shreds) for w, (loops, shreds) in zip(self.weights, self.cells)))

    def boundary(self) -> list[BoundaryShredConfiguration]:
        return [boundary_shreds(shreds) for _, shreds in self.cells]


def empirical_measure(config: LoopConfiguration, grid: SubboxGrid,
                      window: InterlacementWindow | None = None) -> EmpiricalSubboxMeasure:
    n = grid.n_cells
    loop_cell = _loop_cells(config, grid)
    members: list[list[Loop]] = [[] for _ in range(n)]
    for lp, c in zip(config.loops, loop_cell):
        if c >= 0:
            members[c].append(lp)
    touched: list[list] = [[] for _ in range(n)]
    for lp, c in zip(config.loops, loop_cell):
        if c < 0:
            for cell in np.unique(grid.cell_indices(lp.particles())):
                if cell >= 0:
                    touched[cell].append(lp)
    if window is not None:
        for frag in window.fragments:
            for cell in np.unique(grid.cell_indices(frag.particles())):
                if cell >= 0:
                    touched[cell].append(frag)
    cells = []
    for idx in range(n):
        W = grid.cell_box(idx)
        z = grid.centers[idx]
        shreds = [s for path in touched[idx] for s in shred_path(path, W)]
        loops = LoopConfiguration(members[idx], W, config.beta, config.substeps)
        cells.append((loops.translated(-z), ShredConfiguration(shreds, W).translated(-z)))
    return EmpiricalSubboxMeasure(cells, np.full(n, 1.0 / n))
