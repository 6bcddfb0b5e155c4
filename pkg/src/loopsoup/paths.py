"""Discretized Brownian legs, loops, shreds and interlacement fragments.

A leg is a path on ``[0, beta]`` stored at ``substeps + 1`` equally spaced
times.  Paths made of several legs are stored as one array of shape
``(n_legs, substeps + 1, d)`` whose rows are the legs; the particles of the
path are ``legs[:, 0]``.

Brownian motion has generator Laplacian, so each coordinate of an increment
over time ``t`` has variance ``2 t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CenteredBox

DEFAULT_SUBSTEPS = 16


@dataclass(frozen=True)
class Leg:
    points: np.ndarray
    beta: float

    @property
    def substeps(self) -> int:
        return self.points.shape[0] - 1

    @property
    def particle(self) -> np.ndarray:
        return self.points[0]


def _bridge_grid(starts, ends, n_steps: int, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Sequentially sample Brownian bridges from ``starts`` to ``ends``.

    Returns an array ``(n, n_steps + 1, d)``.  Point ``j`` is drawn from its
    Gaussian conditional law given point ``j-1`` and the pinned endpoint.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    ends = np.atleast_2d(np.asarray(ends, dtype=float))
    n, d = starts.shape
    out = np.empty((n, n_steps + 1, d))
    out[:, 0] = starts
    out[:, -1] = ends
    cur = starts
    for j in range(1, n_steps):
        remaining = (n_steps - j + 1) * dt
        mean = cur + (ends - cur) * (dt / remaining)
        var = 2.0 * dt * (remaining - dt) / remaining
        cur = mean + np.sqrt(var) * rng.standard_normal((n, d))
        out[:, j] = cur
    return out


def sample_bridge(x, y, duration: float, substeps: int, rng: np.random.Generator) -> Leg:
    """Brownian bridge from ``x`` to ``y`` in time ``duration``."""
    if duration <= 0:
        raise ValueError("bridge duration must be positive")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    pts = _bridge_grid(x, y, substeps, duration / substeps, rng)[0]
    return Leg(pts, float(duration))


def fill_legs(particles, beta: float, substeps: int, rng: np.random.Generator) -> np.ndarray:
    """Interpolate consecutive particles by independent Brownian bridges.

    ``particles`` has shape ``(m + 1, d)``; the result is ``(m, substeps + 1, d)``.
    """
    p = np.asarray(particles, dtype=float)
    return _bridge_grid(p[:-1], p[1:], substeps, beta / substeps, rng)


def bridge_legs(starts, ends, beta: float, substeps: int, rng: np.random.Generator) -> np.ndarray:
    """Independent Brownian bridges of duration ``beta`` between paired points."""
    return _bridge_grid(starts, ends, substeps, beta / substeps, rng)


def walk_bridge(starts, ends, k: int, beta: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian random-walk bridges with ``k`` steps of variance ``2 beta``.

    Returns ``(n, k + 1, d)`` including both pinned endpoints.
    """
    return _bridge_grid(starts, ends, k, beta, rng)


def sample_loops(anchors, k: int, beta: float, substeps: int, rng: np.random.Generator) -> np.ndarray:
    """Batch version of :func:`sample_loop`; returns ``(n, k, substeps + 1, d)``."""
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    n, d = anchors.shape
    coarse = walk_bridge(anchors, anchors, k, beta, rng)  # (n, k+1, d)
    legs = _bridge_grid(
        coarse[:, :-1].reshape(-1, d), coarse[:, 1:].reshape(-1, d), substeps, beta / substeps, rng
    )
    return legs.reshape(n, k, substeps + 1, d)


def spread(leg) -> float:
    """Largest distance of a stored leg point from the leg's particle."""
    pts = leg.points if isinstance(leg, Leg) else np.asarray(leg)
    return float(np.max(np.linalg.norm(pts - pts[0], axis=-1)))


def leg_spreads(legs: np.ndarray) -> np.ndarray:
    """Spreads of a stack of legs ``(m, S+1, d)``."""
    if len(legs) == 0:
        return np.zeros(0)
    return np.max(np.linalg.norm(legs - legs[:, :1], axis=-1), axis=-1)


class _LegPath:
    """Shared behaviour of paths stored as a leg stack."""

    legs: np.ndarray
    beta: float

    @property
    def n_legs(self) -> int:
        return self.legs.shape[0]

    @property
    def substeps(self) -> int:
        return self.legs.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.legs.shape[2]

    def leg(self, i: int) -> Leg:
        return Leg(self.legs[i], self.beta)

    def leg_list(self) -> list[Leg]:
        return [Leg(p, self.beta) for p in self.legs]


@dataclass(frozen=True, eq=False)
class Loop(_LegPath):
    """Closed path of ``k`` legs; ``legs[0, 0]`` is the anchor."""

    legs: np.ndarray
    beta: float

    def __post_init__(self):
        legs = np.asarray(self.legs, dtype=float)
        if legs.ndim != 3 or legs.shape[0] < 1 or legs.shape[1] < 2:
            raise ValueError("loop legs must have shape (k>=1, substeps+1>=2, d)")
        object.__setattr__(self, "legs", legs)

    @property
    def length(self) -> int:
        return self.legs.shape[0]

    @property
    def anchor(self) -> np.ndarray:
        return self.legs[0, 0]

    def particles(self) -> np.ndarray:
        return self.legs[:, 0]

    def is_closed(self) -> bool:
        nxt = np.roll(self.legs[:, 0], -1, axis=0)
        return bool(np.array_equal(self.legs[:, -1], nxt))

    def translated(self, offset) -> "Loop":
        return Loop(self.legs + np.asarray(offset, dtype=float), self.beta)

    def rerooted(self, j: int) -> "Loop":
        return Loop(np.roll(self.legs, -j, axis=0), self.beta)


def particles(loop: Loop) -> np.ndarray:
    """The ``k`` particles of a loop, starting at its anchor."""
    return loop.particles()


def sample_loop(x, k: int, beta: float, substeps: int, rng: np.random.Generator) -> Loop:
    """Brownian loop of ``k`` legs anchored at ``x`` (normalized bridge law)."""
    if k < 1:
        raise ValueError("loop length must be >= 1")
    return Loop(sample_loops(np.asarray(x, float)[None], k, beta, substeps, rng)[0], float(beta))


@dataclass(frozen=True, eq=False)
class Shred(_LegPath):
    """A W-shred: ``l`` legs whose particles lie in ``host_box``; the last leg exits."""

    legs: np.ndarray
    beta: float
    host_box: CenteredBox

    @property
    def length(self) -> int:
        return self.legs.shape[0]

    @property
    def entry(self) -> np.ndarray:
        return self.legs[0, 0]

    @property
    def exit(self) -> np.ndarray:
        return self.legs[-1, -1]

    def particles(self) -> np.ndarray:
        return self.legs[:, 0]

    def is_valid(self) -> bool:
        return bool(np.all(self.host_box.contains(self.particles())) and not self.host_box.contains(self.exit))

    def translated(self, offset) -> "Shred":
        off = np.asarray(offset, dtype=float)
        return Shred(self.legs + off, self.beta, self.host_box.shifted(off))

    def key(self) -> bytes:
        """Coordinate-exact identity used for multiset comparisons."""
        return np.ascontiguousarray(self.legs).tobytes()


@dataclass(frozen=True, eq=False)
class InterlacementFragment(_LegPath):
    """Finite piece of a bi-infinite beta-spaced trajectory near ``window``.

    ``entry_index`` is the particle index of the first window visit (the
    canonical time origin).  ``escaped`` records whether the backward and the
    forward walk reached the escape horizon.
    """

    legs: np.ndarray
    beta: float
    window: CenteredBox
    entry_index: int = 0
    escaped: tuple = (True, True)
    provenance: dict = field(default_factory=dict)

    def particles(self) -> np.ndarray:
        """All ``n_legs + 1`` particles, including the final endpoint."""
        return np.concatenate([self.legs[:, 0], self.legs[-1:, -1]], axis=0)

    @property
    def entry_point(self) -> np.ndarray:
        return self.legs[self.entry_index, 0]

    def translated(self, offset) -> "InterlacementFragment":
        off = np.asarray(offset, dtype=float)
        return InterlacementFragment(
            self.legs + off, self.beta, self.window.shifted(off), self.entry_index, self.escaped,
            dict(self.provenance),
        )


@dataclass(eq=False)
class LoopConfiguration:
    """A finite set of loops anchored in ``box``.

    With ``period`` set (periodic boundary condition) coordinates live in the
    covering space and displacements use the minimum image convention.
    """

    loops: list
    box: CenteredBox
    beta: float
    substeps: int = DEFAULT_SUBSTEPS
    period: float | None = None

    def __len__(self) -> int:
        return len(self.loops)

    def __iter__(self):
        return iter(self.loops)

    @property
    def dim(self) -> int:
        return self.box.dim

    def lengths(self) -> np.ndarray:
        return np.array([lp.length for lp in self.loops], dtype=np.int64)

    def anchors(self) -> np.ndarray:
        if not self.loops:
            return np.zeros((0, self.dim))
        return np.array([lp.anchor for lp in self.loops])

    def n_particles(self) -> int:
        return int(self.lengths().sum())

    def stacked_legs(self) -> tuple[np.ndarray, np.ndarray]:
        """All legs ``(M, S+1, d)`` and the owning loop index of each leg."""
        if not self.loops:
            return np.zeros((0, self.substeps + 1, self.dim)), np.zeros(0, dtype=np.int64)
        legs = np.concatenate([lp.legs for lp in self.loops], axis=0)
        owner = np.repeat(np.arange(len(self.loops)), self.lengths())
        return legs, owner

    def particle_positions(self, loop: Loop) -> np.ndarray:
        p = loop.particles()
        return self.box.wrap(p) if self.period is not None else p

    def with_loops(self, loops) -> "LoopConfiguration":
        return LoopConfiguration(list(loops), self.box, self.beta, self.substeps, self.period)

    def translated(self, offset) -> "LoopConfiguration":
        off = np.asarray(offset, dtype=float)
        return LoopConfiguration(
            [lp.translated(off) for lp in self.loops], self.box.shifted(off), self.beta, self.substeps,
            self.period,
        )


@dataclass(eq=False)
class InterlacementWindow:
    """Interlacement fragments recorded around ``window`` at density ``v``."""

    fragments: list
    window: CenteredBox
    beta: float
    v: float
    substeps: int = DEFAULT_SUBSTEPS
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.fragments)

    def translated(self, offset) -> "InterlacementWindow":
        off = np.asarray(offset, dtype=float)
        return InterlacementWindow(
            [f.translated(off) for f in self.fragments], self.window.shifted(off), self.beta, self.v,
            self.substeps, dict(self.provenance),
        )
