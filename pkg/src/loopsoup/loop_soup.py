"""The reference Poisson loop soup in a box, with boundary conditions.

Every boundary condition is realized by thinning the free soup: loops are
drawn with the free per-length rates ``|box| q_k``, uniform anchors and the
normalized bridge shape law, and are kept only if they satisfy the condition.
This is exact in distribution for the particle condition and exact at grid
resolution for the Dirichlet condition.  The periodic condition keeps every
loop and measures displacements by minimum image; winding sectors are not
sampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .freegas import exp_weighted_sum, free_rate
from .geometry import CenteredBox
from .paths import DEFAULT_SUBSTEPS, Loop, LoopConfiguration, bridge_legs, sample_loops, walk_bridge

__all__ = [
    "BoundaryCondition", "SoupIntensity", "RateEstimate", "free_rate", "make_intensity",
    "estimate_rate_bc", "sample_soup", "satisfies_bc", "log_density_loop", "log_particle_density",
]


class BoundaryCondition(str, Enum):
    FREE = "free"
    PERIODIC = "periodic"
    DIRICHLET0 = "dirichlet0"
    PARTICLE = "particle"

    @classmethod
    def parse(cls, label) -> "BoundaryCondition":
        if isinstance(label, cls):
            return label
        aliases = {"per": "periodic", "par": "particle", "0": "dirichlet0", "dirichlet": "dirichlet0"}
        try:
            return cls(aliases.get(str(label), str(label)))
        except ValueError:
            raise ValueError(f"unknown boundary condition {label!r}") from None


@dataclass(frozen=True)
class SoupIntensity:
    """Per-length Poisson rates of the soup in ``box``.

    ``free_rates[k-1] = |box| q_k`` drive the sampler; ``rates`` are the
    boundary-corrected rates when they are known (``None`` otherwise).
    """

    beta: float
    d: int
    box: CenteredBox
    bc: BoundaryCondition
    kmax: int
    free_rates: np.ndarray = field(repr=False)
    rates: np.ndarray | None = field(default=None, repr=False)

    @property
    def lengths(self) -> np.ndarray:
        return np.arange(1, self.kmax + 1)

    @property
    def per_length_rates(self) -> np.ndarray:
        return self.free_rates if self.rates is None else self.rates

    @property
    def period(self) -> float | None:
        return self.box.side if self.bc is BoundaryCondition.PERIODIC else None

    def truncation_tail(self) -> float:
        """Expected number of free loops longer than ``kmax``."""
        return self.box.volume * _rate_tail(1.0 + self.d / 2.0, self.beta, self.d, self.kmax)

    def particle_tail_density(self) -> float:
        """Free particle density ``sum_{k > kmax} k q_k`` lost to truncation."""
        return _rate_tail(self.d / 2.0, self.beta, self.d, self.kmax)

    def mean_particle_density(self) -> float:
        """``sum_{k <= kmax} k lambda_k / |box|``."""
        return float(np.sum(self.lengths * self.per_length_rates)) / self.box.volume


def _rate_tail(s: float, beta: float, d: int, kmax: int) -> float:
    scale = (4.0 * math.pi * beta) ** (-d / 2.0)
    if s <= 1:
        return math.inf
    total, _ = exp_weighted_sum(s, 0.0)
    k = np.arange(1, kmax + 1, dtype=float)
    return scale * max(total - float(np.sum(k ** (-s))), 0.0)


def make_intensity(beta: float, d: int, box: CenteredBox, bc="free", kmax: int = 20, rates=None) -> SoupIntensity:
    if beta <= 0:
        raise ValueError("beta must be positive")
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    if box.dim != d:
        raise ValueError("box dimension does not match d")
    bc = BoundaryCondition.parse(bc)
    free = box.volume * free_rate(np.arange(1, kmax + 1), beta, d)
    if rates is None and bc is BoundaryCondition.FREE:
        rates = free
    if rates is not None:
        rates = np.asarray(rates, dtype=float)
        if rates.shape != (kmax,) or np.any(rates < 0):
            raise ValueError("rates must be a nonnegative array of length kmax")
    return SoupIntensity(beta, d, box, bc, kmax, free, rates)


def satisfies_bc(loop: Loop, box: CenteredBox, bc) -> bool:
    bc = BoundaryCondition.parse(bc)
    if bc is BoundaryCondition.PARTICLE:
        return bool(np.all(box.contains(loop.particles())))
    if bc is BoundaryCondition.DIRICHLET0:
        return bool(np.all(box.contains(loop.legs)))
    return bool(box.contains(loop.anchor))


@dataclass(frozen=True)
class RateEstimate:
    value: float
    stderr: float
    samples: int


def estimate_rate_bc(k: int, box: CenteredBox, bc, beta: float, mc_samples: int, rng: np.random.Generator,
                     substeps: int = DEFAULT_SUBSTEPS) -> RateEstimate:
    """Boundary-corrected Poisson parameter of k-loops anchored in ``box``.

    Particle and Dirichlet rates are Monte-Carlo estimates (fraction of free
    loops that survive, times ``|box| q_k``).  The periodic rate is the
    deterministic lattice sum of the heat kernel over all periodic images.
    """
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    bc = BoundaryCondition.parse(bc)
    d = box.dim
    base = box.volume * free_rate(k, beta, d)
    if bc is BoundaryCondition.FREE or (bc is BoundaryCondition.PARTICLE and k == 1):
        return RateEstimate(base, 0.0, mc_samples)
    if bc is BoundaryCondition.PERIODIC:
        return RateEstimate(base * _theta_factor(box.side, k * beta) ** d, 0.0, mc_samples)
    anchors = box.uniform(rng, mc_samples)
    if bc is BoundaryCondition.PARTICLE:
        pts = walk_bridge(anchors, anchors, k, beta, rng)[:, :-1]
    else:
        pts = sample_loops(anchors, k, beta, substeps, rng)
    inside = box.contains(pts).reshape(mc_samples, -1).all(axis=1)
    p = float(inside.mean())
    return RateEstimate(base * p, base * math.sqrt(p * (1.0 - p) / mc_samples), mc_samples)


def _theta_factor(L: float, t: float, n_images: int = 50) -> float:
    """``sum_n exp(-(nL)^2 / 4t)``: one-dimensional periodic-image enhancement."""
    n = np.arange(-n_images, n_images + 1, dtype=float)
    return float(np.sum(np.exp(-((n * L) ** 2) / (4.0 * t))))


def sample_soup(intensity: SoupIntensity, substeps: int, rng: np.random.Generator) -> LoopConfiguration:
    """Draw one configuration of the soup described by ``intensity``."""
    box, beta, bc = intensity.box, intensity.beta, intensity.bc
    d = intensity.d
    loops: list[Loop] = []
    counts = rng.poisson(intensity.free_rates)
    for k, n in zip(intensity.lengths, counts):
        if n == 0:
            continue
        k = int(k)
        anchors = box.uniform(rng, int(n))
        coarse = walk_bridge(anchors, anchors, k, beta, rng)
        if bc is BoundaryCondition.PARTICLE:
            coarse = coarse[box.contains(coarse[:, :-1]).all(axis=1)]
        if len(coarse) == 0:
            continue
        m = len(coarse)
        legs = bridge_legs(
            coarse[:, :-1].reshape(-1, d), coarse[:, 1:].reshape(-1, d), beta, substeps, rng
        ).reshape(m, k, substeps + 1, d)
        for shape in legs:
            lp = Loop(shape, beta)
            if bc is BoundaryCondition.DIRICHLET0 and not satisfies_bc(lp, box, bc):
                continue
            loops.append(lp)
    return LoopConfiguration(loops, box, beta, substeps, intensity.period)


def log_density_loop(loop: Loop, intensity: SoupIntensity) -> float:
    """Log density of the soup intensity at ``loop``.

    The reference measure is Lebesgue measure on the anchor times the
    normalized bridge law of the shape, so the value is ``log q_k`` when the
    loop satisfies the boundary condition and ``-inf`` otherwise.
    """
    k = loop.length
    if k > intensity.kmax:
        raise ValueError(f"loop length {k} exceeds kmax={intensity.kmax}")
    if not satisfies_bc(loop, intensity.box, intensity.bc):
        return -math.inf
    return math.log(free_rate(k, intensity.beta, intensity.d))


def log_heat_kernel(disp, beta: float) -> np.ndarray:
    """``log g_beta`` of displacements ``(..., d)``."""
    disp = np.asarray(disp, dtype=float)
    d = disp.shape[-1]
    return -0.5 * d * math.log(4.0 * math.pi * beta) - np.sum(disp ** 2, axis=-1) / (4.0 * beta)


def log_particle_density(loop: Loop, intensity: SoupIntensity) -> float:
    """Log density of the soup intensity with respect to Lebesgue measure on all particles.

    The loop intensity ``(1/k) dx mu^{(k)}_{x,x}`` has density
    ``(1/k) prod_i g_beta(x_{i+1} - x_i)`` in the particle coordinates, times
    the normalized Brownian bridge law of each leg.
    """
    k = loop.length
    if k > intensity.kmax:
        raise ValueError(f"loop length {k} exceeds kmax={intensity.kmax}")
    if not satisfies_bc(loop, intensity.box, intensity.bc):
        return -math.inf
    p = loop.particles()
    disp = np.roll(p, -1, axis=0) - p
    return -math.log(k) + float(np.sum(log_heat_kernel(disp, intensity.beta)))
