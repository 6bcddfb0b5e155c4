"""Equilibrium measure, capacity and the beta-spaced Brownian interlacement.

The particles of an interlacement trajectory form a Gaussian random walk
with step covariance ``2 beta I``.  A walk is declared escaped once it is
farther than ``escape_factor * diam(W)`` from the centre of ``W``; a walk that
has not decided after ``step_cap`` steps counts as escaped and is tallied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import CenteredBox
from .paths import DEFAULT_SUBSTEPS, InterlacementFragment, InterlacementWindow, Shred, bridge_legs, fill_legs, walk_bridge
from .shredding import BoundaryShredConfiguration, ShredConfiguration

UNIT_BOX_RADIUS = 0.5


@dataclass(frozen=True)
class HorizonParams:
    escape_factor: float = 20.0
    step_cap: int | None = None
    margin: int = 1  # extra particles kept before the entry and after the last visit
    max_tries: int = 100_000
    chunk: int = 512

    def escape_radius(self, W: CenteredBox) -> float:
        return float(self.escape_factor * W.diameter)

    def cap_for(self, W: CenteredBox, beta: float) -> int:
        if self.step_cap is not None:
            return self.step_cap
        rho = self.escape_radius(W)
        # 50 times the mean exit time of the escape ball
        return int(max(10_000, 50 * rho * rho / (2.0 * beta * W.dim)))

    def as_dict(self) -> dict:
        return {"escape_factor": self.escape_factor, "step_cap": self.step_cap, "margin": self.margin}


def _require_transient(d: int) -> None:
    if d < 3:
        raise ValueError(f"the walk is recurrent in d={d}; interlacements need d >= 3")


@dataclass(frozen=True)
class EscapeEstimate:
    p: float
    stderr: float
    escape_radius: float
    step_cap: int
    capped: int = 0


@dataclass(frozen=True)
class CapacityEstimate:
    value: float
    stderr: float
    escape_radius: float = 0.0
    step_cap: int = 0


def escape_flags(starts, W: CenteredBox, beta: float, rng: np.random.Generator,
                 params: HorizonParams = HorizonParams()) -> tuple[np.ndarray, int]:
    """For each start, whether its walk leaves the escape ball before revisiting ``W``.

    Returns the flags and the number of walks stopped by the step cap.
    """
    flags, capped = _multi_horizon_flags(starts, W, beta, rng, [params.escape_radius(W)], params.cap_for(W, beta))
    return flags[0], capped


def _multi_horizon_flags(starts, W: CenteredBox, beta: float, rng: np.random.Generator,
                         radii, cap: int) -> tuple[np.ndarray, int]:
    """Escape flags of the same walks for several horizon radii.

    Row ``i`` of the result says whether each walk got farther than
    ``radii[i]`` from the centre of ``W`` before revisiting ``W``.  Walks
    still undecided after ``cap`` steps count as escaped for every radius.
    """
    _require_transient(W.dim)
    radii = np.sort(np.asarray(radii, dtype=float))
    pos = np.array(starts, dtype=float, ndmin=2)
    n = len(pos)
    reached = np.zeros((len(radii), n), dtype=bool)
    active = np.arange(n)
    c = W.center_array
    r2 = radii ** 2
    sd = math.sqrt(2.0 * beta)
    steps = 0
    while len(active) and steps < cap:
        pos = pos + sd * rng.standard_normal(pos.shape)
        steps += 1
        back = W.contains(pos)
        dist2 = np.einsum("nd,nd->n", pos - c, pos - c)
        for i in range(len(radii)):
            reached[i, active[~back & (dist2 > r2[i])]] = True
        alive = ~(back | (dist2 > r2[-1]))
        active, pos = active[alive], pos[alive]
    reached[:, active] = True
    return reached, len(active)


def escape_probability(x, W: CenteredBox, beta: float, params: HorizonParams = HorizonParams(),
                       rng: np.random.Generator | None = None, samples: int = 2000) -> EscapeEstimate:
    """Monte-Carlo estimate of ``P_x(walk never returns to W)``."""
    _require_transient(W.dim)
    rng = np.random.default_rng() if rng is None else rng
    starts = np.repeat(np.asarray(x, dtype=float)[None], samples, axis=0)
    flags, capped = escape_flags(starts, W, beta, rng, params)
    p = float(flags.mean())
    return EscapeEstimate(p, math.sqrt(p * (1 - p) / samples), params.escape_radius(W), params.cap_for(W, beta), capped)


def capacity(W: CenteredBox, beta: float, samples: int, rng: np.random.Generator,
             params: HorizonParams = HorizonParams()) -> CapacityEstimate:
    """``|W|`` times the mean escape probability of a uniform start in ``W``."""
    _require_transient(W.dim)
    if W.volume == 0:
        return CapacityEstimate(0.0, 0.0)
    flags, _ = escape_flags(W.uniform(rng, samples), W, beta, rng, params)
    p = float(flags.mean())
    return CapacityEstimate(W.volume * p, W.volume * math.sqrt(p * (1 - p) / samples),
                            params.escape_radius(W), params.cap_for(W, beta))


@dataclass(frozen=True)
class HorizonCheck:
    base: CapacityEstimate
    doubled: CapacityEstimate
    difference: float
    difference_stderr: float


def horizon_doubling(W: CenteredBox, beta: float, samples: int, rng: np.random.Generator,
                     params: HorizonParams = HorizonParams()) -> HorizonCheck:
    """Capacity at the escape radius and at twice it, scored on the same walks.

    Pairing isolates the effect of the horizon: the difference is the
    fraction of walks that pass the first radius and come back to ``W``
    before reaching the second.
    """
    _require_transient(W.dim)
    wide = HorizonParams(2.0 * params.escape_factor, params.step_cap, params.margin, params.max_tries, params.chunk)
    rho = params.escape_radius(W)
    cap = wide.cap_for(W, beta)
    flags, _ = _multi_horizon_flags(W.uniform(rng, samples), W, beta, rng, [rho, 2.0 * rho], cap)
    estimates = []
    for row, radius in zip(flags, (rho, 2.0 * rho)):
        p = float(row.mean())
        estimates.append(CapacityEstimate(W.volume * p, W.volume * math.sqrt(p * (1 - p) / samples), radius, cap))
    diff = flags[0].astype(float) - flags[1].astype(float)
    se = W.volume * float(diff.std(ddof=1)) / math.sqrt(samples) if samples > 1 else 0.0
    return HorizonCheck(estimates[0], estimates[1], estimates[0].value - estimates[1].value, se)


def _walk(x0, W: CenteredBox, beta: float, rng, params: HorizonParams, avoid: bool):
    """One walk from ``x0`` until escape.

    With ``avoid`` the walk is abandoned (``None`` returned) as soon as it
    revisits ``W``.  Otherwise returns ``(positions, escaped)`` with
    ``positions[0] = x0``.
    """
    c = W.center_array
    rho2 = params.escape_radius(W) ** 2
    sd = math.sqrt(2.0 * beta)
    cap = params.cap_for(W, beta)
    pieces = [np.asarray(x0, dtype=float)[None]]
    cur = pieces[0][0]
    done = 0
    while done < cap:
        m = min(params.chunk, cap - done)
        chunk = cur + np.cumsum(sd * rng.standard_normal((m, len(cur))), axis=0)
        away = np.flatnonzero(np.einsum("nd,nd->n", chunk - c, chunk - c) > rho2)
        stop = int(away[0]) + 1 if len(away) else m
        if avoid and np.any(W.contains(chunk[:stop])):
            return None
        pieces.append(chunk[:stop])
        if len(away):
            return np.concatenate(pieces), True
        cur = chunk[-1]
        done += m
    return np.concatenate(pieces), False


def _trajectory(W, beta, rng, params):
    """Entry point, backward escape path and forward path of one trajectory."""
    for _ in range(params.max_tries):
        x = W.uniform(rng, 1)[0]
        back = _walk(x, W, beta, rng, params, avoid=True)
        if back is not None:
            fwd = _walk(x, W, beta, rng, params, avoid=False)
            return back, fwd
    raise RuntimeError(f"no escaping start found in {params.max_tries} tries")


def _fragment(back, fwd, W, beta, substeps, rng, params) -> InterlacementFragment:
    back_pts, back_esc = back
    fwd_pts, fwd_esc = fwd
    m = params.margin
    last = int(np.flatnonzero(W.contains(fwd_pts))[-1])
    before = back_pts[1:m + 1][::-1]
    after = fwd_pts[: last + m + 1]
    particles = np.concatenate([before, after], axis=0)
    legs = fill_legs(particles, beta, substeps, rng)
    return InterlacementFragment(legs, beta, W, len(before), (bool(back_esc), bool(fwd_esc)))


def sample_window(W: CenteredBox, v: float, beta: float, substeps: int = DEFAULT_SUBSTEPS,
                  params: HorizonParams = HorizonParams(), rng: np.random.Generator | None = None,
                  cap: CapacityEstimate | None = None, cap_samples: int = 20_000) -> InterlacementWindow:
    """Fragments of the interlacement at density ``v`` that visit ``W``.

    The number of trajectories is Poisson with mean ``v cap(W)``.  Entry
    points are uniform in ``W`` accepted when a walk from them never returns,
    and that accepted walk is used as the backward path.
    """
    _require_transient(W.dim)
    if v < 0:
        raise ValueError("v must be >= 0")
    rng = np.random.default_rng() if rng is None else rng
    prov = {"horizon": params.as_dict(), "beta": beta, "v": v}
    if v == 0 or W.volume == 0:
        return InterlacementWindow([], W, beta, v, substeps, prov)
    if cap is None:
        cap = capacity(W, beta, cap_samples, rng, params)
    prov["capacity"] = cap.value
    n = int(rng.poisson(v * cap.value))
    frags = [_fragment(*_trajectory(W, beta, rng, params), W, beta, substeps, rng, params) for _ in range(n)]
    return InterlacementWindow(frags, W, beta, v, substeps, prov)


def unit_box(d: int, center=None) -> CenteredBox:
    return CenteredBox(UNIT_BOX_RADIUS, d, center)


def particles_in(window: InterlacementWindow, U: CenteredBox) -> int:
    return int(sum(np.count_nonzero(U.contains(f.particles())) for f in window.fragments))


@dataclass(frozen=True)
class Calibration:
    v: float
    per_unit_v: float
    stderr: float


def per_unit_v_count(W: CenteredBox, beta: float, params: HorizonParams, rng: np.random.Generator,
                     trajectories: int = 2000, cap: CapacityEstimate | None = None, U: CenteredBox | None = None):
    """Expected particle count in ``U`` per unit ``v``, with its standard error."""
    U = unit_box(W.dim) if U is None else U
    if not U.is_subset_of(W):
        raise ValueError("the counting box must lie inside W")
    cap = capacity(W, beta, 20_000, rng, params) if cap is None else cap
    counts = np.empty(trajectories)
    for t in range(trajectories):
        _, (fwd, _) = _trajectory(W, beta, rng, params)
        counts[t] = np.count_nonzero(U.contains(fwd))
    mean = float(counts.mean())
    sd = float(counts.std(ddof=1)) / math.sqrt(trajectories)
    value = cap.value * mean
    se = math.hypot(cap.stderr * mean, cap.value * sd)
    return value, se


def calibrate_u(W: CenteredBox, u_target: float, beta: float, params: HorizonParams = HorizonParams(),
                rng: np.random.Generator | None = None, trajectories: int = 2000,
                cap: CapacityEstimate | None = None, denominator=None) -> Calibration:
    """``v`` such that the expected particle count in the unit box is ``u_target``."""
    _require_transient(W.dim)
    if u_target < 0:
        raise ValueError("u_target must be >= 0")
    rng = np.random.default_rng() if rng is None else rng
    if denominator is None:
        denominator = per_unit_v_count(W, beta, params, rng, trajectories, cap)
    per_v, se = denominator
    if per_v <= 0:
        raise RuntimeError("degenerate calibration: no particles observed in the unit box")
    return Calibration(u_target / per_v, per_v, se)


def sample_kernel_KW(mu: BoundaryShredConfiguration, W: CenteredBox, beta: float,
                     substeps: int = DEFAULT_SUBSTEPS, rng: np.random.Generator | None = None,
                     max_tries: int = 1_000_000, batch: int = 1024) -> ShredConfiguration:
    """Independent conditioned shreds for each (entry, length, exit) triple.

    Each shred's particles are a Gaussian-walk bridge from entry to exit,
    accepted when all interior particles lie in ``W``.
    """
    rng = np.random.default_rng() if rng is None else rng
    shreds = []
    for x, l, y in mu.triples:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if not W.contains(x) or W.contains(y):
            raise ValueError("triple entry must be inside and exit outside W")
        tries = 0
        path = None
        while path is None:
            if tries >= max_tries:
                raise RuntimeError(f"rejection budget of {max_tries} exhausted for a length-{l} shred")
            m = min(batch, max_tries - tries)
            cand = walk_bridge(np.repeat(x[None], m, 0), np.repeat(y[None], m, 0), int(l), beta, rng)
            ok = np.flatnonzero(W.contains(cand[:, 1:-1]).all(axis=1)) if l > 1 else np.arange(m)
            tries += m
            if len(ok):
                path = cand[ok[0]]
        legs = bridge_legs(path[:-1], path[1:], beta, substeps, rng)
        shreds.append(Shred(legs, beta, W))
    return ShredConfiguration(shreds, W)
