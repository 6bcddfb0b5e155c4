"""Metropolis chains for the interaction-tilted loop soup.

Target densities are taken with respect to Lebesgue measure on all particle
positions times the normalized Brownian bridge law of every leg.  In these
coordinates a k-loop has density ``(1/k) prod_i g_beta(x_{i+1} - x_i)`` when
it satisfies the boundary condition, and a configuration has density
``prod_loops density * exp(-Phi)``.  Bridge legs are always resampled from
their own law, so their shape factors cancel in every ratio.

Every move is split into ``propose`` (random) and ``evaluate``
(deterministic).  ``evaluate`` returns the new configuration, the forward and
reverse proposal log densities, the log acceptance ratio computed from
incremental quantities, and the descriptor of the reverse move; the detailed
balance probe uses these to check reversibility against log densities
recomputed from scratch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .interaction import PairPotential, cross_leg_energy, internal_leg_energy, total_interaction
from .loop_soup import (
    SoupIntensity,
    log_density_loop,
    log_heat_kernel,
    log_particle_density,
    satisfies_bc,
)
from .paths import Loop, LoopConfiguration, bridge_legs, sample_loops

ENERGY_RTOL = 1e-9


@dataclass
class ChainState:
    config: LoopConfiguration
    intensity: SoupIntensity
    potential: PairPotential
    rng: np.random.Generator
    energy: float | None = None
    stats: dict = field(default_factory=dict)
    sweeps_done: int = 0

    def __post_init__(self):
        if self.energy is None:
            self.energy = self.recompute_energy()

    @property
    def period(self):
        return self.config.period

    def recompute_energy(self) -> float:
        return total_interaction(self.config, None, None, self.potential)

    def energy_drift(self) -> float:
        exact = self.recompute_energy()
        return abs(self.energy - exact) / max(1.0, abs(exact))

    def revalidate(self) -> None:
        drift = self.energy_drift()
        if drift > ENERGY_RTOL:
            raise RuntimeError(f"energy cache drifted by {drift:.3e}")
        self.energy = self.recompute_energy()

    def tally(self, kind: str, accepted: bool) -> None:
        prop, acc = self.stats.get(kind, (0, 0))
        self.stats[kind] = (prop + 1, acc + int(accepted))


def initial_state(intensity: SoupIntensity, potential: PairPotential, rng: np.random.Generator,
                  config: LoopConfiguration | None = None, substeps: int = 16) -> ChainState:
    if config is None:
        config = LoopConfiguration([], intensity.box, intensity.beta, substeps, intensity.period)
    return ChainState(config, intensity, potential, rng)


@dataclass
class MoveEval:
    kind: str
    new_config: LoopConfiguration | None
    log_q_fwd: float
    log_q_rev: float
    log_ratio: float
    reverse: tuple | None
    delta_energy: float = 0.0

    @property
    def noop(self) -> bool:
        return self.new_config is None


@dataclass(frozen=True)
class MoveRecord:
    kind: str
    proposed: bool
    accepted: bool
    delta_energy: float


def _noop(kind: str) -> MoveEval:
    return MoveEval(kind, None, 0.0, 0.0, -math.inf, None)


def _legs_of(loops) -> np.ndarray:
    return np.concatenate([lp.legs for lp in loops], axis=0) if loops else None


def _delta_energy(config: LoopConfiguration, potential: PairPotential, keep_loops, keep_extra,
                  added: np.ndarray | None, removed: np.ndarray | None) -> float:
    """Energy change when ``removed`` legs are replaced by ``added`` legs.

    ``keep_loops`` and ``keep_extra`` (an array of legs or ``None``) are the
    unchanged legs.
    """
    if potential.is_zero:
        return 0.0
    parts = [lp.legs for lp in keep_loops]
    if keep_extra is not None and len(keep_extra):
        parts.append(keep_extra)
    keep = np.concatenate(parts, axis=0) if parts else np.zeros((0,) + config_leg_shape(config))
    beta, period = config.beta, config.period
    out = 0.0
    if added is not None and len(added):
        out += cross_leg_energy(added, keep, potential, beta, period) + internal_leg_energy(added, potential, beta, period)
    if removed is not None and len(removed):
        out -= cross_leg_energy(removed, keep, potential, beta, period) + internal_leg_energy(removed, potential, beta, period)
    return out


def config_leg_shape(config: LoopConfiguration) -> tuple:
    return (config.substeps + 1, config.dim)


def _log_walk_bridge_density(loop: Loop) -> float:
    """Density of the interior particles under the pinned Gaussian walk."""
    p = loop.particles()
    k, d = p.shape
    beta = loop.beta
    disp = np.roll(p, -1, axis=0) - p
    return float(np.sum(log_heat_kernel(disp, beta))) + 0.5 * d * math.log(4.0 * math.pi * k * beta)


def _rebase(loop: Loop, config: LoopConfiguration) -> Loop:
    """Bring a loop's anchor into the box by a lattice shift (periodic only)."""
    if config.period is None:
        return loop
    anchor = loop.anchor
    wrapped = config.box.wrap(anchor)
    if np.array_equal(wrapped, anchor):
        return loop
    return loop.translated(wrapped - anchor)


def _sample_shape(anchor, k, intensity: SoupIntensity, substeps, rng) -> Loop:
    legs = sample_loops(np.asarray(anchor, float)[None], k, intensity.beta, substeps, rng)[0]
    return Loop(legs, intensity.beta)


class Move:
    kind = "move"

    def propose(self, state: ChainState) -> tuple | None:
        raise NotImplementedError

    def evaluate(self, state: ChainState, config: LoopConfiguration, desc) -> MoveEval:
        raise NotImplementedError


class BirthDeath(Move):
    """Birth with probability ``p_birth``, death otherwise.

    Birth draws ``k`` with probability proportional to ``lambda_k``, a
    uniform anchor and a free loop shape.  Death draws ``k`` the same way and
    a uniform loop of that length; it is a rejected no-op when there is none.
    """

    kind = "birth_death"

    def __init__(self, p_birth: float = 0.5):
        self.p_birth = p_birth

    def _log_pick(self, intensity: SoupIntensity, k: int) -> float:
        lam = intensity.free_rates
        return math.log(lam[k - 1] / lam.sum())

    def propose(self, state):
        intensity, rng = state.intensity, state.rng
        lam = intensity.free_rates
        k = int(rng.choice(len(lam), p=lam / lam.sum())) + 1
        if rng.random() < self.p_birth:
            anchor = intensity.box.uniform(rng, 1)[0]
            return ("birth", _sample_shape(anchor, k, intensity, state.config.substeps, rng))
        candidates = np.flatnonzero(state.config.lengths() == k)
        if len(candidates) == 0:
            return ("death", None)
        return ("death", int(rng.choice(candidates)))

    def evaluate(self, state, config, desc):
        intensity, potential = state.intensity, state.potential
        what, arg = desc
        lengths = config.lengths()
        if what == "birth":
            loop = arg
            k = loop.length
            n_k = int(np.sum(lengths == k))
            dE = _delta_energy(config, potential, config.loops, None, loop.legs, None)
            log_bc = log_density_loop(loop, intensity) - math.log(_q(intensity, k))
            log_ratio = math.log(intensity.free_rates[k - 1]) - math.log(n_k + 1) - dE + log_bc
            log_q_fwd = (math.log(self.p_birth) + self._log_pick(intensity, k) - math.log(intensity.box.volume)
                         + _log_walk_bridge_density(loop))
            log_q_rev = math.log(1.0 - self.p_birth) + self._log_pick(intensity, k) - math.log(n_k + 1)
            new = config.with_loops(config.loops + [loop])
            return MoveEval("birth", new, log_q_fwd, log_q_rev, log_ratio, ("death", len(config)), dE)
        if arg is None:
            return _noop("death")
        loop = config.loops[arg]
        k = loop.length
        n_k = int(np.sum(lengths == k))
        rest = config.loops[:arg] + config.loops[arg + 1:]
        dE = _delta_energy(config, potential, rest, None, None, loop.legs)
        log_ratio = math.log(n_k) - math.log(intensity.free_rates[k - 1]) - dE
        log_q_fwd = math.log(1.0 - self.p_birth) + self._log_pick(intensity, k) - math.log(n_k)
        log_q_rev = (math.log(self.p_birth) + self._log_pick(intensity, k) - math.log(intensity.box.volume)
                     + _log_walk_bridge_density(loop))
        return MoveEval("death", config.with_loops(rest), log_q_fwd, log_q_rev, log_ratio, ("birth", loop), dE)


def _q(intensity: SoupIntensity, k: int) -> float:
    return intensity.free_rates[k - 1] / intensity.box.volume


class Reshape(Move):
    """Resample the whole shape of a uniformly chosen loop, keeping its anchor."""

    kind = "reshape"

    def __init__(self, weight: float = 1.0):
        self.weight = weight

    def propose(self, state):
        n = len(state.config)
        if n == 0:
            return None
        idx = int(state.rng.integers(n))
        old = state.config.loops[idx]
        return (idx, _sample_shape(old.anchor, old.length, state.intensity, state.config.substeps, state.rng))

    def evaluate(self, state, config, desc):
        if desc is None:
            return _noop(self.kind)
        idx, new_loop = desc
        old = config.loops[idx]
        rest = config.loops[:idx] + config.loops[idx + 1:]
        dE = _delta_energy(config, state.potential, rest, None, new_loop.legs, old.legs)
        ok = satisfies_bc(new_loop, state.intensity.box, state.intensity.bc)
        log_ratio = -dE if ok else -math.inf
        n = len(config)
        log_w = math.log(self.weight) - math.log(n)
        loops = list(config.loops)
        loops[idx] = new_loop
        return MoveEval(self.kind, config.with_loops(loops), log_w + _log_walk_bridge_density(new_loop),
                        log_w + _log_walk_bridge_density(old), log_ratio, (idx, old), dE)


class Translate(Move):
    """Shift a uniformly chosen loop by a uniform vector in ``[-delta, delta]^d``."""

    kind = "translate"

    def __init__(self, delta: float = 0.5, weight: float = 1.0):
        self.delta = delta
        self.weight = weight

    def propose(self, state):
        n = len(state.config)
        if n == 0:
            return None
        idx = int(state.rng.integers(n))
        return (idx, state.rng.uniform(-self.delta, self.delta, size=state.config.dim))

    def evaluate(self, state, config, desc):
        if desc is None:
            return _noop(self.kind)
        idx, shift = desc
        old = config.loops[idx]
        new_loop = _rebase(old.translated(shift), config)
        rest = config.loops[:idx] + config.loops[idx + 1:]
        dE = _delta_energy(config, state.potential, rest, None, new_loop.legs, old.legs)
        ok = satisfies_bc(new_loop, state.intensity.box, state.intensity.bc)
        log_ratio = -dE if ok else -math.inf
        log_q = math.log(self.weight) - math.log(len(config)) - config.dim * math.log(2.0 * self.delta)
        loops = list(config.loops)
        loops[idx] = new_loop
        return MoveEval(self.kind, config.with_loops(loops), log_q, log_q, log_ratio, (idx, -np.asarray(shift)), dE)


def _log_comb2(n: int) -> float:
    return math.log(n * (n - 1) / 2.0)


class SplitMerge(Move):
    """Cut a loop at two legs into two loops, or join two loops into one.

    Split: choose a loop of length >= 2 uniformly, an unordered pair of its
    legs ``p < q``, close the two arcs with fresh bridge legs and re-root each
    arc uniformly.  Merge: choose an unordered pair of loops, a particle
    ``i`` of the first and ``j`` of the second, replace the legs ending at
    them by fresh bridges ``A_{i-1} -> B_j`` and ``B_{j-1} -> A_i`` and root
    the result uniformly.
    """

    kind = "split_merge"

    def __init__(self, p_split: float = 0.5, weight: float = 1.0):
        self.p_split = p_split
        self.weight = weight

    @property
    def _log_ps(self):
        return math.log(self.weight * self.p_split)

    @property
    def _log_pm(self):
        return math.log(self.weight * (1.0 - self.p_split))

    def propose(self, state):
        config, rng, beta = state.config, state.rng, state.intensity.beta
        S = config.substeps
        if rng.random() < self.p_split:
            big = np.flatnonzero(config.lengths() >= 2)
            if len(big) == 0:
                return ("split", None)
            idx = int(rng.choice(big))
            C = config.loops[idx]
            c = C.length
            p, q = sorted(rng.choice(c, size=2, replace=False).tolist())
            P = C.particles()
            close = bridge_legs(np.array([P[q], P[p]]), np.array([P[p + 1], P[(q + 1) % c]]), beta, S, rng)
            root1 = int(rng.integers(q - p))
            root2 = int(rng.integers(c - (q - p)))
            return ("split", (idx, p, q, close[0], close[1], root1, root2))
        n = len(config)
        if n < 2:
            return ("merge", None)
        ia, ib = sorted(rng.choice(n, size=2, replace=False).tolist())
        A, B = config.loops[ia], config.loops[ib]
        i = int(rng.integers(A.length))
        j = int(rng.integers(B.length))
        Bs = self._aligned(config, A, B, i, j)
        PA, PB = A.particles(), Bs.particles()
        close = bridge_legs(
            np.array([PA[i - 1], PB[j - 1]]), np.array([PB[j], PA[i]]), beta, S, rng
        )
        root = int(rng.integers(A.length + B.length))
        return ("merge", (ia, ib, i, j, close[0], close[1], root))

    @staticmethod
    def _aligned(config, A: Loop, B: Loop, i: int, j: int) -> Loop:
        """``B`` moved to the periodic image whose particle ``j`` is nearest ``A_{i-1}``."""
        if config.period is None:
            return B
        L = config.period
        gap = A.particles()[i - 1] - B.particles()[j]
        return B.translated(L * np.round(gap / L))

    def evaluate(self, state, config, desc):
        what, arg = desc
        if arg is None:
            return _noop(what)
        if what == "split":
            return self._split(state, config, *arg)
        return self._merge(state, config, *arg)

    def _split(self, state, config, idx, p, q, close1, close2, root1, root2):
        C = config.loops[idx]
        legs, c = C.legs, C.length
        P = C.particles()
        arc1 = np.concatenate([legs[p + 1:q], close1[None]], axis=0)
        arc2 = np.concatenate([legs[q + 1:], legs[:p], close2[None]], axis=0)
        a, b = len(arc1), len(arc2)
        A = _rebase(Loop(np.roll(arc1, -root1, axis=0), C.beta), config)
        B = _rebase(Loop(np.roll(arc2, -root2, axis=0), C.beta), config)
        rest = config.loops[:idx] + config.loops[idx + 1:]
        n2 = int(np.sum(config.lengths() >= 2))
        n_new = len(config) + 1
        beta = C.beta
        log_f = (math.log(c) - math.log(a) - math.log(b)
                 + float(log_heat_kernel(P[p + 1] - P[q], beta)) + float(log_heat_kernel(P[(q + 1) % c] - P[p], beta))
                 - float(log_heat_kernel(P[(q + 1) % c] - P[q], beta)) - float(log_heat_kernel(P[p + 1] - P[p], beta)))
        keep_extra = np.concatenate([legs[:p], legs[p + 1:q], legs[q + 1:]], axis=0)
        dE = _delta_energy(config, state.potential, rest, keep_extra,
                           np.stack([close1, close2]), np.stack([legs[p], legs[q]]))
        box, bc = state.intensity.box, state.intensity.bc
        ok = satisfies_bc(A, box, bc) and satisfies_bc(B, box, bc)
        log_q_fwd = self._log_ps - math.log(n2) - _log_comb2(c) - math.log(a) - math.log(b)
        log_q_rev = self._log_pm - _log_comb2(n_new) - math.log(a) - math.log(b) - math.log(c)
        log_ratio = (log_f - dE + log_q_rev - log_q_fwd) if ok else -math.inf
        new = config.with_loops(rest + [A, B])
        # merging arc1 (at the particle after the first cut) with arc2 restores C
        i = (-root1) % a
        j = (-root2) % b
        reverse = ("merge", (n_new - 2, n_new - 1, i, j, legs[q], legs[p], (c - p - 1) % c))
        return MoveEval("split", new, log_q_fwd, log_q_rev, log_ratio, reverse, dE)

    def _merge(self, state, config, ia, ib, i, j, leg1, leg2, root):
        A = config.loops[ia]
        B = self._aligned(config, A, config.loops[ib], i, j)
        a, b = A.length, B.length
        c = a + b
        ra = np.roll(A.legs, -i, axis=0)
        rb = np.roll(B.legs, -j, axis=0)
        merged = np.concatenate([ra[:-1], leg1[None], rb[:-1], leg2[None]], axis=0)
        C = _rebase(Loop(np.roll(merged, -root, axis=0), A.beta), config)
        rest = [lp for t, lp in enumerate(config.loops) if t != ia and t != ib]
        n = len(config)
        n_new = n - 1
        PA, PB = A.particles(), B.particles()
        beta = A.beta
        log_f = (math.log(a) + math.log(b) - math.log(c)
                 + float(log_heat_kernel(PB[j] - PA[i - 1], beta)) + float(log_heat_kernel(PA[i] - PB[j - 1], beta))
                 - float(log_heat_kernel(PA[i] - PA[i - 1], beta)) - float(log_heat_kernel(PB[j] - PB[j - 1], beta)))
        keep_extra = np.concatenate([ra[:-1], rb[:-1]], axis=0)
        dE = _delta_energy(config, state.potential, rest, keep_extra,
                           np.stack([leg1, leg2]), np.stack([ra[-1], rb[-1]]))
        n2_new = int(np.sum(config.lengths() >= 2)) + 1 - int(a >= 2) - int(b >= 2)
        log_q_fwd = self._log_pm - _log_comb2(n) - math.log(a) - math.log(b) - math.log(c)
        log_q_rev = self._log_ps - math.log(n2_new) - _log_comb2(c) - math.log(a) - math.log(b)
        ok = c <= state.intensity.kmax and satisfies_bc(C, state.intensity.box, state.intensity.bc)
        log_ratio = (log_f - dE + log_q_rev - log_q_fwd) if ok else -math.inf
        new = config.with_loops(rest + [C])
        # positions in C of the two fresh legs; the arc after the first cut starts there
        pos1 = (a - 1 - root) % c
        pos2 = (c - 1 - root) % c
        p, q = min(pos1, pos2), max(pos1, pos2)
        close_a, root_a = ra[-1], (-i) % a
        close_b, root_b = rb[-1], (-j) % b
        if p == pos2:
            reverse = ("split", (n_new - 1, p, q, close_a, close_b, root_a, root_b))
        else:
            reverse = ("split", (n_new - 1, p, q, close_b, close_a, root_b, root_a))
        return MoveEval("merge", new, log_q_fwd, log_q_rev, log_ratio, reverse, dE)


MOVES = {"birth_death": BirthDeath, "reshape": Reshape, "translate": Translate, "split_merge": SplitMerge}


def _apply(state: ChainState, ev: MoveEval) -> MoveRecord:
    if ev.noop:
        state.tally(ev.kind, False)
        return MoveRecord(ev.kind, False, False, 0.0)
    accept = ev.log_ratio >= 0 or state.rng.random() < math.exp(ev.log_ratio)
    if accept:
        state.config = ev.new_config
        state.energy += ev.delta_energy
    state.tally(ev.kind, accept)
    return MoveRecord(ev.kind, True, bool(accept), ev.delta_energy)


def step_with(state: ChainState, move: Move) -> MoveRecord:
    desc = move.propose(state)
    return _apply(state, move.evaluate(state, state.config, desc))


_GC_MOVE = BirthDeath()


def gc_step(state: ChainState) -> MoveRecord:
    """One birth-or-death Metropolis step."""
    return step_with(state, _GC_MOVE)


@dataclass
class CanonicalMoves:
    reshape: float = 0.3
    translate: float = 0.3
    split_merge: float = 0.4
    delta: float = 0.5

    def build(self):
        kinds = [Reshape(), Translate(self.delta), SplitMerge()]
        w = np.array([self.reshape, self.translate, self.split_merge], dtype=float)
        return kinds, w / w.sum()


_DEFAULT_CANONICAL = CanonicalMoves().build()


def canonical_step(state: ChainState, N_target: int, moves=None) -> MoveRecord:
    """One particle-number-preserving step."""
    n = state.config.n_particles()
    if n != N_target:
        raise ValueError(f"state has {n} particles, expected {N_target}")
    kinds, probs = _DEFAULT_CANONICAL if moves is None else moves
    move = kinds[int(state.rng.choice(len(kinds), p=probs))]
    return step_with(state, move)


def log_target(state: ChainState, config: LoopConfiguration) -> float:
    """Log target density recomputed from scratch (particle coordinates)."""
    total = 0.0
    for lp in config.loops:
        if lp.length > state.intensity.kmax:
            return -math.inf
        total += log_particle_density(lp, state.intensity)
    return total - total_interaction(config, None, None, state.potential)


def detailed_balance_probe(state: ChainState, move_kind, trials: int = 100) -> float:
    """Largest ``|log pi(a)P(a->b) - log pi(b)P(b->a)|`` over sampled transitions.

    ``move_kind`` is a key of :data:`MOVES` or a :class:`Move` instance.  The
    state is advanced by the move itself between trials.
    """
    move = MOVES[move_kind]() if isinstance(move_kind, str) else move_kind
    worst = 0.0
    for _ in range(trials):
        desc = move.propose(state)
        a = state.config
        ev = move.evaluate(state, a, desc)
        if ev.noop or ev.log_ratio == -math.inf:
            _apply(state, ev)
            continue
        b = ev.new_config
        rev = move.evaluate(state, b, ev.reverse)
        lhs = log_target(state, a) + ev.log_q_fwd + min(0.0, ev.log_ratio)
        rhs = log_target(state, b) + rev.log_q_fwd + min(0.0, rev.log_ratio)
        worst = max(worst, abs(lhs - rhs))
        _apply(state, ev)
    return worst


def integrated_autocorr_time(x, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's adaptive window."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 2:
        return 1.0
    y = x - x.mean()
    var = float(np.dot(y, y)) / n
    if var <= 1e-300 * max(1.0, float(np.abs(x).max()) ** 2):
        return 1.0
    size = 1 << int(2 * n - 1).bit_length()
    f = np.fft.rfft(y, n=size)
    acf = np.fft.irfft(f * np.conj(f), n=size)[:n] / (n * var)
    taus = 2.0 * np.cumsum(acf) - 1.0
    for m in range(1, n):
        if m >= c * taus[m]:
            return float(max(taus[m], 1.0 / n))
    return float(taus[-1])


def effective_sample_size(x) -> float:
    return len(x) / integrated_autocorr_time(x)


@dataclass
class ChainResult:
    rows: list
    series: dict
    tau: dict
    ess: dict
    stats: dict


def default_observables():
    return {
        "n_loops": lambda s: float(len(s.config)),
        "n_particles": lambda s: float(s.config.n_particles()),
        "energy": lambda s: float(s.energy),
    }


def default_sweep_length(state: ChainState, mode: str, N_target: int | None = None) -> int:
    """Steps per sweep: ``N_target`` for the canonical chain, else the mean free loop count.

    The length is fixed when the chain starts.  Letting it follow the current
    number of loops would make the recording times state dependent and bias
    the recorded samples away from the target law.
    """
    if mode == "canonical":
        return max(1, int(N_target))
    return max(1, int(round(float(np.sum(state.intensity.per_length_rates)))))


def run_chain(state: ChainState, sweeps: int, observables=None, thin: int = 1, burnin: int = 0,
              mode: str = "gc", N_target: int | None = None, check_every: int = 1000, on_row=None,
              steps_per_sweep: int | None = None) -> ChainResult:
    """Run ``burnin + sweeps`` sweeps and record observables every ``thin`` sweeps.

    A sweep is ``steps_per_sweep`` steps (see :func:`default_sweep_length`).
    The energy cache is checked against a full recomputation every
    ``check_every`` sweeps.
    """
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    if mode not in ("gc", "canonical"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "canonical" and N_target is None:
        N_target = state.config.n_particles()
    if steps_per_sweep is None:
        steps_per_sweep = default_sweep_length(state, mode, N_target)
    elif steps_per_sweep < 1:
        raise ValueError("steps_per_sweep must be >= 1")
    obs = default_observables() if observables is None else dict(observables)
    rows: list[dict] = []
    series = {name: [] for name in obs}
    step = gc_step if mode == "gc" else (lambda s: canonical_step(s, N_target))
    for sweep in range(burnin + sweeps):
        for _ in range(steps_per_sweep):
            step(state)
        state.sweeps_done += 1
        if check_every and state.sweeps_done % check_every == 0:
            state.revalidate()
        if sweep >= burnin and (sweep - burnin + 1) % thin == 0:
            row = {"sweep": state.sweeps_done}
            for name, fn in obs.items():
                val = fn(state)
                row[name] = val
                if isinstance(val, (int, float, np.integer, np.floating)):
                    series[name].append(float(val))
            rows.append(row)
            if on_row is not None:
                on_row(row)
    arrays = {k: np.asarray(v) for k, v in series.items() if v}
    tau = {k: integrated_autocorr_time(v) for k, v in arrays.items()}
    ess = {k: len(arrays[k]) / tau[k] for k in arrays}
    return ChainResult(rows, arrays, tau, ess, dict(state.stats))
