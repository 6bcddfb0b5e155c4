"""Pair potentials, leg and loop interactions, and the loop/shred energy split.

Legs interact through ``V(f, g) = int_0^beta v(f(s) - g(s)) ds``, evaluated
with the composite trapezoid rule on the shared leg grid.  Energies of whole
configurations are sums of ``V`` over pairs of distinct legs.  The fast path
finds candidate leg pairs with a cell list over leg starting points: two legs
can only interact if their particles are within ``2 * max_spread + r_supp``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import CenteredBox
from .paths import Leg, Loop, LoopConfiguration, leg_spreads

_CHUNK = 1 << 15


@dataclass(frozen=True)
class PairPotential:
    """Bounded, compactly supported, radially symmetric pair potential.

    ``C`` is the declared superstability constant; it is checked on
    instances by :func:`check_superstability`, never derived.
    """

    kind: str
    params: dict = field(default_factory=dict)
    C: float = 0.0

    def __post_init__(self):
        if self.kind not in ("step", "gauss", "zero"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        p = self.params
        if self.kind == "step" and (p.get("h", -1) < 0 or p.get("r", -1) < 0):
            raise ValueError("step potential needs h >= 0 and r >= 0")
        if self.kind == "gauss" and (p.get("a", -1) < 0 or p.get("sigma", 0) <= 0 or p.get("cut", 0) <= 0):
            raise ValueError("gauss potential needs a >= 0, sigma > 0 and cut > 0")

    @property
    def r_supp(self) -> float:
        if self.kind == "step":
            return float(self.params["r"])
        if self.kind == "gauss":
            return float(self.params["cut"] * self.params["sigma"])
        return 0.0

    @property
    def sup_norm(self) -> float:
        if self.kind == "step":
            return float(self.params["h"])
        if self.kind == "gauss":
            return float(self.params["a"] * (1.0 - math.exp(-0.5 * self.params["cut"] ** 2)))
        return 0.0

    @property
    def is_zero(self) -> bool:
        return self.sup_norm == 0.0

    def of_sq(self, sq) -> np.ndarray:
        """Potential as a function of squared distance."""
        sq = np.asarray(sq, dtype=float)
        if self.kind == "step":
            return np.where(sq <= self.params["r"] ** 2, float(self.params["h"]), 0.0)
        if self.kind == "gauss":
            a, s, c = self.params["a"], self.params["sigma"], self.params["cut"]
            inside = sq <= (c * s) ** 2
            return np.where(inside, a * (np.exp(-sq / (2.0 * s * s)) - math.exp(-0.5 * c * c)), 0.0)
        return np.zeros_like(sq)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.of_sq(np.sum(x * x, axis=-1))

    def spec(self) -> str:
        params = dict(self.params)
        if self.kind == "gauss":
            params["cut"] = f"{params['cut']!r}sigma"
        items = ",".join(f"{k}={v!s}" if isinstance(v, str) else f"{k}={v!r}" for k, v in params.items())
        extra = f",C={self.C!r}" if self.C else ""
        return f"{self.kind}:{items}{extra}" if items or extra else self.kind


def step_potential(h: float, r: float, C: float = 0.0) -> PairPotential:
    return PairPotential("step", {"h": float(h), "r": float(r)}, float(C))


def gauss_potential(a: float, sigma: float, cut: float = 3.0, C: float = 0.0) -> PairPotential:
    """``a (exp(-|x|^2 / 2 sigma^2) - exp(-cut^2 / 2))`` inside ``|x| <= cut sigma``.

    The constant shift makes the potential continuous at the cutoff.
    """
    return PairPotential("gauss", {"a": float(a), "sigma": float(sigma), "cut": float(cut)}, float(C))


ZERO = PairPotential("zero")


def parse_potential(text: str) -> PairPotential:
    """Parse ``step:h=1,r=0.5``, ``gauss:a=1,sigma=0.3,cut=3sigma`` or ``zero``."""
    text = text.strip()
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    params: dict[str, float] = {}
    raw: dict[str, str] = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise ValueError(f"malformed potential parameter {item!r}")
        raw[key.strip()] = val.strip()
    C = float(raw.pop("C", 0.0))
    if kind == "gauss":
        sigma = float(raw.get("sigma", "nan"))
        cut = raw.pop("cut", "3sigma")
        if cut.endswith("sigma"):
            factor = cut[: -len("sigma")].strip()
            params["cut"] = float(factor) if factor else 1.0
        else:
            params["cut"] = float(cut) / sigma
    try:
        params.update({k: float(v) for k, v in raw.items()})
    except ValueError as exc:
        raise ValueError(f"non-numeric potential parameter in {text!r}") from exc
    if kind == "zero":
        return PairPotential("zero", {}, C)
    expected = {"step": {"h", "r"}, "gauss": {"a", "sigma", "cut"}}.get(kind)
    if expected is None:
        raise ValueError(f"unknown potential kind {kind!r}")
    if set(params) != expected:
        raise ValueError(f"{kind} potential needs parameters {sorted(expected)}, got {sorted(params)}")
    return PairPotential(kind, params, C)


def trapezoid_weights(substeps: int, beta: float) -> np.ndarray:
    w = np.full(substeps + 1, beta / substeps)
    w[[0, -1]] *= 0.5
    return w


def _min_image(disp: np.ndarray, period: float | None) -> np.ndarray:
    if period is None:
        return disp
    return disp - period * np.round(disp / period)


def leg_interaction(f: Leg, g: Leg, v: PairPotential, period: float | None = None) -> float:
    """``V(f, g)`` by the composite trapezoid rule on the shared grid."""
    if f.points.shape != g.points.shape or f.beta != g.beta:
        raise ValueError("legs must share beta and discretization")
    disp = _min_image(f.points - g.points, period)
    w = trapezoid_weights(f.substeps, f.beta)
    return float(v(disp) @ w)


def _pair_values(legs: np.ndarray, i: np.ndarray, j: np.ndarray, v: PairPotential, beta: float,
                 period: float | None, other: np.ndarray | None = None) -> np.ndarray:
    """``V(legs[i], other[j])`` for index arrays, in chunks."""
    other = legs if other is None else other
    w = trapezoid_weights(legs.shape[1] - 1, beta)
    out = np.empty(len(i))
    for s in range(0, len(i), _CHUNK):
        disp = _min_image(legs[i[s:s + _CHUNK]] - other[j[s:s + _CHUNK]], period)
        out[s:s + _CHUNK] = v.of_sq(np.einsum("psd,psd->ps", disp, disp)) @ w
    return out


def loop_pair_interaction(fx: Loop, fy: Loop, same: bool, v: PairPotential, period: float | None = None) -> float:
    """Half the sum of ``V`` over ordered leg pairs of two loops.

    With ``same`` the two arguments are the same loop and the diagonal leg
    pairs are excluded.
    """
    a, b = fx.legs, fy.legs
    i, j = np.meshgrid(np.arange(len(a)), np.arange(len(b)), indexing="ij")
    i, j = i.ravel(), j.ravel()
    if same:
        keep = i != j
        i, j = i[keep], j[keep]
    return 0.5 * float(np.sum(_pair_values(a, i, j, v, fx.beta, period, other=b)))


def _all_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, k=1)


def candidate_pairs(points: np.ndarray, reach: float, period: float | None = None,
                    origin=None) -> tuple[np.ndarray, np.ndarray]:
    """Unordered index pairs ``i < j`` with ``|p_i - p_j| <= reach`` (cell list).

    With ``period`` the distance is the minimum-image distance on the torus
    of side ``period`` whose lower corner is ``origin``.
    """
    n, d = points.shape
    if n < 2:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    if reach <= 0:
        reach = 1e-12
    if period is not None:
        per_axis = int(period // reach)
        if per_axis < 3:
            i, j = _all_pairs(n)
            return _within(points, i, j, reach, period)
        lo = np.zeros(d) if origin is None else np.asarray(origin, float)
        cells = np.floor(np.mod(points - lo, period) / (period / per_axis)).astype(np.int64) % per_axis
        dims = np.full(d, per_axis)
    else:
        cells = np.floor((points - points.min(axis=0)) / reach).astype(np.int64)
        dims = cells.max(axis=0) + 1
        if float(np.prod(dims.astype(float))) > 2.0 ** 62:
            i, j = _all_pairs(n)
            return _within(points, i, j, reach, period)
    key = np.ravel_multi_index(tuple(cells.T), tuple(dims))
    order = np.argsort(key, kind="stable")
    sorted_keys = key[order]
    src_all, dst_all = [], []
    idx = np.arange(n)
    for off in itertools.product((-1, 0, 1), repeat=d):
        nb = cells + np.asarray(off)
        if period is not None:
            nb %= dims
            valid = np.ones(n, dtype=bool)
        else:
            valid = np.all((nb >= 0) & (nb < dims), axis=1)
        nkey = np.ravel_multi_index(tuple(nb[valid].T), tuple(dims))
        lo_ix = np.searchsorted(sorted_keys, nkey, side="left")
        hi_ix = np.searchsorted(sorted_keys, nkey, side="right")
        counts = hi_ix - lo_ix
        total = int(counts.sum())
        if total == 0:
            continue
        src = np.repeat(idx[valid], counts)
        run_start = np.repeat(np.cumsum(counts) - counts, counts)
        dst = order[np.repeat(lo_ix, counts) + np.arange(total) - run_start]
        keep = src < dst
        src_all.append(src[keep])
        dst_all.append(dst[keep])
    if not src_all:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    i = np.concatenate(src_all)
    j = np.concatenate(dst_all)
    return _within(points, i, j, reach, period)


def _within(points, i, j, reach, period):
    disp = _min_image(points[i] - points[j], period)
    keep = np.einsum("pd,pd->p", disp, disp) <= reach * reach
    return i[keep], j[keep]


def leg_pair_energies(legs: np.ndarray, v: PairPotential, beta: float, period: float | None = None,
                      method: str = "cells", origin=None):
    """All unordered leg pairs ``i < j`` that may interact, with their ``V``.

    ``method="brute"`` evaluates every pair and is the reference route.
    """
    n = len(legs)
    if n < 2 or v.is_zero:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    if method == "brute":
        i, j = _all_pairs(n)
    elif method == "cells":
        reach = 2.0 * float(leg_spreads(legs).max()) + v.r_supp
        i, j = candidate_pairs(legs[:, 0], reach, period, origin)
    else:
        raise ValueError(f"unknown method {method!r}")
    return i, j, _pair_values(legs, i, j, v, beta, period)


def _torus_origin(config: LoopConfiguration):
    return None if config.period is None else config.box.center_array - config.box.radius


def _anchor_membership(config: LoopConfiguration, box) -> np.ndarray:
    anchors = config.anchors()
    if config.period is not None:
        anchors = config.box.wrap(anchors)
    return _member(box, anchors)


def _member(region, points) -> np.ndarray:
    if region is None:
        return np.ones(len(points), dtype=bool)
    if callable(region) and not isinstance(region, CenteredBox):
        return np.asarray(region(points), dtype=bool)
    return np.atleast_1d(region.contains(points)).astype(bool)


def total_interaction(config: LoopConfiguration, box_a=None, box_b=None, v: PairPotential = ZERO,
                      method: str = "cells") -> float:
    """``sum_{x in box_a, y in box_b}`` of the loop pair interaction.

    Loops are selected by anchor; ``None`` selects every loop.  For
    ``box_a = box_b`` covering all anchors this is the sum of ``V`` over
    unordered pairs of distinct legs.
    """
    if len(config) == 0 or v.is_zero:
        return 0.0
    legs, owner = config.stacked_legs()
    in_a = _anchor_membership(config, box_a)[owner]
    in_b = _anchor_membership(config, box_b)[owner]
    i, j, vals = leg_pair_energies(legs, v, config.beta, config.period, method, _torus_origin(config))
    weight = (in_a[i] & in_b[j]).astype(float) + (in_a[j] & in_b[i]).astype(float)
    return 0.5 * float(np.sum(weight * vals))


def cross_leg_energy(new: np.ndarray, old: np.ndarray, v: PairPotential, beta: float,
                     period: float | None = None) -> float:
    """``sum_{a in new, b in old} V(a, b)``."""
    if len(new) == 0 or len(old) == 0 or v.is_zero:
        return 0.0
    sa, sb = leg_spreads(new), leg_spreads(old)
    disp = _min_image(new[:, None, 0] - old[None, :, 0], period)
    dist = np.sqrt(np.einsum("abd,abd->ab", disp, disp))
    i, j = np.nonzero(dist <= sa[:, None] + sb[None, :] + v.r_supp)
    if len(i) == 0:
        return 0.0
    return float(np.sum(_pair_values(new, i, j, v, beta, period, other=old)))


def internal_leg_energy(legs: np.ndarray, v: PairPotential, beta: float, period: float | None = None) -> float:
    """``sum_{i < j} V(legs_i, legs_j)``."""
    if len(legs) < 2 or v.is_zero:
        return 0.0
    i, j = _all_pairs(len(legs))
    return float(np.sum(_pair_values(legs, i, j, v, beta, period)))


@dataclass(frozen=True)
class EnergyBreakdown:
    f_ll: float
    f_ls: float
    f_ss: float
    total: float


class Complement:
    """Membership predicate for the complement of a box."""

    def __init__(self, box: CenteredBox):
        self.box = box

    def __call__(self, points) -> np.ndarray:
        return ~np.atleast_1d(self.box.contains(points))


def _components(loop_legs, loop_anchor, shred_legs, v, beta, period, region_a, region_b):
    """``(F^LL, F^LS, F^SS)`` between regions ``a`` and ``b``."""
    legs = np.concatenate([loop_legs, shred_legs], axis=0)
    n_loop = len(loop_legs)
    is_loop = np.arange(len(legs)) < n_loop
    # loop legs are placed by their loop's anchor, shred legs by their own start
    where = np.concatenate([loop_anchor, shred_legs[:, 0]], axis=0) if len(legs) else np.zeros((0, 1))
    in_a = _member(region_a, where) if len(legs) else np.zeros(0, bool)
    in_b = _member(region_b, where) if len(legs) else np.zeros(0, bool)
    i, j, vals = leg_pair_energies(legs, v, beta, period)
    li, lj = is_loop[i], is_loop[j]
    ab = (in_a[i] & in_b[j]).astype(float)
    ba = (in_a[j] & in_b[i]).astype(float)
    f_ll = float(np.sum(vals[li & lj] * (ab + ba)[li & lj]))
    f_ss = float(np.sum(vals[~li & ~lj] * (ab + ba)[~li & ~lj]))
    # loop leg first: (loop i, shred j) counts ab, (shred i, loop j) counts ba
    f_ls = float(np.sum(vals[li & ~lj] * ab[li & ~lj]) + np.sum(vals[~li & lj] * ba[~li & lj]))
    return f_ll, f_ls, f_ss


def f_decomposition(loops: LoopConfiguration, shreds, box_w: CenteredBox, box_w2: CenteredBox | None = None,
                    v: PairPotential = ZERO, variant: str = "WW") -> EnergyBreakdown:
    """Loop/shred split of the interaction.

    ``variant="WW"`` returns the three components between ``box_w`` and
    ``box_w2`` (default ``box_w``) and ``total = F_ll/2 + F_ls + F_ss/2``.
    ``variant="U"`` treats ``box_w`` as the unit box and assembles its total
    interaction with everything else; the components reported are then the
    within-box ones.
    """
    box_w2 = box_w if box_w2 is None else box_w2
    shreds = list(getattr(shreds, "shreds", shreds))
    beta = loops.beta
    d = box_w.dim
    if len(loops):
        loop_legs, owner = loops.stacked_legs()
        loop_anchor = loops.anchors()[owner]
    else:
        loop_legs = np.zeros((0, loops.substeps + 1, d))
        loop_anchor = np.zeros((0, d))
    if shreds:
        shred_legs = np.concatenate([s.legs for s in shreds], axis=0)
    else:
        shred_legs = np.zeros((0, loop_legs.shape[1], d))
    args = (loop_legs, loop_anchor, shred_legs, v, beta, loops.period)
    if variant == "WW":
        ll, ls, ss = _components(*args, box_w, box_w2)
        return EnergyBreakdown(ll, ls, ss, 0.5 * ll + ls + 0.5 * ss)
    if variant == "U":
        out = Complement(box_w)
        ll, ls, ss = _components(*args, box_w, box_w)
        ll_out, ls_out, ss_out = _components(*args, box_w, out)
        _, ls_in, _ = _components(*args, out, box_w)
        total = 0.5 * (ll + 2.0 * ls + ss) + ll_out + ls_out + ls_in + ss_out
        return EnergyBreakdown(ll, ls, ss, total)
    raise ValueError(f"unknown variant {variant!r}")


def check_superstability(v: PairPotential, box: CenteredBox, points) -> float:
    """``sum_{i<j} v(x_i - x_j) - C (k^2/|W| - k)`` for points in ``box``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    k = len(pts)
    if k and not np.all(box.contains(pts)):
        raise ValueError("all points must lie in the box")
    lhs = 0.0
    if k >= 2:
        i, j = _all_pairs(k)
        lhs = float(np.sum(v(pts[i] - pts[j])))
    return lhs - v.C * (k * k / box.volume - k)
