import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from loopsoup.geometry import CenteredBox
from loopsoup.interaction import (
    ZERO,
    Complement,
    candidate_pairs,
    check_superstability,
    cross_leg_energy,
    f_decomposition,
    gauss_potential,
    internal_leg_energy,
    leg_interaction,
    loop_pair_interaction,
    parse_potential,
    step_potential,
    total_interaction,
    trapezoid_weights,
)
from loopsoup.loop_soup import make_intensity, sample_soup
from loopsoup.paths import Leg, LoopConfiguration, Shred, bridge_legs, fill_legs, sample_loop


def potential_oracle(kind, params, r):
    if kind == "step":
        return params["h"] if r <= params["r"] else 0.0
    a, s, c = params["a"], params["sigma"], params["cut"]
    return a * (math.exp(-r * r / (2 * s * s)) - math.exp(-c * c / 2)) if r <= c * s else 0.0


def V_oracle(f, g, v, beta, period=None):
    disp = f - g
    if period is not None:
        disp = disp - period * np.round(disp / period)
    vals = [potential_oracle(v.kind, v.params, float(np.linalg.norm(x))) for x in disp]
    return trapezoid(vals, dx=beta / (len(f) - 1))


def brute_total(config, v, region=None):
    """Sum of V over unordered pairs of distinct legs whose loops are anchored in ``region``."""
    legs, owner = config.stacked_legs()
    anchors = config.anchors()
    if config.period is not None:
        anchors = config.box.wrap(anchors)
    keep = np.ones(len(config), bool) if region is None else np.atleast_1d(region.contains(anchors))
    total = 0.0
    for a in range(len(legs)):
        for b in range(a + 1, len(legs)):
            if keep[owner[a]] and keep[owner[b]]:
                total += V_oracle(legs[a], legs[b], v, config.beta, config.period)
    return total


def test_potentials():
    v = step_potential(2.0, 0.5)
    assert v(np.array([0.5, 0.0])) == 2.0
    assert v(np.array([0.51, 0.0])) == 0.0
    assert v.r_supp == 0.5 and v.sup_norm == 2.0
    g = gauss_potential(1.0, 0.3)
    assert g.r_supp == pytest.approx(0.9)
    assert g(np.array([0.0, 0.0])) == pytest.approx(1.0 - math.exp(-4.5))
    # continuous at the cutoff
    assert g(np.array([0.9 - 1e-9, 0.0])) == pytest.approx(0.0, abs=1e-8)
    assert g.sup_norm == pytest.approx(1.0 - math.exp(-4.5))
    assert ZERO.is_zero and ZERO.r_supp == 0.0


@pytest.mark.parametrize("kind,params", [("step", dict(h=-1.0, r=1.0)), ("gauss", dict(a=1.0, sigma=0.0, cut=3.0)), ("cubic", {})])
def test_potential_validation(kind, params):
    from loopsoup.interaction import PairPotential
    with pytest.raises(ValueError):
        PairPotential(kind, params)


def test_parse_potential_round_trip():
    assert parse_potential("step:h=1.0,r=0.5") == step_potential(1.0, 0.5)
    assert parse_potential("gauss:a=1.0,sigma=0.3,cut=3sigma") == gauss_potential(1.0, 0.3, 3.0)
    assert parse_potential("gauss:a=2,sigma=0.5,cut=1.0").params["cut"] == pytest.approx(2.0)
    assert parse_potential("gauss:a=2,sigma=0.5").params["cut"] == 3.0
    assert parse_potential("zero").is_zero
    assert parse_potential("step:h=1,r=1,C=0.25").C == 0.25
    for v in (step_potential(1.5, 0.25, C=0.1), gauss_potential(1.0, 0.4, 2.5)):
        assert parse_potential(v.spec()) == v
    for bad in ("step:h=1", "step:h=1,r=x", "wall:h=1", "step:h"):
        with pytest.raises(ValueError):
            parse_potential(bad)


def test_trapezoid_weights_sum_to_beta():
    w = trapezoid_weights(8, 0.7)
    assert w.sum() == pytest.approx(0.7)
    assert w[0] == w[-1] == pytest.approx(0.7 / 16)


def test_leg_interaction_matches_oracle(rng):
    v = gauss_potential(1.0, 0.4)
    f = Leg(bridge_legs(np.zeros((1, 3)), np.full((1, 3), 0.1), 1.0, 16, rng)[0], 1.0)
    g = Leg(bridge_legs(np.full((1, 3), 0.2), np.zeros((1, 3)), 1.0, 16, rng)[0], 1.0)
    assert leg_interaction(f, g, v) == pytest.approx(V_oracle(f.points, g.points, v, 1.0), rel=1e-13)
    assert leg_interaction(f, g, v) == pytest.approx(leg_interaction(g, f, v), rel=1e-15)


def test_leg_interaction_of_constant_legs():
    # two legs at fixed distance inside the step range: V = h beta exactly
    f = Leg(np.zeros((5, 2)), 0.5)
    g = Leg(np.full((5, 2), 0.1), 0.5)
    assert leg_interaction(f, g, step_potential(3.0, 1.0)) == pytest.approx(1.5)


def test_leg_interaction_rejects_mismatch():
    with pytest.raises(ValueError):
        leg_interaction(Leg(np.zeros((5, 2)), 1.0), Leg(np.zeros((3, 2)), 1.0), ZERO)


def test_leg_interaction_refinement(rng):
    # pooled over many overlapping random leg pairs in a regime where 16 substeps resolve the range
    beta, v, n = 0.1, gauss_potential(1.0, 1.0), 4000
    x, y = rng.uniform(-0.5, 0.5, (n, 3)), rng.uniform(-0.5, 0.5, (n, 3))
    s = math.sqrt(2 * beta)
    f = bridge_legs(x, x + s * rng.standard_normal((n, 3)), beta, 256, rng)
    g = bridge_legs(y, y + s * rng.standard_normal((n, 3)), beta, 256, rng)
    fine = sum(leg_interaction(Leg(a, beta), Leg(b, beta), v) for a, b in zip(f, g))
    coarse = sum(leg_interaction(Leg(a[::16], beta), Leg(b[::16], beta), v) for a, b in zip(f, g))
    assert abs(coarse - fine) / fine < 1e-3


def test_loop_pair_interaction_oracle(rng):
    v = step_potential(1.0, 0.8)
    a = sample_loop(np.zeros(2), 3, 0.5, 4, rng)
    b = sample_loop(np.full(2, 0.3), 2, 0.5, 4, rng)
    cross = sum(V_oracle(p, q, v, 0.5) for p in a.legs for q in b.legs)
    assert loop_pair_interaction(a, b, False, v) == pytest.approx(cross / 2, rel=1e-12)
    self_pairs = sum(V_oracle(a.legs[i], a.legs[j], v, 0.5) for i in range(3) for j in range(3) if i != j)
    assert loop_pair_interaction(a, a, True, v) == pytest.approx(self_pairs / 2, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 2.0), st.booleans())
def test_candidate_pairs_match_brute_force(seed, reach, periodic):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-2, 2, size=(60, 3))
    period = 4.0 if periodic else None
    i, j = candidate_pairs(pts, reach, period, origin=np.full(3, -2.0))
    got = set(zip(i.tolist(), j.tolist()))
    expect = set()
    for a in range(60):
        for b in range(a + 1, 60):
            d = pts[a] - pts[b]
            if period:
                d = d - period * np.round(d / period)
            if np.dot(d, d) <= reach * reach:
                expect.add((a, b))
    assert got == expect


@pytest.mark.parametrize("bc", ["free", "periodic"])
def test_total_interaction_matches_oracle(rng, bc):
    box = CenteredBox(1.0, 2)
    config = sample_soup(make_intensity(0.05, 2, box, bc, kmax=3), 4, rng)
    v = gauss_potential(1.0, 0.3)
    assert len(config) > 3
    assert total_interaction(config, v=v) == pytest.approx(brute_total(config, v), rel=1e-12)
    assert total_interaction(config, v=v, method="brute") == pytest.approx(brute_total(config, v), rel=1e-12)


def test_total_interaction_region_weights(rng):
    box = CenteredBox(1.5, 2)
    config = sample_soup(make_intensity(0.05, 2, box, "free", kmax=3), 4, rng)
    v = step_potential(1.0, 0.5)
    A = CenteredBox(0.5, 2)
    B = Complement(A)
    full = total_interaction(config, v=v)
    within_a = total_interaction(config, A, A, v)
    within_b = total_interaction(config, B, B, v)
    cross = total_interaction(config, A, B, v)
    assert within_a == pytest.approx(brute_total(config, v, A), rel=1e-12)
    assert within_a + within_b + 2 * cross == pytest.approx(full, rel=1e-12)
    assert cross == pytest.approx(total_interaction(config, B, A, v), rel=1e-14)


def test_zero_potential_and_empty():
    config = LoopConfiguration([], CenteredBox(1.0, 2), 1.0, 4)
    assert total_interaction(config, v=step_potential(1, 1)) == 0.0


def test_cross_and_internal_energy(rng):
    v = gauss_potential(1.0, 0.5)
    new = bridge_legs(rng.uniform(-1, 1, (4, 2)), rng.uniform(-1, 1, (4, 2)), 0.5, 6, rng)
    old = bridge_legs(rng.uniform(-1, 1, (5, 2)), rng.uniform(-1, 1, (5, 2)), 0.5, 6, rng)
    cross = sum(V_oracle(a, b, v, 0.5) for a in new for b in old)
    assert cross_leg_energy(new, old, v, 0.5) == pytest.approx(cross, rel=1e-12)
    internal = sum(V_oracle(old[a], old[b], v, 0.5) for a in range(5) for b in range(a + 1, 5))
    assert internal_leg_energy(old, v, 0.5) == pytest.approx(internal, rel=1e-12)


def _mixed(rng, d=2):
    """Loops anchored in [-1.5, 1.5)^d and shreds of W = [-0.5, 0.5)^d."""
    box = CenteredBox(1.5, d)
    W = CenteredBox(0.5, d)
    config = sample_soup(make_intensity(0.1, d, box, "free", kmax=3), 4, rng)
    shreds = []
    for _ in range(6):
        inside = W.uniform(rng, 2)
        out = np.array([[2.0] + [0.0] * (d - 1)])
        shreds.append(Shred(fill_legs(np.concatenate([inside, out]), 0.1, 4, rng), 0.1, W))
    return config, shreds, W


def _placed_pairs_oracle(config, shreds, keep_pair):
    legs, owner = config.stacked_legs()
    where = [config.loops[o].anchor for o in owner]
    all_legs = list(legs) + [leg for s in shreds for leg in s.legs]
    where += [leg[0] for s in shreds for leg in s.legs]
    return all_legs, where


def test_f_decomposition_ww_equals_within_box_pairs(rng):
    v = gauss_potential(1.0, 0.4)
    config, shreds, W = _mixed(rng)
    legs, where = _placed_pairs_oracle(config, shreds, None)
    expected = sum(
        V_oracle(legs[a], legs[b], v, 0.1)
        for a in range(len(legs)) for b in range(a + 1, len(legs))
        if W.contains(where[a]) and W.contains(where[b])
    )
    out = f_decomposition(config, shreds, W, v=v)
    assert out.total == pytest.approx(expected, rel=1e-12)
    assert out.total == pytest.approx(0.5 * out.f_ll + out.f_ls + 0.5 * out.f_ss, rel=1e-15)


def test_f_decomposition_u_equals_pairs_touching_box(rng):
    v = gauss_potential(1.0, 0.4)
    config, shreds, W = _mixed(rng)
    legs, where = _placed_pairs_oracle(config, shreds, None)
    expected = sum(
        V_oracle(legs[a], legs[b], v, 0.1)
        for a in range(len(legs)) for b in range(a + 1, len(legs))
        if W.contains(where[a]) or W.contains(where[b])
    )
    assert f_decomposition(config, shreds, W, v=v, variant="U").total == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ValueError):
        f_decomposition(config, shreds, W, v=v, variant="X")


def test_complement_predicate():
    c = Complement(CenteredBox(1.0, 1))
    assert c(np.array([[0.0], [1.0]])).tolist() == [False, True]


def test_superstability_check():
    v = step_potential(1.0, 0.5, C=0.1)
    box = CenteredBox(1.0, 2)
    pts = np.zeros((4, 2))
    # 6 overlapping pairs against C (16/4 - 4) = 0
    assert check_superstability(v, box, pts) == pytest.approx(6.0)
    with pytest.raises(ValueError):
        check_superstability(v, box, [[3.0, 0.0]])
    assert check_superstability(v, box, np.zeros((0, 2))) == 0.0
