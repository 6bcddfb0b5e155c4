import numpy as np
import pytest
from scipy import stats

from loopsoup.geometry import CenteredBox
from loopsoup.paths import (
    InterlacementFragment,
    Loop,
    LoopConfiguration,
    Shred,
    fill_legs,
    leg_spreads,
    particles,
    sample_bridge,
    sample_loop,
    sample_loops,
    spread,
    walk_bridge,
)


def test_bridge_endpoints_are_pinned(rng):
    x, y = np.array([0.0, 1.0]), np.array([2.0, -1.0])
    leg = sample_bridge(x, y, 0.8, 10, rng)
    assert leg.points.shape == (11, 2)
    np.testing.assert_array_equal(leg.points[0], x)
    np.testing.assert_array_equal(leg.points[-1], y)
    assert leg.substeps == 10


@pytest.mark.parametrize("duration,substeps", [(0.0, 4), (-1.0, 4), (1.0, 0)])
def test_bridge_rejects_bad_arguments(rng, duration, substeps):
    with pytest.raises(ValueError):
        sample_bridge([0.0], [1.0], duration, substeps, rng)


def test_bridge_marginals_match_gaussian_oracle(rng):
    # generator Laplacian: the bridge at time t has mean x+(y-x)t/T and variance 2t(T-t)/T
    n, T, S = 20000, 1.5, 6
    x, y = np.array([0.3]), np.array([-1.2])
    pts = sample_bridge_batch(x, y, T, S, n, rng)
    for j in range(1, S):
        t = T * j / S
        mean = x[0] + (y[0] - x[0]) * t / T
        sd = np.sqrt(2.0 * t * (T - t) / T)
        z = (pts[:, j, 0] - mean) / sd
        assert stats.kstest(z, "norm").pvalue > 1e-3


def sample_bridge_batch(x, y, T, S, n, rng):
    from loopsoup.paths import _bridge_grid
    return _bridge_grid(np.repeat(x[None], n, 0), np.repeat(y[None], n, 0), S, T / S, rng)


def test_bridge_increment_covariance(rng):
    # Cov(B_s, B_t) = 2 s (T - t) / T for s <= t
    n, T, S = 40000, 1.0, 4
    pts = sample_bridge_batch(np.zeros(1), np.zeros(1), T, S, n, rng)[:, :, 0]
    s, t = 0.25, 0.75
    cov = np.mean(pts[:, 1] * pts[:, 3])
    expected = 2.0 * s * (T - t) / T
    assert abs(cov - expected) < 5 * np.sqrt(2.0 * 0.375 ** 2 / n) + 0.01


def test_walk_bridge_step_variance(rng):
    # closed walk of k steps of variance 2 beta: the midpoint of a 2-step bridge has variance beta
    beta, n = 0.7, 30000
    pts = walk_bridge(np.zeros((n, 3)), np.zeros((n, 3)), 2, beta, rng)
    var = pts[:, 1].var(axis=0)
    np.testing.assert_allclose(var, beta, rtol=0.05)


def test_sampled_loop_is_closed_and_continuous(rng):
    loop = sample_loop([1.0, 2.0, 3.0], 5, 1.0, 8, rng)
    assert loop.length == 5
    assert loop.is_closed()
    np.testing.assert_array_equal(loop.anchor, [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(particles(loop), loop.legs[:, 0])
    assert loop.n_legs == 5 and loop.substeps == 8 and loop.dim == 3


def test_batch_loops_are_closed(rng):
    shapes = sample_loops(np.zeros((10, 2)), 3, 1.0, 4, rng)
    assert shapes.shape == (10, 3, 5, 2)
    assert all(Loop(s, 1.0).is_closed() for s in shapes)


def test_sample_loop_rejects_zero_length(rng):
    with pytest.raises(ValueError):
        sample_loop([0.0], 0, 1.0, 4, rng)


def test_rerooting_preserves_the_cycle(rng):
    loop = sample_loop(np.zeros(2), 4, 1.0, 3, rng)
    r = loop.rerooted(2)
    assert r.is_closed()
    np.testing.assert_array_equal(r.anchor, loop.particles()[2])
    np.testing.assert_array_equal(np.roll(r.particles(), 2, axis=0), loop.particles())


def test_translation(rng):
    loop = sample_loop(np.zeros(2), 2, 1.0, 3, rng)
    moved = loop.translated([1.0, -1.0])
    np.testing.assert_allclose(moved.legs - loop.legs, np.broadcast_to([1.0, -1.0], loop.legs.shape))


def test_spread_oracle():
    leg = np.array([[0.0, 0.0], [3.0, 4.0], [1.0, 0.0]])
    assert spread(leg) == 5.0
    np.testing.assert_allclose(leg_spreads(np.stack([leg, leg + 1.0])), [5.0, 5.0])
    assert len(leg_spreads(np.zeros((0, 3, 2)))) == 0


def test_shred_accessors(rng):
    W = CenteredBox(1.0, 1)
    pts = np.array([[0.0], [0.5], [2.0]])
    legs = fill_legs(pts, 1.0, 4, rng)
    s = Shred(legs, 1.0, W)
    assert s.length == 2
    np.testing.assert_array_equal(s.entry, [0.0])
    np.testing.assert_array_equal(s.exit, [2.0])
    assert s.is_valid()
    assert s.translated([0.1]).is_valid()
    assert s.key() == Shred(legs.copy(), 1.0, W).key()


def test_fragment_particles_include_endpoint(rng):
    pts = np.array([[5.0, 0.0], [0.0, 0.0], [0.1, 0.0], [6.0, 0.0]])
    frag = InterlacementFragment(fill_legs(pts, 1.0, 2, rng), 1.0, CenteredBox(1.0, 2), entry_index=1)
    np.testing.assert_array_equal(frag.particles(), pts)
    np.testing.assert_array_equal(frag.entry_point, [0.0, 0.0])


def test_configuration_stacking(rng):
    loops = [sample_loop(np.zeros(2), k, 1.0, 2, rng) for k in (1, 3, 2)]
    config = LoopConfiguration(loops, CenteredBox(1.0, 2), 1.0, 2)
    legs, owner = config.stacked_legs()
    assert legs.shape == (6, 3, 2)
    assert owner.tolist() == [0, 1, 1, 1, 2, 2]
    assert config.n_particles() == 6
    empty = config.with_loops([])
    assert empty.stacked_legs()[0].shape == (0, 3, 2)
    assert empty.anchors().shape == (0, 2)
