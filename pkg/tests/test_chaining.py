import math

import numpy as np
import pytest

from unidev.capacity import brute_packing, constant_envelope, haussler_envelope
from unidev.chaining import (
    PointSet2n, build_hierarchy, chained_sup_bound, check_hierarchy, delta_sets, dist, level_integrals,
    project, rademacher_increments,
)
from unidev.entropy import entropy_integral
from unidev.errors import ResolutionError


def random_points(seed, members=16, n=4, binary=False):
    rng = np.random.default_rng(seed)
    v = rng.integers(0, 2, size=(members, 2 * n)).astype(float) if binary else rng.uniform(size=(members, 2 * n))
    return PointSet2n(v)


def test_single_zero_point():
    h = build_hierarchy(PointSet2n(np.zeros((1, 4))), j_max=6)
    assert all(level == [0] for level in h.levels)
    assert all(np.array_equal(p, np.zeros(4)) for p in project(h, 0))
    bounds, ok = chained_sup_bound(h)
    assert bounds[0] == 0 and ok[0]


def test_two_vectors_enter_together():
    a = np.array([0.6, 0.6, 0.6, 0.6])
    b = np.array([1.0, 1.0, 0.2, 0.2])
    h = build_hierarchy(PointSet2n(np.vstack([a, b])), j_max=8)
    d_ab, d_a0, d_b0 = dist(a, b), dist(a, 0), dist(b, 0)
    assert h.levels[0] == [0]
    first = next(j for j in range(9) if 2.0**-j < min(d_ab, d_a0, d_b0))
    assert 1 not in h.levels[first - 1] or 2 not in h.levels[first - 1]
    assert set(h.levels[first]) == {0, 1, 2}


@pytest.mark.parametrize("seed", range(6))
def test_levels_bounded_by_max_packing(seed):
    pts = random_points(seed, binary=seed % 2 == 0)
    h = build_hierarchy(pts, j_max=10)
    for j, level in enumerate(h.levels):
        assert len(level) <= brute_packing(h.nodes, 2.0**-j)


@pytest.mark.parametrize("seed", range(10))
def test_hierarchy_invariants(seed):
    h = build_hierarchy(random_points(100 + seed, members=24, n=6), j_max=12)
    fails = check_hierarchy(h)
    assert all(v == 0 for v in fails.values()), fails


def test_projection_links_and_telescoping():
    pts = random_points(7, members=20, n=5)
    h = build_hierarchy(pts, j_max=14)
    for m in range(len(pts.vectors)):
        proj = project(h, m)
        for k in range(1, len(proj)):
            assert dist(proj[k - 1], proj[k]) <= 2.0 ** (-k + 2) + 1e-12
        tele = sum(proj[k] - proj[k - 1] for k in range(1, len(proj)))
        assert np.max(np.abs(tele - pts.vectors[m])) <= 1e-12


def test_delta_energy_and_cardinality():
    h = build_hierarchy(random_points(3, members=16, n=4), j_max=10)
    n = h.n
    for j, deltas in delta_sets(h).items():
        assert len(deltas) <= max(1, len(h.levels[j]) * len(h.levels[j - 1]))
        energy = ((deltas[:, n:] - deltas[:, :n]) ** 2).sum(axis=1)
        assert (energy <= n * 4 * 2.0 ** (-2 * j + 4) + 1e-12).all()


def test_collapsed_level_has_zero_delta():
    # two binary vectors far apart: several consecutive levels coincide
    h = build_hierarchy(PointSet2n(np.array([[1, 1, 1, 1], [1, 0, 1, 0]], dtype=float)), j_max=6)
    deltas = delta_sets(h)
    collapsed = [j for j in range(2, 7) if len(h.levels[j]) == len(h.levels[j - 1])]
    assert collapsed
    for j in collapsed:
        assert np.any(np.all(deltas[j] == 0, axis=1))


def test_resolution_error():
    with pytest.raises(ResolutionError):
        build_hierarchy(PointSet2n(np.array([[0.5, 0.5], [0.5, 0.5 + 1e-6]])), j_max=4)


def test_level_integrals_constant_envelope():
    n = 9
    I = level_integrals(constant_envelope(2.0), n, j_max=12)
    expect = math.sqrt(n) * math.sqrt(math.log(2)) * 2.0 ** -(np.arange(13) + 1)
    assert np.allclose(I, expect, rtol=1e-12, atol=0)


@pytest.mark.parametrize("env", [haussler_envelope(1), constant_envelope(5.0)])
def test_level_integral_band_bound_and_tail_sum(env):
    n, jm = 16, 14
    I = level_integrals(env, n, j_max=jm)
    for j in range(jm + 1):
        assert I[j] >= math.sqrt(n) * 2.0 ** -(j + 1) * math.sqrt(math.log(float(env.D(2.0**-j)))) - 1e-12
        tail = I[j + 1:].sum()
        assert tail <= math.sqrt(n) * entropy_integral(env, 2.0 ** -(j + 1)) + 1e-10
    assert I.sum() == pytest.approx(math.sqrt(n) * (entropy_integral(env, 1.0) - entropy_integral(env, 2.0 ** -(jm + 1))), rel=1e-9)


def test_rademacher_chained_bound():
    rng = np.random.default_rng(11)
    pts = random_points(12, members=16, n=16)
    h = build_hierarchy(pts, j_max=12)
    bounds, ok = chained_sup_bound(h, u=36.0)
    assert ok.all()
    signs = rng.choice([-1.0, 1.0], size=(1000, h.n))
    sums = rademacher_increments(h, signs)
    within = np.all(sums <= bounds[None, :] + 1e-12, axis=1)
    assert within.mean() >= 0.99


def test_pointset_validation():
    with pytest.raises(ValueError):
        PointSet2n(np.ones((2, 3)))
    with pytest.raises(ValueError):
        PointSet2n(np.full((1, 2), 1.5))
