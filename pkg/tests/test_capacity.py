import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from unidev.capacity import (
    AtLeast, EntropyEnvelope, brute_packing, constant_envelope, greedy_packing, half_lines,
    haussler_envelope, interval_sets, power_envelope, sauer_bound, shatter_coefficient,
    threshold_brackets, vc_dimension,
)
from unidev.core import ContinuousLine

UniformLine = ContinuousLine.uniform

THREE = [0.1, 0.5, 0.9]


def threshold_vectors(points):
    cuts = [-1.0] + sorted(points)
    return np.array([[float(x <= t) for x in points] for t in cuts])


def test_shatter_examples():
    assert shatter_coefficient(np.zeros((1, 4)), 3).count == 1
    assert shatter_coefficient(half_lines(THREE), 3).count == 4
    pair = np.array([[0, 0], [1, 0], [0, 1], [1, 1]])
    assert shatter_coefficient(pair, 2).count == 4


def test_vc_dimension_examples():
    pos = [0.1, 0.3, 0.5, 0.7, 0.9]
    assert vc_dimension(half_lines(pos)) == 1
    assert vc_dimension(interval_sets(pos)) == 2
    assert shatter_coefficient(interval_sets(pos), 3).count == 7
    empty = np.zeros((1, 5))
    assert vc_dimension(empty, convention="first-unshattered") == 1
    assert vc_dimension(empty) == 0


def test_vc_cap_marker():
    full = np.array(list(itertools.product([0, 1], repeat=4)))
    d = vc_dimension(full, j_max=3)
    assert isinstance(d, AtLeast)


def test_sauer_examples():
    assert sauer_bound(1, 1) == pytest.approx(math.e)
    assert sauer_bound(2, 10) == pytest.approx(184.73, abs=0.01)
    for d in range(1, 8):
        assert sauer_bound(d, d) >= 2**d
    with pytest.raises(ValueError):
        sauer_bound(3, 2)


@pytest.mark.parametrize("n", range(1, 8))
def test_sauer_dominates_intervals(n):
    pos = np.linspace(0.05, 0.95, 7)
    s = shatter_coefficient(interval_sets(pos), n).count
    if n >= 2:
        assert s <= sauer_bound(2, n)
    assert s <= 2**n


def test_packing_examples():
    assert greedy_packing(np.full((5, 3), 0.2), 0.1)[0] == 1
    vecs = threshold_vectors(THREE)
    assert greedy_packing(vecs, 0.5)[0] == 4
    assert greedy_packing(vecs, 1.1)[0] == 1
    assert brute_packing(vecs, 0.5) == 4
    assert brute_packing(np.array([[0.3]]), 0.5) == 1
    # distances on a 1-d vector are plain absolute differences
    line = np.array([[0.0], [0.4], [0.8]])
    assert brute_packing(line, 0.5) == 2


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.05, 0.8))
def test_greedy_never_beats_brute(seed, u):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(size=(rng.integers(1, 10), 4))
    count, chosen = greedy_packing(pts, u)
    assert count <= brute_packing(pts, u)
    # chosen points are separated and cover everything
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).mean(axis=2))
    sub = d[np.ix_(chosen, chosen)]
    assert (sub[~np.eye(len(chosen), dtype=bool)] > u).all()
    assert (d[:, chosen].min(axis=1) <= u).all()


def test_haussler_examples():
    env = haussler_envelope(1)
    assert float(env.D(0.5)) == pytest.approx(2 * math.e * 8 * math.e, rel=1e-12)
    assert float(env.D(0.5)) == pytest.approx(118.22, abs=0.01)
    assert float(env.D(1e6)) == 1.0
    assert float(haussler_envelope(2).D(1.0)) == pytest.approx(241.03, abs=0.01)


def test_bracket_examples():
    uni = UniformLine()
    assert len(threshold_brackets(1.0, uni)) == 2
    assert len(threshold_brackets(0.5, uni)) == 5


@pytest.mark.parametrize("dist", [UniformLine(), ContinuousLine([0, 0.2, 1.0], [3.0, 0.5])])
@pytest.mark.parametrize("u", [1.0, 0.7, 0.5, 0.3, 0.1])
def test_brackets_cover_and_have_small_width(dist, u):
    br = threshold_brackets(u, dist)
    assert len(br) == math.ceil(1 / u**2 - 1e-12) + 1
    assert all(b.width <= u + 1e-12 for b in br)
    for t in np.linspace(0, 1, 201):
        assert any(b.contains_threshold(t) for b in br)


def test_envelopes_nonincreasing():
    rng = np.random.default_rng(2)
    envs = [
        haussler_envelope(3), power_envelope(2.0, 1.5), constant_envelope(4.0),
        EntropyEnvelope(kind="table", table=((0.1, 50), (0.3, 7), (0.9, 2))),
    ]
    for env in envs:
        a, b = np.sort(rng.uniform(1e-3, 2.0, size=(1000, 2)), axis=1).T
        assert (env.D(a) >= env.D(b)).all()
        assert (env.D(a) >= 1).all()


def test_table_envelope_is_monotonized():
    env = EntropyEnvelope(kind="table", table=((0.1, 3), (0.5, 9)))
    assert env.table == ((0.1, 9.0), (0.5, 9.0))


@pytest.mark.parametrize("env", [
    haussler_envelope(2), power_envelope(1.5, 0.5), constant_envelope(2.0),
    EntropyEnvelope(kind="table", table=((0.25, 5), (0.5, 3)), measures="test"),
])
def test_envelope_json_round_trip(env):
    back = EntropyEnvelope.from_json(json.loads(json.dumps(env.to_json())))
    assert back == env
    grid = np.linspace(0.01, 1.5, 50)
    assert np.array_equal(back.D(grid), env.D(grid))


def test_invalid_envelopes():
    with pytest.raises(ValueError):
        EntropyEnvelope(kind="nonsense")
    with pytest.raises(ValueError):
        constant_envelope(0.5)
    with pytest.raises(ValueError):
        haussler_envelope(0)
