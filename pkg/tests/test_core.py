import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from unidev.core import (
    ContinuousLine, ExplicitMatrix, FiniteSpace, Intervals, Normalizer, Ramps, Sample, Thresholds,
    deviation_sum, dyadic_levels, empirical_mean, normalized_sup, replicate_rng, sup_batch,
)
from unidev.errors import EmptyClassError, InvalidMemberError, NormalizerError


class ZeroClass(ExplicitMatrix):
    def __init__(self):
        super().__init__(FiniteSpace.uniform(2), [[0.0, 0.0]])


def test_empirical_mean_examples():
    assert empirical_mean(ZeroClass(), 0, [0, 1, 1]) == 0
    assert empirical_mean(Thresholds(), 0.5, [0.1, 0.9]) == 0.5
    assert empirical_mean(Ramps(), (0.0, 1.0), [0.25, 0.75]) == 0.5


def test_deviation_sum_examples():
    assert deviation_sum(Thresholds(), 0.5, [0.6, 0.7, 0.8]) == pytest.approx(1.5, abs=1e-12)
    ones = ExplicitMatrix(FiniteSpace.uniform(3), [[1, 1, 1]])
    assert deviation_sum(ones, 0, [0, 2, 1]) == pytest.approx(0.0, abs=1e-12)
    assert deviation_sum(ZeroClass(), 0, [1, 0]) == 0


def test_unknown_member_raises():
    with pytest.raises(InvalidMemberError):
        empirical_mean(Thresholds(), 1.5, [0.2])
    with pytest.raises(InvalidMemberError):
        deviation_sum(ExplicitMatrix(FiniteSpace.uniform(2), [[0, 1]]), 3, [0])


def test_normalized_sup_examples():
    z, _ = normalized_sup(ZeroClass(), [0, 1], Normalizer("constant", 1.0))
    assert z == 0
    # grid t in {0.25, 0.5, 0.75}: Z = max sqrt(t) over the grid since the sample point is 1
    z, t = normalized_sup(Thresholds(), [1.0], Normalizer("sqrt-mean"), resolution=0.25)
    assert z == pytest.approx(math.sqrt(0.75), abs=1e-12)
    assert t == 0.75


def test_normalized_sup_nonpositive_when_every_mean_exceeds_pf():
    # every threshold captures the sample point 0, so f_bar = 1 >= Pf
    z, _ = normalized_sup(Thresholds(), [0.0, 0.0], Normalizer("sqrt-mean"), resolution=1 / 16)
    assert z <= 0


def test_empty_class():
    class Empty(Thresholds):
        def members(self, resolution=1 / 1024):
            return []

    with pytest.raises(EmptyClassError):
        normalized_sup(Empty(), [0.3], Normalizer())


def test_normalizer_rejects_zero_phi():
    cls = ExplicitMatrix(FiniteSpace.uniform(2), [[0, 0], [1, 0]])
    with pytest.raises(NormalizerError):
        normalized_sup(cls, [0, 1], Normalizer("sqrt-mean"))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.integers(1, 1023))
def test_deviation_identity(xs, k):
    t = k / 1024
    cls = Thresholds()
    lhs = deviation_sum(cls, t, xs)
    rhs = len(xs) * (cls.true_mean(t) - empirical_mean(cls, t, xs))
    assert abs(lhs - rhs) <= 1e-12 * max(1, len(xs))


@pytest.mark.parametrize("cls", [Thresholds(), Intervals(), Ramps()])
def test_refinement_is_monotone(cls):
    rng = replicate_rng(3, 0)
    norm = Normalizer("sqrt-mean") if not isinstance(cls, Ramps) else Normalizer("constant", 1.0)
    for _ in range(5):
        x = rng.uniform(size=20)
        zs = [normalized_sup(cls, x, norm, 2.0**-k)[0] for k in range(2, 7)]
        assert all(b >= a - 1e-12 for a, b in zip(zs, zs[1:]))


def test_finer_grid_is_superset():
    for cls in (Thresholds(), Intervals(), Ramps()):
        coarse = set(cls.members(1 / 8))
        fine = set(cls.members(1 / 16))
        assert coarse <= fine
    assert dyadic_levels(1 / 1000) == 10


def test_explicit_matrix_matches_brute_force():
    rng = replicate_rng(5, 0)
    space = FiniteSpace(("a", "b", "c", "d"), (0.1, 0.2, 0.3, 0.4))
    table = rng.uniform(size=(12, 4))
    cls = ExplicitMatrix(space, table)
    x = space.sample(rng, 15)
    norm = Normalizer("sqrt-mean")
    z, f = normalized_sup(cls, x, norm)
    brute = max((15 * (table[k] @ space.p) - table[k, x].sum()) / math.sqrt(15 * table[k] @ space.p) for k in range(12))
    assert z == pytest.approx(brute, rel=1e-12)


def test_explicit_matrix_csv(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("0,1\n0.5,0.5\n")
    cls = ExplicitMatrix.from_csv(FiniteSpace.uniform(2), p)
    assert cls.true_means([0, 1]).tolist() == [0.5, 0.5]


@pytest.mark.parametrize("cls", [Thresholds(), Intervals(), Ramps(),
                                 ExplicitMatrix(FiniteSpace.uniform(5), np.linspace(0, 1, 15).reshape(3, 5))])
def test_eval_in_unit_interval(cls):
    rng = replicate_rng(9, 1)
    members = cls.members(1 / 64)
    idx = rng.integers(0, len(members), 100_000)
    pts = cls.sample(rng, 100_000)
    vals = np.concatenate([cls.values([members[i] for i in idx[s:s + 5000]], pts[s:s + 5000]).diagonal()
                           for s in range(0, 100_000, 5000)])
    assert vals.min() >= 0 and vals.max() <= 1


def test_true_means_against_quadrature():
    dist = ContinuousLine([0, 0.3, 0.6, 1.0], [0.5, 2.0, 0.625])
    thr, ramps, iv = Thresholds(dist), Ramps(dist), Intervals(dist)

    def expect(f):
        return sum(integrate.quad(lambda x: f(x) * d, a, b, epsabs=1e-13)[0]
                   for a, b, d in zip(dist.breaks[:-1], dist.breaks[1:], dist.densities))

    for t in (0.1, 0.3, 0.45, 0.9):
        assert thr.true_mean(t) == pytest.approx(expect(lambda x: float(x <= t)), abs=1e-9)
    for t, w in ((0.0, 1.0), (0.2, 0.25), (0.55, 0.5), (0.9, 0.125)):
        f = lambda x: min(1.0, max(0.0, (x - t) / w))
        assert ramps.true_mean((t, w)) == pytest.approx(expect(f), abs=1e-9)
    assert iv.true_mean((0.2, 0.7)) == pytest.approx(expect(lambda x: float(0.2 <= x <= 0.7)), abs=1e-9)


def test_distribution_validation():
    with pytest.raises(ValueError):
        FiniteSpace(("a", "b"), (0.5, 0.6))
    with pytest.raises(ValueError):
        FiniteSpace(("a", "a"), (0.5, 0.5))
    with pytest.raises(ValueError):
        FiniteSpace(("a", "b"), (0.0, 1.0))
    with pytest.raises(ValueError):
        ContinuousLine([0, 0.5, 1], [1.0, 0.5])
    with pytest.raises(ValueError):
        Sample([])


def test_product_space_masses():
    space = FiniteSpace(("a", "b", "c"), (0.2, 0.3, 0.5))
    pts, masses = space.product(3)
    assert pts.shape == (27, 3)
    assert masses.sum() == pytest.approx(1.0, abs=1e-12)
    assert masses[0] == pytest.approx(0.2**3)


def test_replicate_streams_do_not_depend_on_order():
    a = [replicate_rng(42, k).uniform() for k in range(5)]
    b = [replicate_rng(42, k).uniform() for k in reversed(range(5))][::-1]
    assert a == b
    assert replicate_rng(42, 0, phase=1).uniform() != a[0]


def test_sup_batch_matches_single():
    cls = Thresholds()
    members = cls.members(1 / 32)
    X = replicate_rng(1, 0).uniform(size=(4, 10))
    z, _ = sup_batch(cls, members, X, Normalizer())
    for r in range(4):
        assert z[r] == pytest.approx(normalized_sup(cls, X[r], Normalizer(), 1 / 32)[0], rel=1e-12)
