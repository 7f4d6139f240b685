import math

import numpy as np
import pytest

from unidev.core import FiniteSpace
from unidev.kernel import (
    KernelMeasure, KernelProblem, L_inequality_lhs, conjugate_inequality_check, cost_measure, cost_set,
    grid_cost_set, kernel_integral, psi, radon_nikodym, solve_L, verify_theorem1,
)

TWO = FiniteSpace.uniform(2)


def test_psi_values():
    assert psi(1.0, 0.0) == 0
    assert psi(1.0, 2.0) == 1
    assert psi(1.0, 1.0) == 0.25
    assert psi(1.0, 3.0) == 2
    for a in (0.3, 1.0, 4.0):
        assert psi(a, 2 * a) == pytest.approx(a)
    with pytest.raises(ValueError):
        psi(1.0, -0.1)


def test_psi_convex_and_increasing():
    v = np.linspace(0, 10, 2001)
    for a in (0.5, 1.0, 2.0):
        y = psi(a, v)
        assert (np.diff(y) >= 0).all()
        assert (np.diff(y, 2) >= -1e-12).all()


def test_solve_L():
    L1 = solve_L(1.0)
    assert L1 == pytest.approx(1.1173, abs=1e-4)
    assert round(L1, 2) == 1.12
    assert L_inequality_lhs(1.10) == pytest.approx(1.019, abs=1e-3)
    assert L_inequality_lhs(1.12) == pytest.approx(0.997, abs=1e-3)
    for a in (0.5, 1.0, 2.0, 5.0):
        L = solve_L(a)
        assert abs(L_inequality_lhs(L) - a) <= 1e-9
        assert L_inequality_lhs(L * 1.01) < a < L_inequality_lhs(L * 0.99)


def test_lhs_decreasing():
    L = np.linspace(0.05, 20, 500)
    vals = [L_inequality_lhs(x) for x in L]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_radon_nikodym_examples():
    prob = KernelProblem(TWO, 1, [0], 1, alpha=1.0)
    nu = KernelMeasure.on_event(prob, [1.0])
    assert radon_nikodym(prob, nu, 0).tolist() == [2.0, 0.0]
    assert cost_measure(prob, nu) == pytest.approx(0.5)
    at_x = KernelProblem(TWO, 2, [3], 3)
    point = KernelMeasure.on_event(at_x, [1.0])
    for i in range(2):
        assert not radon_nikodym(at_x, point, i).any()
    assert cost_measure(at_x, point) == 0


def test_cost_set_examples():
    assert cost_set(KernelProblem(TWO, 1, [0], 1)).value == pytest.approx(0.5)
    prob = KernelProblem(TWO, 2, [0, 1, 2], 2)
    res = cost_set(prob)
    assert res.value == 0 and res.measure.weights[2] == 1


def small_problems():
    rng = np.random.default_rng(4)
    for m in (2, 3):
        for n in (1, 2):
            space = FiniteSpace(tuple("abc"[:m]), tuple(rng.dirichlet(np.ones(m))))
            N = m**n
            for _ in range(6):
                size = rng.integers(1, min(4, N) + 1)
                A = rng.choice(N, size=size, replace=False)
                x = int(rng.integers(N))
                for alpha in (0.5, 1.0, 2.0):
                    yield KernelProblem(space, n, A, x, alpha)


def test_frank_wolfe_matches_grid_oracle():
    for prob in small_problems():
        fw = cost_set(prob, tol=1e-11).value
        grid = grid_cost_set(prob)
        assert fw <= grid + 1e-9
        assert fw == pytest.approx(grid, abs=1e-5)


def test_cost_monotone_in_event():
    rng = np.random.default_rng(8)
    space = FiniteSpace(("a", "b", "c"), (0.2, 0.3, 0.5))
    for _ in range(25):
        big = rng.choice(9, size=5, replace=False)
        small = big[:2]
        x = int(rng.integers(9))
        assert cost_set(KernelProblem(space, 2, big, x)).value <= cost_set(KernelProblem(space, 2, small, x)).value + 1e-9


def test_cost_zero_iff_inside():
    space = FiniteSpace(("a", "b", "c"), (0.2, 0.3, 0.5))
    A = [0, 4, 8]
    for x in range(9):
        v = cost_set(KernelProblem(space, 2, A, x)).value
        assert (v == 0) == (x in A)
        if x not in A:
            assert v > 1e-6


def test_full_event_integral_is_one():
    space = FiniteSpace(("a", "b"), (0.25, 0.75))
    integral, pa = kernel_integral(space, 2, list(range(4)), 1.0, solve_L(1.0))
    assert integral == pytest.approx(1.0) and pa == pytest.approx(1.0)


def test_theorem1_small_case():
    rep = verify_theorem1(FiniteSpace(("a", "b"), (0.25, 0.75)), 2, 1.0)
    assert len(rep.rows) == 15
    assert rep.passed and rep.max_product <= 1 + 1e-6


def test_conjugate_inequality():
    rep = conjugate_inequality_check(samples=20_000, seed=3)
    assert rep.passed and rep.checked >= 20_000
    assert rep.worst_margin >= -1e-12


def test_problem_validation():
    with pytest.raises(ValueError):
        KernelProblem(TWO, 1, [], 0)
    with pytest.raises(ValueError):
        KernelProblem(TWO, 1, [5], 0)
    with pytest.raises(ValueError):
        KernelProblem(TWO, 0, [0], 0)
