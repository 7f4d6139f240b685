import math

import numpy as np
import pytest
from scipy import integrate

from unidev.capacity import EntropyEnvelope, bracket_table_envelope, constant_envelope, haussler_envelope, power_envelope
from unidev.core import ContinuousLine

UniformLine = ContinuousLine.uniform
from unidev.entropy import (
    EntropyIntegralSpec, RateSpec, closed_form_rate_u0, entropy_integral, loglog_slope, phi,
    phi_bracketing, phi_values, rate_curve, rate_rhs, smooth_boundary_rate, zero_error_rate,
)
from unidev.errors import WindowError


def test_phi_examples():
    assert phi(EntropyIntegralSpec(constant_envelope(2.0), 100), 0.25) == pytest.approx(4.16277, abs=1e-5)
    assert phi(EntropyIntegralSpec(power_envelope(1.0, 1.0), 1), 1.0) == pytest.approx(math.sqrt(math.pi) / 2, abs=1e-9)
    assert phi_bracketing(EntropyIntegralSpec(constant_envelope(2.0), 4), 1.0) == pytest.approx(1.66511, abs=1e-5)
    assert phi(EntropyIntegralSpec(haussler_envelope(1), 10), 1e-14) < 1e-5


def test_power_integral_against_independent_quadrature():
    # integrand sqrt(log(c) + gamma log(1/u)) evaluated directly by scipy with a break at the knee
    for c, g in ((1.0, 1.0), (3.0, 0.5), (2.0, 1.7)):
        env = power_envelope(c, g)
        for top in (0.1, 0.5, 1.0):
            f = lambda u: math.sqrt(max(0.0, math.log(c) + g * math.log(1 / u)))
            ref = integrate.quad(f, 0, top, limit=400, epsabs=1e-13)[0]
            assert entropy_integral(env, top) == pytest.approx(ref, abs=1e-8)


def test_haussler_integral_against_quadrature():
    env = haussler_envelope(2)
    f = lambda u: math.sqrt(math.log(float(env.D(u))))
    ref = integrate.quad(f, 0, 1.0, limit=400, epsabs=1e-12)[0]
    assert entropy_integral(env, 1.0) == pytest.approx(ref, abs=1e-8)


@pytest.mark.parametrize("env", [constant_envelope(2.0), haussler_envelope(1), power_envelope(2.0, 1.0),
                                 bracket_table_envelope(UniformLine())])
def test_phi_shape(env):
    n = 50
    p = np.linspace(1e-4, 1, 60)
    v = phi_values(env, n, p)
    assert (np.diff(v) >= -1e-12).all()
    assert (np.diff(p / v) >= -1e-9).all()
    if float(env.D(1.0)) >= 2:
        assert (v >= np.sqrt(n * p * math.log(2)) - 1e-9).all()


def test_bracket_table_agrees_with_count_formula():
    env = bracket_table_envelope(UniformLine())
    count = lambda u: math.ceil(1 / u**2 - 1e-12) + 1
    for u, d in env.table:
        assert d == count(u)
    step = 2.0 ** 0.25
    lo = env.table[0][0]
    for u in np.linspace(lo, 1.0, 80):
        # the step function holds the left-knot count, so it sits between the formula at u and one grid step finer
        assert count(u) <= float(env.D(u)) + 1e-9 <= count(max(lo, u / step)) + 2e-9
    table_int = entropy_integral(env, 1.0, lo)
    assert count_integral(lo, 1.0) - 1e-10 <= table_int <= step * count_integral(lo / step, 1.0 / step) + 1e-10


def count_integral(a, b):
    """Exact integral of sqrt(log(ceil(1/u^2) + 1)) over [a, b]: the count is k + 2 on (k+1)^-1/2 < u < k^-1/2."""
    total = 0.0
    k = 1
    while 1 / math.sqrt(k) > a:
        lo, hi = max(a, 1 / math.sqrt(k + 1)), min(b, 1 / math.sqrt(k))
        if hi > lo:
            total += (hi - lo) * math.sqrt(math.log(k + 2))
        k += 1
    return total


def test_rate_examples():
    spec0 = RateSpec(c=2.0, gamma=1.0, u=0.0)
    for n in (10, 1000, 10**6):
        assert zero_error_rate(spec0, n) == pytest.approx(closed_form_rate_u0(2.0, 1.0, n), rel=1e-10)
    assert zero_error_rate(RateSpec(c=0.0, gamma=1.0), 100) == 0.0
    with pytest.raises(WindowError):
        zero_error_rate(RateSpec(c=1.0, gamma=1.0, u=50.0), 100)


def test_rate_ratio_window_mode():
    spec = RateSpec(c=1.0, gamma=1.0, window_fraction=1.0)
    ratio = zero_error_rate(spec, 10**6) / zero_error_rate(spec, 10**3)
    assert ratio == pytest.approx(1e-2, rel=0.02)


@pytest.mark.parametrize("gamma", [0.5, 1.0, 1.5])
def test_rate_residual_and_slope(gamma):
    spec = RateSpec(c=1.5, gamma=gamma, window_fraction=0.5)
    grid = [10**k for k in range(2, 8)]
    for n in grid:
        p = zero_error_rate(spec, n)
        assert abs(p - rate_rhs(spec, n, p)) <= 1e-12
    rows = rate_curve(spec, grid)
    assert loglog_slope(grid, [r["rate"] for r in rows]) == pytest.approx(-2 / (2 + gamma), abs=1e-9)


def test_smooth_rates():
    r = smooth_boundary_rate(2.0, 2, 10**4)
    assert r.exponent == pytest.approx(-2 / 3)
    assert r.gamma == 1.0 and r.within_hypothesis
    assert smooth_boundary_rate(1e9, 2, 10).exponent == pytest.approx(-1, abs=1e-8)
    bad = smooth_boundary_rate(1.0, 3, 100)
    assert bad.gamma == 4.0 and not bad.within_hypothesis


def test_invalid_specs():
    with pytest.raises(ValueError):
        RateSpec(c=1.0, gamma=2.5)
    with pytest.raises(ValueError):
        EntropyIntegralSpec(constant_envelope(2.0), 0)
    with pytest.raises(ValueError):
        phi(EntropyIntegralSpec(constant_envelope(2.0), 3), 1.5)
