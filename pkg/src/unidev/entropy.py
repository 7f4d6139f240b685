"""Entropy integrals and the zero-error rate calculus for power-law envelopes."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .capacity import EntropyEnvelope
from .errors import IntegrationError, WindowError

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class EntropyIntegralSpec:
    envelope: EntropyEnvelope
    n: int
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("sample size must be at least 1")


def _analytic_band(envelope: EntropyEnvelope, lo: float, hi: float, tol: float) -> float:
    # with w = -log u the integrand becomes sqrt(a + b w) e^{-w}: smooth, no singularity at u = 0
    a, b = envelope.log_coefficients()
    w_top = -math.log(hi)
    w_bottom = math.inf if lo == 0 else -math.log(lo)
    w_zero = -a / b
    w_top = max(w_top, w_zero)
    if w_top >= w_bottom:
        return 0.0

    def f(w):
        return math.sqrt(max(0.0, a + b * w)) * math.exp(-w)

    val, err = integrate.quad(f, w_top, w_bottom, epsabs=0.0, epsrel=tol, limit=400)
    if not math.isfinite(val) or err > max(1e-12, 100 * tol * abs(val)):
        raise IntegrationError(f"quadrature did not converge on [{lo}, {hi}] (estimate {val}, error {err})")
    return val


@lru_cache(maxsize=200_000)
def entropy_integral(envelope: EntropyEnvelope, upper: float, lower: float = 0.0, tol: float = DEFAULT_TOL) -> float:
    """``integral_lower^upper sqrt(log D(u)) du`` (without the sqrt(n) factor)."""
    if upper < lower:
        raise ValueError("upper limit below lower limit")
    if upper == lower:
        return 0.0
    if envelope.piecewise_constant:
        total = 0.0
        for lo, hi, lg in envelope.pieces(upper):
            lo = max(lo, lower)
            if hi > lo:
                total += (hi - lo) * math.sqrt(max(0.0, lg))
        return total
    if envelope.kind == "analytic-power" and envelope.c == 0:
        return 0.0
    return _analytic_band(envelope, lower, upper, tol)


def _check_p(p):
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")


def phi(spec: EntropyIntegralSpec, p: float) -> float:
    """``sqrt(n) * integral_0^sqrt(p) sqrt(log D(u)) du``."""
    _check_p(p)
    return math.sqrt(spec.n) * entropy_integral(spec.envelope, math.sqrt(p), 0.0, spec.tol)


def phi_bracketing(spec: EntropyIntegralSpec, p: float) -> float:
    """Same integral with a bracketing-number envelope."""
    return phi(spec, p)


def phi_values(envelope: EntropyEnvelope, n: int, p, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Vectorized ``phi``; ``p <= 0`` maps to 0.  Repeated arguments are integrated once."""
    p = np.asarray(p, dtype=float)
    flat = np.clip(p.ravel(), 0.0, None)
    uniq, inverse = np.unique(flat, return_inverse=True)
    vals = np.array([entropy_integral(envelope, math.sqrt(q), 0.0, tol) if q > 0 else 0.0 for q in uniq])
    return (math.sqrt(n) * vals[inverse]).reshape(p.shape)


def phi_curve(spec: EntropyIntegralSpec, p_grid) -> list[tuple[float, float]]:
    return [(float(p), phi(spec, float(p))) for p in p_grid]


# ---------------------------------------------------------------------------
# rates under power-law entropy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateSpec:
    """Constants of the fixed point.

    With ``window_fraction`` set, the deviation parameter scales with the
    validity window, ``u(n) = window_fraction * n^(gamma/(2+gamma))``, and ``u``
    is ignored.
    """

    c: float
    gamma: float
    u: float = 1.0
    window_fraction: float | None = None

    def __post_init__(self):
        if not 0 < self.gamma < 2:
            raise ValueError("gamma must lie in (0, 2)")
        if self.c < 0 or self.u < 0:
            raise ValueError("c and u must be nonnegative")
        if self.window_fraction is not None and not 0 <= self.window_fraction <= 1:
            raise ValueError("window_fraction must lie in [0, 1]")

    def u_at(self, n: int) -> float:
        if self.window_fraction is None:
            return self.u
        return self.window_fraction * n ** (self.gamma / (2 + self.gamma))


def rate_rhs(spec: RateSpec, n: int, p: float) -> float:
    return spec.c / math.sqrt(n) * (p ** (0.5 - spec.gamma / 4) + math.sqrt(spec.u_at(n) * p))


def zero_error_rate(spec: RateSpec, n: int) -> float:
    """Largest ``Pf`` compatible with a zero empirical mean.

    Solves ``p = (c/sqrt(n)) (p^(1/2 - gamma/4) + sqrt(u p))`` for its positive
    root by bisection on ``log p``.  Dividing by ``sqrt(p)`` gives an
    increasing left side against a decreasing right side, so the root is
    unique.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    window = n ** (spec.gamma / (2 + spec.gamma))
    u = spec.u_at(n)
    if u > window * (1 + 1e-12):
        raise WindowError(f"u = {u} exceeds the validity window n^(gamma/(2+gamma)) = {window}")
    if spec.c == 0:
        return 0.0
    scale = spec.c / math.sqrt(n)
    g = spec.gamma

    def h(logp):
        return math.exp(logp / 2) - scale * (math.exp(-g * logp / 4) + math.sqrt(u))

    lo, hi = -700.0, 0.0
    while h(hi) <= 0:
        hi += 10.0
    while h(lo) > 0:
        lo -= 100.0
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if h(mid) > 0:
            hi = mid
        else:
            lo = mid
    # pick the endpoint with the smaller fixed-point residual
    cands = [math.exp(lo), math.exp(hi)]
    return min(cands, key=lambda p: abs(p - rate_rhs(spec, n, p)))


def closed_form_rate_u0(c: float, gamma: float, n: int) -> float:
    """Root of the fixed point when u = 0: ``(c/sqrt(n))^(4/(2+gamma))``."""
    return (c / math.sqrt(n)) ** (4.0 / (2.0 + gamma))


def rate_curve(spec: RateSpec, n_grid) -> list[dict]:
    """Fixed-point roots over ``n_grid`` with the asymptotic ``K_gamma n^(-2/(2+gamma))``.

    ``K_gamma`` is calibrated so the asymptote meets the root at the largest n.
    """
    n_grid = sorted(int(n) for n in n_grid)
    expo = -2.0 / (2.0 + spec.gamma)
    roots = [zero_error_rate(spec, n) for n in n_grid]
    k_gamma = roots[-1] / n_grid[-1] ** expo
    return [
        {"n": n, "rate": p, "asymptotic": k_gamma * n**expo, "K_gamma": k_gamma}
        for n, p in zip(n_grid, roots)
    ]


def loglog_slope(xs, ys) -> float:
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    return float(np.polyfit(lx, ly, 1)[0])


@dataclass(frozen=True)
class SmoothRate:
    rate: float
    exponent: float
    gamma: float
    within_hypothesis: bool


def smooth_boundary_rate(alpha: float, l: int, n: int, K: float = 1.0) -> SmoothRate:
    """``K n^(-alpha/(l-1+alpha))`` for sets with alpha-smooth boundary in [0,1]^l.

    The entropy exponent is ``gamma = 2(l-1)/alpha``; ``within_hypothesis`` is
    False when ``gamma >= 2``, where the entropy integral diverges at 0 and
    only the formula is returned.
    """
    if alpha <= 0 or l < 2:
        raise ValueError("need alpha > 0 and l >= 2")
    gamma = 2.0 * (l - 1) / alpha
    expo = -alpha / (l - 1 + alpha)
    return SmoothRate(rate=K * n**expo, exponent=expo, gamma=gamma, within_hypothesis=gamma < 2)
