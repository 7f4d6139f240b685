"""Closed-form deviation bounds with explicit constants.  Natural logarithms throughout."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .capacity import EntropyEnvelope
from .entropy import EntropyIntegralSpec, phi
from .errors import HypothesisError
from .kernel import solve_L

L1 = solve_L(1.0)
L1_ROUNDED = 1.12


@dataclass
class BoundConstants:
    """``K``: absolute constant of the entropy bounds; ``L``: kernel constant; ``M``: median of Z."""

    K: float = 1.0
    L: float = L1
    M: float | None = None
    K_source: str = "default"

    def __post_init__(self):
        for name in ("K", "L"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.M is not None and self.M < 0:
            raise ValueError("median must be nonnegative")


@dataclass
class BoundCurve:
    abscissa: str
    columns: tuple
    rows: list = field(default_factory=list)

    def add(self, x, value, **terms):
        if not (math.isfinite(value) and value > 0):
            raise ValueError(f"bound value {value} is not finite and positive at {self.abscissa}={x}")
        self.rows.append((x, value) + tuple(terms[c] for c in self.columns))

    def header(self) -> list[str]:
        return [self.abscissa, "bound", *self.columns]


def _check_delta(delta):
    if not 0 < delta < 1:
        raise ValueError("confidence parameter delta must lie in (0, 1)")


def vc_bound(S2n: float, n: int, delta: float) -> float:
    """``2 ((1/n) log S(2n) + (1/n) log(4/delta))^(1/2)`` on ``sum(Pf - f(x_i)) / (n (Pf)^(1/2))``."""
    _check_delta(delta)
    if S2n < 1:
        raise ValueError("shattering coefficient must be at least 1")
    return 2.0 * math.sqrt((math.log(S2n) + math.log(4.0 / delta)) / n)


def vc_bound_dim(d: int, n: int, delta: float) -> float:
    """The VC bound with ``S(2n) <= (2en/d)^d``."""
    if n < d:
        raise ValueError("need n >= d")
    _check_delta(delta)
    # log of sauer_bound(d, 2n), taken in log form so large d cannot overflow
    log_s = d * math.log(2 * math.e * n / d)
    return 2.0 * math.sqrt((log_s + math.log(4.0 / delta)) / n)


def thm2_threshold(M: float, phi_f: float, n: int, u: float, Pf: float, L: float = L1) -> float:
    """``M phi(f) + 2 sqrt(L n u Pf)``: exceeded by some member with probability at most ``2 e^-u``."""
    if not u > 0 or not 0 < Pf <= 1:
        raise ValueError("need u > 0 and Pf in (0, 1]")
    return M * phi_f + 2.0 * math.sqrt(L * n * u * Pf)


def thm2_inf_delta(nPf: float, Lu: float) -> float:
    """``inf_{delta > 1} (nPf/delta + delta Lu)``.

    The unconstrained minimizer is ``sqrt(nPf / Lu)``; when it falls below 1
    the infimum is approached at ``delta -> 1``.
    """
    if nPf < 0 or Lu < 0:
        raise ValueError("arguments must be nonnegative")
    if Lu == 0 or nPf >= Lu:
        return 2.0 * math.sqrt(nPf * Lu)
    return nPf + Lu


def _require_entropy_hypothesis(envelope: EntropyEnvelope):
    if float(envelope.D(1.0)) < 2 - 1e-12:
        raise HypothesisError("entropy bounds need D(1) >= 2")


def corollary1_bound(n: int, Pf: float, envelope: EntropyEnvelope, u: float, K: float) -> float:
    """``K (phi(Pf) + sqrt(n u Pf))`` with phi the uniform-entropy integral."""
    _require_entropy_hypothesis(envelope)
    if Pf <= 0:
        return 0.0
    return K * (phi(EntropyIntegralSpec(envelope, n), Pf) + math.sqrt(n * u * Pf))


def corollary2_bound(n: int, Pf: float, envelope: EntropyEnvelope, u: float, K: float) -> float:
    """Same form with a bracketing-number envelope."""
    return corollary1_bound(n, Pf, envelope, u, K)


def subgraph_bound(d: int, n: int, delta: float, K: float, log_term: str = "n", Pf: float | None = None) -> float:
    """``K ((d/n) log n)^(1/2) + K ((1/n) log(1/delta))^(1/2)`` for VC-subgraph classes.

    ``log_term="inv_pf"`` replaces ``log n`` by ``log(1/Pf)``.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    _check_delta(delta)
    if log_term == "n":
        lg = math.log(n)
    elif log_term == "inv_pf":
        if Pf is None or not 0 < Pf < 1:
            raise ValueError("log(1/Pf) variant needs Pf in (0, 1)")
        lg = math.log(1.0 / Pf)
    else:
        raise ValueError("log_term must be 'n' or 'inv_pf'")
    return K * (math.sqrt(d * lg / n) + math.sqrt(math.log(1.0 / delta) / n))


def li_bound(d: int, n: int, nu: float, delta: float, K: float) -> float:
    """``K ((1/(n nu)) (d log(1/nu) + log(1/delta)))^(1/2)`` on ``sum(Pf - f) / (sum(Pf + f) + n nu)``."""
    if not 0 < nu < 1:
        raise ValueError("nu must lie in (0, 1)")
    _check_delta(delta)
    return K * math.sqrt((d * math.log(1.0 / nu) + math.log(1.0 / delta)) / (n * nu))


def li_implied_deviation(Pf: float, B: float, nu: float) -> float:
    """Largest ``Pf - f_bar`` allowed by ``(Pf - f_bar) <= B (2Pf - (Pf - f_bar) + nu)``."""
    return B * (2 * Pf + nu) / (1 + B)


def compare_subgraph_li(d: int, n: int, nu: float, delta: float, K: float, pf_grid) -> list[dict]:
    """Per-Pf deviation bounds (on ``Pf - f_bar``) implied by the subgraph and Li forms."""
    b12 = subgraph_bound(d, n, delta, K)
    b13 = li_bound(d, n, nu, delta, K)
    rows = []
    for pf in pf_grid:
        eq12 = b12 * math.sqrt(pf)
        eq13 = li_implied_deviation(pf, b13, nu)
        rows.append({"Pf": float(pf), "eq12_value": eq12, "eq13_value": eq13, "ratio": eq13 / eq12,
                     "excess_factor": math.sqrt(pf / nu)})
    return rows


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------

def vc_curve(d: int, delta: float, n_grid) -> BoundCurve:
    curve = BoundCurve("n", ("log_sauer_term", "confidence_term"))
    for n in n_grid:
        v = vc_bound_dim(d, n, delta)
        curve.add(n, v, log_sauer_term=d * math.log(2 * math.e * n / d) / n,
                  confidence_term=math.log(4 / delta) / n)
    return curve


def subgraph_curve(d: int, delta: float, K: float, n_grid) -> BoundCurve:
    curve = BoundCurve("n", ("capacity_term", "confidence_term"))
    for n in n_grid:
        curve.add(n, subgraph_bound(d, n, delta, K), capacity_term=K * math.sqrt(d * math.log(n) / n),
                  confidence_term=K * math.sqrt(math.log(1 / delta) / n))
    return curve


def corollary_curve(n: int, envelope: EntropyEnvelope, u: float, K: float, pf_grid) -> BoundCurve:
    curve = BoundCurve("Pf", ("entropy_term", "variance_term"))
    spec = EntropyIntegralSpec(envelope, n)
    for pf in pf_grid:
        ent = K * phi(spec, pf)
        var = K * math.sqrt(n * u * pf)
        curve.add(pf, corollary1_bound(n, pf, envelope, u, K), entropy_term=ent, variance_term=var)
    return curve


def thm2_curve(M: float, n: int, Pf: float, L: float, u_grid, phi_f: float | None = None) -> BoundCurve:
    phi_f = math.sqrt(n * Pf) if phi_f is None else phi_f
    curve = BoundCurve("u", ("median_term", "kernel_term", "budget"))
    for u in u_grid:
        curve.add(u, thm2_threshold(M, phi_f, n, u, Pf, L), median_term=M * phi_f,
                  kernel_term=2 * math.sqrt(L * n * u * Pf), budget=min(1.0, 2 * math.exp(-u)))
    return curve


def delta_grid_minimum(nPf: float, Lu: float) -> float:
    """Independent check of :func:`thm2_inf_delta`: log-spaced grid plus bounded golden refinement."""
    from scipy.optimize import minimize_scalar

    def f(delta):
        return nPf / delta + delta * Lu

    grid = 1.0 + np.logspace(-12, 8, 4001)
    vals = nPf / grid + grid * Lu
    k = int(np.argmin(vals))
    lo = grid[max(k - 1, 0)] if k > 0 else 1.0
    hi = grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-14 * hi})
    best = min(float(vals.min()), float(res.fun), f(1.0))
    return best
