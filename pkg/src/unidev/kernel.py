"""The convex kernel cost on finite product spaces and exact checks of its exponential integrability.

Points of ``Omega^n`` are flat indices into ``FiniteSpace.product(n)``
(row-major, last coordinate fastest).  Events are sets of flat indices or
boolean masks; in reports they are identified by the bitmask integer
``sum(2**k for k in A)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .core import FiniteSpace, replicate_rng
from .errors import CapacityTooLargeError, OptimizationError

ENUMERATION_BITS = 24
GAP_TOL = 1e-6
MAX_ITER = 10_000


# ---------------------------------------------------------------------------
# psi and the constant L
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PsiParams:
    alpha: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


def _alpha(params) -> float:
    return params.alpha if isinstance(params, PsiParams) else float(params)


def psi(params, v):
    """``v^2/(4 alpha)`` below the knee ``2 alpha``, ``v - alpha`` above it."""
    a = _alpha(params)
    v_arr = np.asarray(v, dtype=float)
    if np.any(v_arr < 0):
        raise ValueError("psi is defined on [0, inf)")
    out = np.where(v_arr <= 2 * a, v_arr**2 / (4 * a), v_arr - a)
    return float(out) if out.ndim == 0 else out


def psi_prime(alpha: float, v):
    return np.minimum(np.asarray(v, dtype=float) / (2 * alpha), 1.0)


def L_inequality_lhs(L: float) -> float:
    """``2L (e^(1/L) - 1) / (1 + 2L)``; strictly decreasing in L."""
    x = 1.0 / L
    if x > 700:
        return math.inf
    return 2 * L * math.expm1(x) / (1 + 2 * L)


def solve_L(alpha: float, tol: float = 1e-13) -> float:
    """Smallest L satisfying ``2L(e^(1/L)-1)/(1+2L) <= alpha`` (the equality root)."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    lo, hi = 1e-3, 1.0
    while L_inequality_lhs(hi) > alpha:
        hi *= 2
    while L_inequality_lhs(lo) <= alpha:
        lo /= 2
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if L_inequality_lhs(mid) > alpha:
            lo = mid
        else:
            hi = mid
    return hi


# ---------------------------------------------------------------------------
# problems and measures
# ---------------------------------------------------------------------------

@dataclass
class KernelProblem:
    space: FiniteSpace
    n: int
    A: object
    x: object
    alpha: float = 1.0
    points: np.ndarray = field(init=False, repr=False)
    masses: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.n * math.log2(max(self.space.m, 2)) > ENUMERATION_BITS:
            raise CapacityTooLargeError(f"m^n = {self.space.m}^{self.n} is beyond the enumeration guard")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        self.points, self.masses = self.space.product(self.n)
        N = len(self.points)
        A = np.asarray(self.A)
        if A.dtype == bool:
            if A.shape != (N,):
                raise ValueError("event mask has the wrong length")
            idx = np.nonzero(A)[0]
        else:
            idx = np.unique(A.astype(int).ravel())
        if len(idx) == 0 or idx.min() < 0 or idx.max() >= N:
            raise ValueError("event must be a nonempty set of points of Omega^n")
        self.A = idx
        self.x = self.flat_index(self.x)

    def flat_index(self, x) -> int:
        if np.ndim(x) == 0:
            k = int(x)
            if not 0 <= k < len(self.points):
                raise ValueError("point index out of range")
            return k
        x = np.asarray(x, dtype=int)
        if x.shape != (self.n,) or x.min() < 0 or x.max() >= self.space.m:
            raise ValueError("point must have n atom indices")
        return int(np.ravel_multi_index(tuple(x), (self.space.m,) * self.n))

    @property
    def prob_A(self) -> float:
        return float(self.masses[self.A].sum())

    @property
    def x_point(self) -> np.ndarray:
        return self.points[self.x]

    def transport_matrix(self) -> np.ndarray:
        """Rows y in A; column ``(i, w)`` holds ``1/p_w`` when ``y_i = w != x_i``."""
        m, n = self.space.m, self.n
        Y = self.points[self.A]
        B = np.zeros((len(self.A), n * m))
        inv_p = 1.0 / self.space.p
        for i in range(n):
            moved = Y[:, i] != self.x_point[i]
            rows = np.nonzero(moved)[0]
            B[rows, i * m + Y[rows, i]] = inv_p[Y[rows, i]]
        return B


@dataclass
class KernelMeasure:
    """Weights over all points of ``Omega^n``, supported on the event."""

    weights: np.ndarray

    @classmethod
    def on_event(cls, prob: KernelProblem, event_weights) -> "KernelMeasure":
        w = np.zeros(len(prob.points))
        w[prob.A] = np.asarray(event_weights, dtype=float)
        return cls(w)

    def check(self, prob: KernelProblem, tol: float = 1e-12):
        w = self.weights
        if np.any(w < -tol) or abs(w.sum() - 1.0) > tol:
            raise ValueError("weights must be a probability vector")
        if abs(w[prob.A].sum() - 1.0) > tol:
            raise ValueError("measure must give full mass to the event")


def radon_nikodym(prob: KernelProblem, nu: KernelMeasure, i: int) -> np.ndarray:
    """Density ``d_i`` (w.r.t. P) of the i-th marginal of nu restricted to ``{y : y_i != x_i}``."""
    if not 0 <= i < prob.n:
        raise ValueError("coordinate out of range")
    m = prob.space.m
    yi = prob.points[:, i]
    keep = yi != prob.x_point[i]
    mass = np.bincount(yi[keep], weights=nu.weights[keep], minlength=m)
    return mass / prob.space.p


def cost_measure(prob: KernelProblem, nu: KernelMeasure) -> float:
    """``sum_i integral psi_alpha(d_i) dP``."""
    p = prob.space.p
    return float(sum(np.dot(p, psi(prob.alpha, radon_nikodym(prob, nu, i))) for i in range(prob.n)))


# ---------------------------------------------------------------------------
# minimization over measures on A
# ---------------------------------------------------------------------------

class _Objective:
    def __init__(self, prob: KernelProblem):
        B = prob.transport_matrix()
        w = np.tile(prob.space.p, prob.n)
        keep = np.any(B != 0, axis=0)
        self.B = B[:, keep]
        self.w = w[keep]
        self.alpha = prob.alpha

    def value(self, nu) -> float:
        d = nu @ self.B
        a = self.alpha
        return float(self.w @ np.where(d <= 2 * a, d * d / (4 * a), d - a))

    def values(self, nus) -> np.ndarray:
        d = nus @ self.B
        a = self.alpha
        return np.where(d <= 2 * a, d * d / (4 * a), d - a) @ self.w

    def line_search(self, d, b, gmax) -> float:
        a2 = 2 * self.alpha
        nz = b != 0
        d, b, w = d[nz], b[nz], self.w[nz]

        def slope(g):
            v = d[None, :] + np.atleast_1d(g)[:, None] * b[None, :]
            return np.minimum(v / a2, 1.0) @ (w * b)

        knots = (a2 - d) / b
        cand = np.concatenate([[0.0], np.sort(knots[(knots > 0) & (knots < gmax)]), [gmax]])
        s = slope(cand)
        if s[-1] <= 0:
            return gmax
        k = int(np.argmax(s >= 0))
        if k == 0:
            return 0.0
        lo, hi = cand[k - 1], cand[k]
        return float(lo - s[k - 1] * (hi - lo) / (s[k] - s[k - 1]))


@dataclass
class CostResult:
    value: float
    measure: KernelMeasure
    gap: float
    iterations: int

    def __iter__(self):
        yield self.value
        yield self.measure


def cost_set(prob: KernelProblem, tol: float = GAP_TOL, max_iter: int = MAX_ITER) -> CostResult:
    """``m_alpha(A, x)``: the minimal kernel cost over probability measures carried by A.

    Pairwise conditional gradient on the simplex over A with exact line
    search; stops when the Frank-Wolfe duality gap is at most ``tol``, which
    certifies ``value - tol <= optimum <= value``.
    """
    where = np.nonzero(prob.A == prob.x)[0]
    if len(where):
        nu = np.zeros(len(prob.A))
        nu[where[0]] = 1.0
        return CostResult(0.0, KernelMeasure.on_event(prob, nu), 0.0, 0)

    obj = _Objective(prob)
    B, w, a = obj.B, obj.w, obj.alpha
    k = len(prob.A)
    start = int(np.argmin(obj.values(np.eye(k))))
    nu = np.zeros(k)
    nu[start] = 1.0
    d = B[start].copy()
    gap = math.inf
    for it in range(1, max_iter + 1):
        g = B @ (w * np.minimum(d / (2 * a), 1.0))
        s = int(np.argmin(g))
        gap = float(g @ nu - g[s])
        if gap <= tol:
            break
        active = np.nonzero(nu > 0)[0]
        v = int(active[np.argmax(g[active])])
        direction = B[s] - B[v]
        step = obj.line_search(d, direction, nu[v])
        if step <= 0:
            break
        nu[s] += step
        nu[v] -= step
        if nu[v] < 1e-15:
            nu[v] = 0.0
        d = nu @ B
    else:
        raise OptimizationError(
            f"no duality gap <= {tol} after {max_iter} iterations (gap {gap})",
            best_value=obj.value(nu),
            best_measure=KernelMeasure.on_event(prob, nu),
        )
    nu = np.clip(nu, 0.0, None)
    nu /= nu.sum()
    return CostResult(obj.value(nu), KernelMeasure.on_event(prob, nu), gap, it)


def _simplex_grid(k: int, mesh: int) -> np.ndarray:
    # stars and bars: all compositions of mesh into k nonnegative parts
    rows = []
    for bars in combinations(range(mesh + k - 1), k - 1):
        edges = (-1,) + bars + (mesh + k - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(k)])
    return np.array(rows, dtype=float) / mesh


def grid_cost_set(prob: KernelProblem, mesh: int = 64, rounds: int = 12) -> float:
    """Brute-force oracle: barycentric grid search followed by shrinking local grids."""
    if prob.x in set(prob.A.tolist()):
        return 0.0
    obj = _Objective(prob)
    k = len(prob.A)
    if k > 4:
        raise CapacityTooLargeError("grid oracle is limited to events with at most 4 points")
    grid = _simplex_grid(k, mesh)
    vals = obj.values(grid)
    best = grid[np.argmin(vals)]
    best_val = float(vals.min())
    if k == 1:
        return best_val
    h = 1.0 / mesh
    offsets = np.array(np.meshgrid(*[np.arange(-4, 5)] * (k - 1), indexing="ij")).reshape(k - 1, -1).T
    for _ in range(rounds):
        cand = best[None, : k - 1] + h * offsets
        last = 1.0 - cand.sum(axis=1, keepdims=True)
        cand = np.hstack([cand, last])
        cand = cand[np.all(cand >= 0, axis=1)]
        vals = obj.values(cand)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val, best = float(vals[j]), cand[j]
        h /= 4
    return best_val


# ---------------------------------------------------------------------------
# exponential integrability on finite product spaces
# ---------------------------------------------------------------------------

@dataclass
class Theorem1Row:
    event_id: int
    prob_A: float
    integral: float
    product: float
    passed: bool
    max_gap: float = 0.0


@dataclass
class Theorem1Report:
    space: FiniteSpace
    n: int
    alpha: float
    L: float
    rows: list
    tol: float = 1e-6

    @property
    def max_product(self) -> float:
        return max(r.product for r in self.rows)

    @property
    def argmax_event(self) -> int:
        return max(self.rows, key=lambda r: r.product).event_id

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def max_gap(self) -> float:
        return max(r.max_gap for r in self.rows)


def event_id(indices) -> int:
    return sum(1 << int(k) for k in indices)


def event_from_id(eid: int) -> list[int]:
    return [k for k in range(eid.bit_length()) if eid >> k & 1]


def structured_events(space: FiniteSpace, n: int) -> list[list[int]]:
    """Singletons and coordinate half-spaces ``{y_i <= k}``, ``{y_i >= k}``."""
    pts, _ = space.product(n)
    events = [[k] for k in range(len(pts))]
    for i in range(n):
        for k in range(space.m - 1):
            events.append(np.nonzero(pts[:, i] <= k)[0].tolist())
            events.append(np.nonzero(pts[:, i] >= k + 1)[0].tolist())
    return events


def candidate_events(space: FiniteSpace, n: int, max_exhaustive_bits: int = 16, samples: int = 512, seed: int = 0):
    """All nonempty events when there are at most ``2^max_exhaustive_bits`` of them, else a structured sample."""
    N = space.m**n
    if N <= max_exhaustive_bits:
        return [event_from_id(e) for e in range(1, 2**N)]
    rng = replicate_rng(seed, 0, phase=11)
    seen = {}
    for ev in structured_events(space, n):
        seen.setdefault(event_id(ev), ev)
    for _ in range(samples):
        mask = rng.random(N) < rng.random()
        if mask.any():
            ev = np.nonzero(mask)[0].tolist()
            seen.setdefault(event_id(ev), ev)
    return [seen[k] for k in sorted(seen)]


def kernel_integral(space: FiniteSpace, n: int, A, alpha: float, L: float, tol: float = GAP_TOL, gaps=None) -> tuple[float, float]:
    """``(integral exp(m_alpha(A, x)/L) dP^n(x), P^n(A))`` by exact enumeration over x.

    Duality gaps of the inner minimizations are appended to ``gaps`` when given.
    """
    first = KernelProblem(space, n, A, 0, alpha)
    members = set(first.A.tolist())
    total = 0.0
    for xk, mass in enumerate(first.masses):
        if xk in members:
            total += mass
            continue
        prob = KernelProblem(space, n, first.A, xk, alpha)
        res = cost_set(prob, tol)
        if gaps is not None:
            gaps.append(res.gap)
        total += mass * math.exp(res.value / L)
    return total, first.prob_A


def verify_theorem1(space: FiniteSpace, n: int, alpha: float, events=None, tol: float = 1e-6, gap_tol: float = GAP_TOL, **kw) -> Theorem1Report:
    """Check ``integral exp(m_alpha(A,x)/L_alpha) dP^n <= 1/P^n(A)`` for each event.

    ``events`` defaults to :func:`candidate_events`.  A row passes when the
    product of the integral and ``P^n(A)`` is at most ``1 + tol``.  Costs are
    upper estimates within ``gap_tol`` of the infimum, so a pass is
    conservative.
    """
    KernelProblem(space, n, [0], 0, alpha)  # guard checks
    L = solve_L(alpha)
    events = candidate_events(space, n, **kw) if events is None else events
    rows = []
    for ev in events:
        gaps = [0.0]
        integral, pa = kernel_integral(space, n, ev, alpha, L, gap_tol, gaps)
        prod = integral * pa
        gap = max(gaps)
        rows.append(Theorem1Row(event_id(ev), pa, integral, prod, prod <= 1 + tol and gap <= gap_tol, gap))
    return Theorem1Report(space, n, alpha, L, rows, tol)


# ---------------------------------------------------------------------------
# the conjugate inequality behind the tail bound
# ---------------------------------------------------------------------------

@dataclass
class ConjugateReport:
    checked: int
    failures: int
    worst_margin: float  # min over pairs of rhs - lhs

    @property
    def passed(self) -> bool:
        return self.failures == 0


def conjugate_inequality_check(samples: int = 100_000, seed: int = 0, v_max: float = 50.0, tol: float = 1e-12) -> ConjugateReport:
    """``u v <= u^2 1(u > 0) + psi_1(v)`` for ``v >= 0`` and ``-1 <= u <= 1``.

    Random pairs plus a boundary grid through ``u in {-1, 0, 1}``, the knee
    ``v = 2`` and the equality curve ``v = 2u``.
    """
    rng = replicate_rng(seed, 0, phase=11)
    u = rng.uniform(-1.0, 1.0, samples)
    v = rng.exponential(2.0, samples)
    ub = np.concatenate([np.linspace(-1, 1, 201), [-1e-15, 1e-15, 1 - 1e-15]])
    vb = np.concatenate([np.linspace(0, 4, 201), [2 - 1e-12, 2 + 1e-12, v_max], 2 * ub[ub > 0]])
    U, V = np.meshgrid(ub, vb)
    u = np.concatenate([u, U.ravel(), ub[ub > 0]])
    v = np.concatenate([v, V.ravel(), 2 * ub[ub > 0]])
    margin = u**2 * (u > 0) + psi(1.0, v) - u * v
    fails = int(np.sum(margin < -tol * np.maximum(1.0, np.abs(u * v))))
    return ConjugateReport(checked=len(u), failures=fails, worst_margin=float(margin.min()))
