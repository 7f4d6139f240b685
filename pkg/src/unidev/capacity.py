"""Shattering coefficients, VC dimension, packing numbers, entropy envelopes and brackets."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np

from .errors import CapacityTooLargeError

ENUMERATION_GUARD = 10**7
BRUTE_PACKING_GUARD = 20


# ---------------------------------------------------------------------------
# combinatorial capacity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceCount:
    n: int
    count: int

    def __post_init__(self):
        if not 1 <= self.count <= 2**self.n:
            raise ValueError(f"S({self.n}) = {self.count} outside [1, 2^n]")


class AtLeast(int):
    """An integer known only as a lower bound (enumeration was capped)."""

    def __repr__(self):
        return f"AtLeast({int(self)})"

    def __str__(self):
        return f">={int(self)}"


def _set_matrix(sets) -> np.ndarray:
    table = getattr(sets, "table", sets)
    table = np.asarray(table)
    if table.ndim != 2:
        raise ValueError("a class of sets is a 2-d indicator matrix (rows = sets, columns = atoms)")
    if not np.isin(table, (0, 1)).all():
        raise ValueError("set indicators must be 0/1")
    return table.astype(np.uint8)


def half_lines(positions) -> np.ndarray:
    """Indicator matrix of ``{x <= t}`` on atoms at ``positions``, including the empty set."""
    pos = np.asarray(positions, dtype=float)
    cuts = np.concatenate([[-np.inf], np.sort(pos)])
    return (pos[None, :] <= cuts[:, None]).astype(np.uint8)


def interval_sets(positions) -> np.ndarray:
    """Indicator matrix of closed intervals ``{a <= x <= b}`` with endpoints at atoms, plus the empty set."""
    pos = np.asarray(positions, dtype=float)
    srt = np.sort(pos)
    rows = [np.zeros(len(pos), dtype=np.uint8)]
    for i in range(len(srt)):
        for j in range(i, len(srt)):
            rows.append(((pos >= srt[i]) & (pos <= srt[j])).astype(np.uint8))
    return np.unique(np.array(rows), axis=0)


def shatter_coefficient(sets, n: int, guard: int = ENUMERATION_GUARD) -> TraceCount:
    """Exact ``S(n)``: the most distinct traces the sets leave on an n-point sample.

    A sample with repeated atoms never produces more traces than the distinct
    atoms it contains, and traces only grow with the atom set, so the maximum
    is attained on subsets of ``min(n, m)`` distinct atoms.
    """
    table = _set_matrix(sets)
    m = table.shape[1]
    if n < 1:
        raise ValueError("n must be at least 1")
    if m**n > guard:
        raise CapacityTooLargeError(f"m^n = {m}^{n} exceeds the enumeration guard {guard}")
    k = min(n, m)
    best = 1
    for cols in combinations(range(m), k):
        traces = np.unique(table[:, cols], axis=0)
        best = max(best, len(traces))
        if best == 2**k:
            break
    return TraceCount(n, best)


def vc_dimension(sets, convention: str = "standard", j_max: int | None = None, guard: int = ENUMERATION_GUARD):
    """VC dimension of a class of sets.

    ``convention="first-unshattered"`` returns ``inf{j >= 1 : S(j) < 2^j}``, the first size
    that is *not* shattered.  ``convention="standard"`` returns the largest
    shattered size, which is one less.  If ``j_max`` is reached first the
    result is an :class:`AtLeast` marker.
    """
    if convention not in ("standard", "first-unshattered"):
        raise ValueError("convention must be 'standard' or 'first-unshattered'")
    table = _set_matrix(sets)
    cap = table.shape[1] + 1 if j_max is None else j_max
    j = 1
    while True:
        if j > cap:
            return AtLeast(cap if convention == "first-unshattered" else cap - 1)
        if shatter_coefficient(table, j, guard).count < 2**j:
            return j if convention == "first-unshattered" else j - 1
        j += 1


def sauer_bound(d: int, n: int) -> float:
    """``(e n / d)^d``."""
    if d < 1 or n < d:
        raise ValueError(f"Sauer bound needs n >= d >= 1 (got d={d}, n={n})")
    return (math.e * n / d) ** d


# ---------------------------------------------------------------------------
# packing
# ---------------------------------------------------------------------------

@dataclass
class PackingQuery:
    points: np.ndarray
    u: float

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if not self.u > 0:
            raise ValueError("separation radius must be positive")


def pairwise_l2(points) -> np.ndarray:
    """Pairwise empirical L2 distances ``sqrt(mean((a - b)^2))``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt(np.mean(diff**2, axis=2))


def _query(points, u):
    if isinstance(points, PackingQuery):
        return points.points, points.u
    q = PackingQuery(points, u)
    return q.points, q.u


def greedy_packing(points, u=None) -> tuple[int, list[int]]:
    """Greedy maximal u-separated subset, scanned in index order.

    The result is non-extendable, hence also a u-cover of all points.
    """
    pts, u = _query(points, u)
    selected: list[int] = []
    for i, p in enumerate(pts):
        if selected:
            d = np.sqrt(np.mean((pts[selected] - p) ** 2, axis=1))
            if np.min(d) <= u:
                continue
        selected.append(i)
    return len(selected), selected


def brute_packing(points, u=None, guard: int = BRUTE_PACKING_GUARD) -> int:
    """Exact maximum cardinality of a u-separated subset (exhaustive search)."""
    pts, u = _query(points, u)
    k = len(pts)
    if k > guard:
        raise CapacityTooLargeError(f"{k} points exceed the exhaustive packing guard {guard}")
    conflict = pairwise_l2(pts) <= u
    nbr = [sum(1 << j for j in range(k) if conflict[i, j]) for i in range(k)]

    @lru_cache(maxsize=None)
    def best(mask: int) -> int:
        if mask == 0:
            return 0
        v = (mask & -mask).bit_length() - 1
        skip = best(mask & ~(1 << v))
        take = 1 + best(mask & ~nbr[v])
        return max(skip, take)

    return best((1 << k) - 1)


# ---------------------------------------------------------------------------
# entropy envelopes
# ---------------------------------------------------------------------------

ENVELOPE_KINDS = ("empirical-max", "analytic-power", "analytic-haussler", "analytic-constant", "table")


@dataclass(frozen=True)
class EntropyEnvelope:
    """A nonincreasing bound ``u -> D(u) >= 1`` on packing (or bracketing) numbers.

    Table kinds are piecewise constant: on ``[u_k, u_{k+1})`` the value is
    ``D_k`` (an upper bound when the tabulated counts are upper bounds),
    ``D_0`` below the first knot and 1 above ``u = 1``.  ``analytic-constant``
    is ``c`` on ``(0, 1]`` and 1 beyond.
    """

    kind: str
    c: float = 1.0
    gamma: float = 0.0
    d: int = 0
    table: tuple = ()
    measures: str = ""
    _knots: tuple = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.kind not in ENVELOPE_KINDS:
            raise ValueError(f"unknown envelope kind {self.kind!r}")
        if self.kind in ("table", "empirical-max"):
            if not self.table:
                raise ValueError("table envelope needs (u, D) rows")
            rows = sorted((float(u), float(v)) for u, v in self.table)
            us = [u for u, _ in rows]
            if us[0] <= 0 or len(set(us)) != len(us):
                raise ValueError("table abscissae must be positive and distinct")
            vals = [max(1.0, v) for _, v in rows]
            for k in range(len(vals) - 2, -1, -1):
                vals[k] = max(vals[k], vals[k + 1])
            object.__setattr__(self, "table", tuple(zip(us, vals)))
            object.__setattr__(self, "_knots", (np.asarray(us), np.asarray(vals)))
        elif self.kind == "analytic-haussler":
            if int(self.d) < 1:
                raise ValueError("Haussler envelope needs d >= 1")
            object.__setattr__(self, "d", int(self.d))
        elif self.kind == "analytic-power":
            if self.c < 0 or self.gamma <= 0:
                raise ValueError("power envelope needs c >= 0 and gamma > 0")
        elif self.kind == "analytic-constant" and self.c < 1:
            raise ValueError("constant envelope needs c >= 1")

    @property
    def piecewise_constant(self) -> bool:
        return self.kind in ("table", "empirical-max", "analytic-constant")

    def D(self, u):
        u = np.asarray(u, dtype=float)
        return np.exp(self.log_D(u))

    def log_D(self, u):
        """``log D(u)``, floored at 0."""
        u = np.asarray(u, dtype=float)
        if np.any(u <= 0):
            raise ValueError("envelope is defined for u > 0")
        if self.kind == "analytic-power":
            if self.c == 0:
                return np.zeros(u.shape)
            return np.maximum(0.0, math.log(self.c) - self.gamma * np.log(u))
        if self.kind == "analytic-haussler":
            a, b = self.log_coefficients()
            return np.maximum(0.0, a - b * np.log(u))
        if self.kind == "analytic-constant":
            return np.where(u <= 1.0, math.log(self.c), 0.0)
        us, vals = self._knots
        j = np.clip(np.searchsorted(us, u, side="right") - 1, 0, len(us) - 1)
        return np.where(u > 1.0, 0.0, np.log(vals[j]))

    def log_coefficients(self) -> tuple[float, float]:
        """``(a, b)`` with ``log D(u) = max(0, a - b log u)`` for the analytic power-law kinds."""
        if self.kind == "analytic-haussler":
            d = self.d
            return math.log(math.e * (d + 1)) + d * math.log(2 * math.e), 2.0 * d
        if self.kind == "analytic-power":
            return math.log(self.c), self.gamma
        raise ValueError(f"{self.kind} envelope is not of power-law form")

    def knee(self) -> float:
        """Smallest ``u`` beyond which ``D(u) = 1``."""
        if self.kind in ("analytic-haussler", "analytic-power"):
            if self.kind == "analytic-power" and self.c <= 1:
                return 0.0 if self.c < 1 else 1.0
            a, b = self.log_coefficients()
            return math.exp(a / b)
        if self.kind == "analytic-constant":
            return 1.0 if self.c > 1 else 0.0
        us, vals = self._knots
        above = np.nonzero(vals > 1.0)[0]
        if len(above) == 0:
            return 0.0
        k = above[-1]
        return float(us[k + 1]) if k + 1 < len(us) else 1.0

    def pieces(self, upper: float):
        """``(lo, hi, log D)`` constant pieces covering ``(0, upper]`` for piecewise-constant kinds."""
        if not self.piecewise_constant:
            raise ValueError("only piecewise-constant envelopes decompose into pieces")
        if self.kind == "analytic-constant":
            cuts = [0.0, 1.0]
            logs = [math.log(self.c)]
        else:
            us, vals = self._knots
            cuts = [0.0] + [float(u) for u in us[1:] if u < 1.0] + [1.0]
            logs = [float(np.log(vals[0]))] + [float(np.log(v)) for u, v in zip(us[1:], vals[1:]) if u < 1.0]
        out = []
        for lo, hi, lg in zip(cuts, cuts[1:], logs):
            if lo >= upper:
                break
            out.append((lo, min(hi, upper), lg))
        if upper > 1.0:
            out.append((1.0, upper, 0.0))
        return out

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind in ("analytic-power", "analytic-constant"):
            out["c"] = self.c
        if self.kind == "analytic-power":
            out["gamma"] = self.gamma
        if self.kind == "analytic-haussler":
            out["d"] = self.d
        if self.kind in ("table", "empirical-max"):
            out["table"] = [[u, v] for u, v in self.table]
        if self.measures:
            out["measures"] = self.measures
        return out

    @classmethod
    def from_json(cls, data) -> "EntropyEnvelope":
        if isinstance(data, str):
            data = json.loads(data)
        table = tuple(tuple(row) for row in data.get("table", ()))
        return cls(
            kind=data["kind"],
            c=float(data.get("c", 1.0)),
            gamma=float(data.get("gamma", 0.0)),
            d=int(data.get("d", 0)),
            table=table,
            measures=data.get("measures", ""),
        )


def haussler_envelope(d: int) -> EntropyEnvelope:
    """``u -> max(1, e (d+1) (2e/u^2)^d)`` for a VC-subgraph class of dimension d."""
    return EntropyEnvelope(kind="analytic-haussler", d=d)


def power_envelope(c: float, gamma: float) -> EntropyEnvelope:
    return EntropyEnvelope(kind="analytic-power", c=c, gamma=gamma)


def constant_envelope(c: float) -> EntropyEnvelope:
    return EntropyEnvelope(kind="analytic-constant", c=c)


def empirical_envelope(cls, samples, u_grid, resolution=None, label="") -> EntropyEnvelope:
    """Lower estimate of the uniform envelope: the largest greedy packing over the given empirical measures.

    Each sample defines a discrete measure Q (uniform over its coordinates,
    repeats counted); the packing of the class members is measured in
    ``L2(Q)`` at every ``u`` of ``u_grid``.
    """
    from .core import DEFAULT_RESOLUTION

    members = cls.members(DEFAULT_RESOLUTION if resolution is None else resolution)
    u_grid = sorted(float(u) for u in u_grid)
    best = np.ones(len(u_grid))
    for pts in samples:
        vecs = np.unique(cls.values(members, pts), axis=0)
        for k, u in enumerate(u_grid):
            best[k] = max(best[k], greedy_packing(vecs, u)[0])
    measures = label or f"{len(samples)} empirical measures"
    return EntropyEnvelope(kind="empirical-max", table=tuple(zip(u_grid, best.tolist())), measures=measures)


def bootstrap_samples(base, count: int, seed: int):
    from .core import replicate_rng

    base = np.asarray(base)
    return [base[replicate_rng(seed, k, phase=7).integers(0, len(base), len(base))] for k in range(count)]


# ---------------------------------------------------------------------------
# brackets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Bracket:
    """The functions between ``g = 1(x <= lower)`` (or ``g = 0`` if lower is None) and ``h = 1(x <= upper)``."""

    lower: float | None
    upper: float
    width: float

    def contains_threshold(self, t: float) -> bool:
        return (self.lower is None or self.lower <= t) and t <= self.upper


def threshold_brackets(u: float, distribution) -> list[Bracket]:
    """A u-bracketing of the threshold class with ``ceil(1/u^2) + 1`` brackets.

    Cells are quantile intervals of mass ``1/K <= u^2``; the extra degenerate
    bracket ``[0, 1(x <= t_0)]`` covers thresholds below the support.
    """
    if not u > 0:
        raise ValueError("bracket width must be positive")
    u = min(u, 1.0)
    K = math.ceil(1.0 / u**2 - 1e-12)
    cuts = distribution.ppf(np.arange(K + 1) / K)
    cuts[-1] = 1.0
    F = distribution.cdf(cuts)
    out = [Bracket(None, float(cuts[0]), math.sqrt(max(0.0, float(F[0]))))]
    for k in range(K):
        out.append(Bracket(float(cuts[k]), float(cuts[k + 1]), math.sqrt(max(0.0, float(F[k + 1] - F[k])))))
    return out


def bracket_table_envelope(distribution, u_grid=None) -> EntropyEnvelope:
    """Table envelope from the sizes of :func:`threshold_brackets` on ``u_grid``."""
    if u_grid is None:
        u_grid = [2.0 ** (-k / 4) for k in range(0, 29)]
    rows = tuple((float(u), float(len(threshold_brackets(u, distribution)))) for u in u_grid)
    return EntropyEnvelope(kind="table", table=rows, measures="threshold brackets under P")
