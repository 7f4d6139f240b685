"""Probability spaces, samples, function classes and the normalized empirical process.

Points of a :class:`FiniteSpace` are represented by atom *indices*
(``0 .. m-1``), never by the atom identifiers themselves.  Points of a
:class:`ContinuousLine` are reals in ``[0, 1]``.

Infinite classes are discretized on dyadic parameter grids: a requested
resolution ``r`` is rounded down to ``2**-K`` with ``K = ceil(log2(1/r))``, so a
finer resolution always yields a superset of members.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .errors import EmptyClassError, InvalidMemberError, NormalizerError

DEFAULT_RESOLUTION = 1.0 / 1024


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------

def replicate_rng(seed: int, replicate: int, phase: int = 0) -> np.random.Generator:
    """Independent generator for one replicate.

    The stream depends only on ``(seed, phase, replicate)``, so results do not
    depend on execution order or on how replicates are split across workers.
    """
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(int(phase), int(replicate)))
    return np.random.Generator(np.random.PCG64(ss))


def dyadic_levels(resolution: float) -> int:
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    return max(0, math.ceil(math.log2(1.0 / resolution) - 1e-12))


# ---------------------------------------------------------------------------
# spaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteSpace:
    atoms: tuple
    probs: tuple

    def __init__(self, atoms: Sequence, probs: Sequence[float]):
        atoms = tuple(atoms)
        probs = tuple(float(p) for p in probs)
        if len(atoms) != len(probs) or not atoms:
            raise ValueError("atoms and probs must be nonempty and of equal length")
        if len(set(atoms)) != len(atoms):
            raise ValueError("atom identifiers must be distinct")
        if min(probs) <= 0:
            raise ValueError("all atom probabilities must be strictly positive")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ValueError("atom probabilities must sum to 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, m: int) -> "FiniteSpace":
        return cls(range(m), [1.0 / m] * m)

    @property
    def m(self) -> int:
        return len(self.atoms)

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.probs)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.choice(self.m, size=n, p=self.p)

    def product(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """All points of the n-fold product (row-major, last coordinate fastest) and their P^n masses."""
        grids = np.indices((self.m,) * n).reshape(n, -1).T
        masses = np.prod(self.p[grids], axis=1) if n else np.ones(1)
        return grids, masses


@dataclass(frozen=True)
class ContinuousLine:
    """The unit interval carrying a piecewise-constant density.

    ``breaks`` are ``0 = b_0 < ... < b_k = 1`` and ``densities[j]`` is the
    density on ``[b_j, b_{j+1})``.
    """

    breaks: tuple = (0.0, 1.0)
    densities: tuple = (1.0,)
    _cum: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        b = tuple(float(v) for v in self.breaks)
        d = tuple(float(v) for v in self.densities)
        if len(b) != len(d) + 1 or b[0] != 0.0 or b[-1] != 1.0:
            raise ValueError("breaks must run from 0 to 1 with one more entry than densities")
        if any(hi <= lo for lo, hi in zip(b, b[1:])):
            raise ValueError("breaks must be strictly increasing")
        if min(d) < 0:
            raise ValueError("density must be nonnegative")
        mass = math.fsum(w * (hi - lo) for w, lo, hi in zip(d, b, b[1:]))
        if abs(mass - 1.0) > 1e-9:
            raise ValueError(f"density integrates to {mass}, not 1")
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "densities", d)
        cum = [0.0]
        for w, lo, hi in zip(d, b, b[1:]):
            cum.append(cum[-1] + w * (hi - lo))
        cum[-1] = 1.0
        object.__setattr__(self, "_cum", tuple(cum))

    @classmethod
    def uniform(cls) -> "ContinuousLine":
        return cls()

    @property
    def is_uniform(self) -> bool:
        return self.breaks == (0.0, 1.0)

    def cdf(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        if self.is_uniform:
            return t
        b = np.asarray(self.breaks)
        j = np.clip(np.searchsorted(b, t, side="right") - 1, 0, len(self.densities) - 1)
        return np.asarray(self._cum)[j] + np.asarray(self.densities)[j] * (t - b[j])

    def ppf(self, q):
        q = np.clip(np.asarray(q, dtype=float), 0.0, 1.0)
        if self.is_uniform:
            return q
        cum = np.asarray(self._cum)
        b = np.asarray(self.breaks)
        dens = np.asarray(self.densities)
        # skip zero-density cells: search on the right so flat stretches map to their left end
        j = np.clip(np.searchsorted(cum, q, side="left") - 1, 0, len(dens) - 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            x = np.where(dens[j] > 0, b[j] + (q - cum[j]) / dens[j], b[j])
        return np.clip(x, 0.0, 1.0)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.ppf(rng.random(n))

    def cdf_integral(self, a, b):
        """Exact value of the integral of the CDF over ``[a, b]``; arguments may exceed [0, 1]."""
        return self._cdf_antiderivative(b) - self._cdf_antiderivative(a)

    def _cdf_antiderivative(self, s):
        s = np.asarray(s, dtype=float)
        inside = np.clip(s, 0.0, 1.0)
        br = np.asarray(self.breaks)
        cum = np.asarray(self._cum)
        dens = np.asarray(self.densities)
        # G(b_j) for each break
        g_breaks = np.concatenate(
            [[0.0], np.cumsum(cum[:-1] * np.diff(br) + 0.5 * dens * np.diff(br) ** 2)]
        )
        j = np.clip(np.searchsorted(br, inside, side="right") - 1, 0, len(dens) - 1)
        h = inside - br[j]
        g = g_breaks[j] + cum[j] * h + 0.5 * dens[j] * h**2
        return g + np.maximum(s - 1.0, 0.0)


@dataclass
class Sample:
    points: np.ndarray
    seed: int | None = None
    replicate: int | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points)
        if self.points.ndim != 1 or len(self.points) < 1:
            raise ValueError("a sample needs at least one point")

    @property
    def n(self) -> int:
        return len(self.points)


# ---------------------------------------------------------------------------
# function classes
# ---------------------------------------------------------------------------

class FunctionClass(ABC):
    """A family of [0, 1]-valued functions with exactly known means."""

    name = "class"

    @abstractmethod
    def members(self, resolution: float = DEFAULT_RESOLUTION) -> list: ...

    @abstractmethod
    def values(self, members: Sequence[Hashable], points) -> np.ndarray:
        """Matrix of shape ``(len(members), len(points))``."""

    @abstractmethod
    def true_means(self, members: Sequence[Hashable]) -> np.ndarray: ...

    @abstractmethod
    def validate(self, member) -> None: ...

    def eval(self, member, point) -> float:
        self.validate(member)
        return float(self.values([member], np.atleast_1d(point))[0, 0])

    def true_mean(self, member) -> float:
        self.validate(member)
        return float(self.true_means([member])[0])

    def empirical_means(self, members, X) -> np.ndarray:
        """Empirical means for a batch of samples ``X`` of shape ``(R, n)``; returns ``(R, k)``."""
        X = np.atleast_2d(X)
        return np.stack([self.values(members, row).mean(axis=1) for row in X])

    def sample(self, rng, n):
        return self.distribution.sample(rng, n)


class Thresholds(FunctionClass):
    """``x -> 1(x <= t)`` for t on the dyadic grid strictly inside (0, 1)."""

    name = "thresholds"

    def __init__(self, distribution: ContinuousLine | None = None):
        self.distribution = distribution or ContinuousLine.uniform()

    def members(self, resolution=DEFAULT_RESOLUTION):
        N = 2 ** dyadic_levels(resolution)
        return [k / N for k in range(1, N)]

    def validate(self, member):
        if not isinstance(member, (int, float, np.floating)) or not 0.0 <= member <= 1.0:
            raise InvalidMemberError(member)

    def values(self, members, points):
        t = np.asarray(members, dtype=float)
        return (np.asarray(points, dtype=float)[None, :] <= t[:, None]).astype(float)

    def true_means(self, members):
        return self.distribution.cdf(np.asarray(members, dtype=float))

    def empirical_means(self, members, X):
        t = np.asarray(members, dtype=float)
        X = np.sort(np.atleast_2d(X), axis=1)
        n = X.shape[1]
        out = np.empty((X.shape[0], len(t)))
        for r, row in enumerate(X):
            out[r] = np.searchsorted(row, t, side="right")
        return out / n


class Intervals(FunctionClass):
    """``x -> 1(a <= x <= b)`` for grid pairs ``a < b`` in [0, 1]."""

    name = "intervals"

    def __init__(self, distribution: ContinuousLine | None = None):
        self.distribution = distribution or ContinuousLine.uniform()

    def members(self, resolution=DEFAULT_RESOLUTION):
        N = 2 ** dyadic_levels(resolution)
        return [(i / N, j / N) for i in range(N + 1) for j in range(i + 1, N + 1)]

    def validate(self, member):
        try:
            a, b = member
        except (TypeError, ValueError):
            raise InvalidMemberError(member) from None
        if not 0.0 <= a <= b <= 1.0:
            raise InvalidMemberError(member)

    def _ab(self, members):
        ab = np.asarray(members, dtype=float).reshape(-1, 2)
        return ab[:, 0], ab[:, 1]

    def values(self, members, points):
        a, b = self._ab(members)
        x = np.asarray(points, dtype=float)[None, :]
        return ((x >= a[:, None]) & (x <= b[:, None])).astype(float)

    def true_means(self, members):
        a, b = self._ab(members)
        return self.distribution.cdf(b) - self.distribution.cdf(a)

    def empirical_means(self, members, X):
        a, b = self._ab(members)
        X = np.sort(np.atleast_2d(X), axis=1)
        out = np.empty((X.shape[0], len(a)))
        for r, row in enumerate(X):
            out[r] = np.searchsorted(row, b, side="right") - np.searchsorted(row, a, side="left")
        return out / X.shape[1]


class Ramps(FunctionClass):
    """``x -> clamp((x - t) / w, 0, 1)`` with ``t`` on the grid in [0, 1) and ``w`` from a fixed list."""

    name = "ramps"

    def __init__(self, distribution: ContinuousLine | None = None, widths=(0.125, 0.25, 0.5, 1.0)):
        self.distribution = distribution or ContinuousLine.uniform()
        self.widths = tuple(float(w) for w in widths)
        if min(self.widths) <= 0:
            raise ValueError("ramp widths must be positive")

    def members(self, resolution=DEFAULT_RESOLUTION):
        N = 2 ** dyadic_levels(resolution)
        return [(k / N, w) for w in self.widths for k in range(N)]

    def validate(self, member):
        try:
            t, w = member
        except (TypeError, ValueError):
            raise InvalidMemberError(member) from None
        if not (0.0 <= t <= 1.0 and w > 0):
            raise InvalidMemberError(member)

    def _tw(self, members):
        tw = np.asarray(members, dtype=float).reshape(-1, 2)
        return tw[:, 0], tw[:, 1]

    def values(self, members, points):
        t, w = self._tw(members)
        x = np.asarray(points, dtype=float)[None, :]
        return np.clip((x - t[:, None]) / w[:, None], 0.0, 1.0)

    def true_means(self, members):
        # clamp((x-t)/w) = (1/w) * integral over s in [t, t+w] of 1(x > s)
        t, w = self._tw(members)
        survival = w - self.distribution.cdf_integral(t, t + w)
        return np.clip(survival / w, 0.0, 1.0)


class ExplicitMatrix(FunctionClass):
    """Functions tabulated on a finite space: rows are members, columns are atoms."""

    name = "explicit"

    def __init__(self, space: FiniteSpace, table):
        table = np.asarray(table, dtype=float)
        if table.ndim != 2 or table.shape[1] != space.m:
            raise ValueError("table must have one column per atom")
        if table.size and (table.min() < 0 or table.max() > 1):
            raise ValueError("tabulated values must lie in [0, 1]")
        self.space = space
        self.distribution = space
        self.table = table

    @classmethod
    def from_csv(cls, space: FiniteSpace, path) -> "ExplicitMatrix":
        return cls(space, np.loadtxt(path, delimiter=",", ndmin=2))

    def members(self, resolution=DEFAULT_RESOLUTION):
        return list(range(self.table.shape[0]))

    def validate(self, member):
        if not isinstance(member, (int, np.integer)) or not 0 <= member < self.table.shape[0]:
            raise InvalidMemberError(member)

    def values(self, members, points):
        return self.table[np.asarray(members, dtype=int)][:, np.asarray(points, dtype=int)]

    def true_means(self, members):
        return self.table[np.asarray(members, dtype=int)] @ self.space.p

    def empirical_means(self, members, X):
        X = np.atleast_2d(np.asarray(X, dtype=int))
        R, n = X.shape
        m = self.space.m
        counts = np.bincount((X + m * np.arange(R)[:, None]).ravel(), minlength=R * m).reshape(R, m)
        return counts @ self.table[np.asarray(members, dtype=int)].T / n


# ---------------------------------------------------------------------------
# normalizers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Normalizer:
    """The weight dividing each deviation sum inside the supremum.

    ``sqrt-mean`` is ``sqrt(n * Pf)``; ``entropy-integral`` and
    ``bracketing-integral`` evaluate the entropy integral of ``envelope`` at
    ``Pf``; ``constant`` returns ``value``.
    """

    kind: str = "sqrt-mean"
    value: float = 1.0
    envelope: object = None

    KINDS = ("sqrt-mean", "entropy-integral", "bracketing-integral", "constant")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown normalizer kind {self.kind!r}")
        if self.kind in ("entropy-integral", "bracketing-integral") and self.envelope is None:
            raise ValueError(f"{self.kind} normalizer needs an envelope")
        if self.kind == "constant" and not self.value > 0:
            raise ValueError("constant normalizer must be positive")

    def __call__(self, p, n: int) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.kind == "constant":
            return np.full(p.shape, float(self.value))
        if self.kind == "sqrt-mean":
            return np.sqrt(n * np.clip(p, 0.0, None))
        from .entropy import phi_values

        return phi_values(self.envelope, n, p)

    def for_members(self, means, n: int) -> np.ndarray:
        phis = self(means, n)
        if not np.all(phis > 0):
            raise NormalizerError("normalizer vanishes on a member with zero mean")
        return phis


# ---------------------------------------------------------------------------
# empirical process
# ---------------------------------------------------------------------------

def _points(x):
    return x.points if isinstance(x, Sample) else np.atleast_1d(np.asarray(x))


def empirical_mean(cls: FunctionClass, f, x) -> float:
    pts = _points(x)
    if len(pts) == 0:
        raise ValueError("empty sample")
    cls.validate(f)
    return float(cls.values([f], pts)[0].mean())


def deviation_sum(cls: FunctionClass, f, x) -> float:
    """``sum_i (Pf - f(x_i))``."""
    pts = _points(x)
    cls.validate(f)
    vals = cls.values([f], pts)[0]
    return float(len(pts) * cls.true_mean(f) - vals.sum())


def sup_batch(cls: FunctionClass, members, X, normalizer: Normalizer, means=None, phis=None):
    """Normalized supremum for each row of ``X``; returns ``(Z, argmax_index)``."""
    X = np.atleast_2d(X)
    n = X.shape[1]
    means = cls.true_means(members) if means is None else means
    phis = normalizer.for_members(means, n) if phis is None else phis
    dev = n * (means[None, :] - cls.empirical_means(members, X))
    ratio = dev / phis[None, :]
    idx = np.argmax(ratio, axis=1)
    return ratio[np.arange(len(idx)), idx], idx


def normalized_sup(cls: FunctionClass, x, normalizer: Normalizer, resolution: float = DEFAULT_RESOLUTION):
    """``Z(x)``: the largest normalized deviation over the members at ``resolution``.

    Returns ``(value, argmax_member)``.
    """
    members = cls.members(resolution)
    if not members:
        raise EmptyClassError(f"{cls.name} has no members at resolution {resolution}")
    pts = _points(x)
    z, idx = sup_batch(cls, members, pts[None, :], normalizer)
    return float(z[0]), members[int(idx[0])]
