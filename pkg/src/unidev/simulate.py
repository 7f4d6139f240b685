"""Monte Carlo checks of the tail, median and symmetrization statements.

Every replicate draws from its own stream ``replicate_rng(seed, k, phase)``.
Replicates are processed in fixed blocks of ``BLOCK`` and reassembled in
order, so worker count never changes a result.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .capacity import EntropyEnvelope, constant_envelope
from .core import DEFAULT_RESOLUTION, FunctionClass, Normalizer, replicate_rng
from .entropy import phi_values
from .errors import EmptyClassError, HypothesisError, ProtocolError
from .kernel import solve_L

BLOCK = 256
SHIFT = math.sqrt(2.0 / math.log(2.0))

# phase tags keep the streams of different experiment stages apart
PHASE_MAIN = 0
PHASE_Y = 1
PHASE_SIGNS = 2
PHASE_SYM_LHS = 3


@dataclass
class Experiment:
    fclass: FunctionClass
    n: int
    R: int
    seed: int
    normalizer: Normalizer = field(default_factory=Normalizer)
    u_grid: tuple = ()
    resolution: float = DEFAULT_RESOLUTION
    phase: int = PHASE_MAIN

    def __post_init__(self):
        if self.n < 1 or self.R < 1:
            raise ValueError("need n >= 1 and R >= 1")
        self.u_grid = tuple(float(u) for u in self.u_grid)

    def members(self, resolution=None):
        members = self.fclass.members(resolution or self.resolution)
        if not members:
            raise EmptyClassError(f"{self.fclass.name} has no members")
        return members


@dataclass
class MedianEstimate:
    value: float
    below: float  # order statistic just below the median
    above: float  # and just above
    q25: float
    q75: float
    ci_low: float  # distribution-free 95% band from binomial order statistics
    ci_high: float
    R: int
    seed: int
    n: int = 0


@dataclass
class TailReport:
    rows: list
    R: int
    seed: int
    median_seed: int | None = None
    label: str = ""

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.rows)


# ---------------------------------------------------------------------------
# replicate plumbing
# ---------------------------------------------------------------------------

def _blocks(R: int):
    return [range(s, min(s + BLOCK, R)) for s in range(0, R, BLOCK)]


def draw(fclass: FunctionClass, n: int, seed: int, replicates, phase: int) -> np.ndarray:
    return np.stack([np.asarray(fclass.sample(replicate_rng(seed, k, phase), n)) for k in replicates])


def _fan_out(fn, R: int, threads: int = 1) -> list:
    blocks = _blocks(R)
    if threads <= 1 or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, blocks))


def _deviations(fclass, members, X, means) -> np.ndarray:
    n = X.shape[1]
    return n * (means[None, :] - fclass.empirical_means(members, X))


def z_values(exp: Experiment, threads: int = 1, resolution=None) -> np.ndarray:
    """``Z(x)`` for every replicate of ``exp``."""
    members = exp.members(resolution)
    means = exp.fclass.true_means(members)
    phis = exp.normalizer.for_members(means, exp.n)

    def block(reps):
        dev = _deviations(exp.fclass, members, draw(exp.fclass, exp.n, exp.seed, reps, exp.phase), means)
        return (dev / phis[None, :]).max(axis=1)

    return np.concatenate(_fan_out(block, exp.R, threads))


def _binomial_stderr(freq: float, R: int) -> float:
    return math.sqrt(freq * (1 - freq) / R)


# ---------------------------------------------------------------------------
# median and tails
# ---------------------------------------------------------------------------

def median_from_values(z, seed: int, n: int = 0) -> MedianEstimate:
    z = np.sort(np.asarray(z, dtype=float))
    R = len(z)
    if R % 2 == 0:
        raise ValueError("median runs need an odd replicate count")
    k = R // 2
    half = 1.96 * math.sqrt(R) / 2
    lo = max(0, int(math.floor(k - half)))
    hi = min(R - 1, int(math.ceil(k + half)))
    return MedianEstimate(
        value=float(z[k]),
        below=float(z[max(k - 1, 0)]),
        above=float(z[min(k + 1, R - 1)]),
        q25=float(np.quantile(z, 0.25)),
        q75=float(np.quantile(z, 0.75)),
        ci_low=float(z[lo]),
        ci_high=float(z[hi]),
        R=R,
        seed=int(seed),
        n=n,
    )


def estimate_median(exp: Experiment, threads: int = 1) -> MedianEstimate:
    """Sample median of ``Z`` over ``exp.R`` replicates (R odd, no interpolation)."""
    if exp.R % 2 == 0:
        raise ValueError("median runs need an odd replicate count")
    return median_from_values(z_values(exp, threads), exp.seed, exp.n)


def _resolve_median(M, median_seed):
    if isinstance(M, MedianEstimate):
        return M.value, M.seed
    return float(M), median_seed


def _tail_rows(violations: np.ndarray, u_grid, formula: str):
    R = violations.shape[0]
    rows = []
    for j, u in enumerate(u_grid):
        count = int(violations[:, j].sum())
        freq = count / R
        se = _binomial_stderr(freq, R)
        budget = min(1.0, 2 * math.exp(-u))
        rows.append({
            "u": u, "threshold": formula, "violations": count, "frequency": freq,
            "stderr": se, "budget": budget, "pass": freq <= budget + 3 * se,
        })
    return rows


def tail_experiment(exp: Experiment, M, L: float | None = None, u_grid=None, median_seed=None,
                    threads: int = 1, refine: bool = True) -> TailReport:
    """Frequency of ``sum(Pf - f(x_i)) >= M phi(f) + 2 sqrt(L n u Pf)`` for some member.

    ``M`` is a :class:`MedianEstimate` (or a float with ``median_seed``); the
    tail replicates must come from a different seed.  With ``refine`` the
    event is re-evaluated at half the resolution and a replicate counts as a
    violation if either grid flags it.
    """
    M_val, m_seed = _resolve_median(M, median_seed)
    if m_seed is None:
        raise ProtocolError("the median estimate must carry its seed")
    if int(m_seed) == int(exp.seed):
        raise ProtocolError(f"tail phase reuses the median seed {exp.seed}")
    L = solve_L(1.0) if L is None else L
    u_grid = tuple(float(u) for u in (u_grid if u_grid is not None else exp.u_grid))
    n = exp.n

    grids = [exp.members()]
    if refine:
        grids.append(exp.members(exp.resolution / 2))
    prepared = []
    for members in grids:
        means = exp.fclass.true_means(members)
        phis = exp.normalizer.for_members(means, n)
        thr = np.stack([M_val * phis + 2 * np.sqrt(L * n * u * means) for u in u_grid])
        prepared.append((members, means, thr))

    def block(reps):
        X = draw(exp.fclass, n, exp.seed, reps, exp.phase)
        out = np.zeros((len(reps), len(u_grid)), dtype=bool)
        for members, means, thr in prepared:
            dev = _deviations(exp.fclass, members, X, means)
            for j in range(len(u_grid)):
                out[:, j] |= np.any(dev >= thr[j][None, :], axis=1)
        return out

    violations = np.concatenate(_fan_out(block, exp.R, threads))
    formula = f"{M_val!r}*phi(f) + 2*sqrt({L!r}*n*u*Pf)"
    return TailReport(_tail_rows(violations, u_grid, formula), exp.R, exp.seed, m_seed, "theorem2")


# ---------------------------------------------------------------------------
# corollary form and the calibration of K
# ---------------------------------------------------------------------------

def critical_K(exp: Experiment, u_grid, threads: int = 1, refine: bool = True) -> np.ndarray:
    """Per replicate and u, ``max_f sum(Pf - f(x_i)) / (phi(Pf) + sqrt(n u Pf))``.

    The corollary event holds for a constant K exactly when K is at most this
    value, so one pass yields the violation frequency for every K.
    """
    u_grid = tuple(float(u) for u in u_grid)
    n = exp.n
    grids = [exp.members()] + ([exp.members(exp.resolution / 2)] if refine else [])
    prepared = []
    for members in grids:
        means = exp.fclass.true_means(members)
        phis = exp.normalizer.for_members(means, n)
        denom = np.stack([phis + np.sqrt(n * u * means) for u in u_grid])
        prepared.append((members, means, denom))

    def block(reps):
        X = draw(exp.fclass, n, exp.seed, reps, exp.phase)
        out = np.full((len(reps), len(u_grid)), -np.inf)
        for members, means, denom in prepared:
            dev = _deviations(exp.fclass, members, X, means)
            for j in range(len(u_grid)):
                out[:, j] = np.maximum(out[:, j], (dev / denom[j][None, :]).max(axis=1))
        return out

    return np.concatenate(_fan_out(block, exp.R, threads))


def corollary_report(kcrit: np.ndarray, K: float, u_grid, seed: int, median_seed=None) -> TailReport:
    formula = f"{K!r}*(phi(Pf) + sqrt(n*u*Pf))"
    return TailReport(_tail_rows(kcrit >= K, tuple(u_grid), formula), kcrit.shape[0], seed, median_seed, "corollary1")


def calibrate_K(kcrit: np.ndarray, u_grid, powers=range(-8, 9)) -> float:
    """Smallest ``2^k`` whose corollary event passes on every u of the grid."""
    for k in powers:
        K = 2.0**k
        if corollary_report(kcrit, K, u_grid, seed=-1).passed:
            return K
    raise HypothesisError("no power of two in the search range passes")


# ---------------------------------------------------------------------------
# symmetrization and Rademacher suprema
# ---------------------------------------------------------------------------

@dataclass
class SymmetrizationReport:
    rows: list
    R: int
    shift: float = SHIFT

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.rows)


def _ratio_or_zero(num, den):
    # den == 0 only when every value is zero, and then num == 0 as well
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def symmetrization_experiment(exp: Experiment, u_grid=None, envelope: EntropyEnvelope | None = None,
                              threads: int = 1) -> SymmetrizationReport:
    """Both sides of the symmetrization inequality.

    LHS: frequency of ``sup sum(Pf - f(x_i)) / phi(Pf) >= u`` on samples x.
    RHS: twice the frequency of ``sup sum(f(y_i) - f(x_i)) / phi(f_bar(x, y)) >= u - SHIFT``
    on independent pairs.  ``phi`` is the entropy integral of ``envelope``
    (default ``D = 2``).
    """
    envelope = envelope or constant_envelope(2.0)
    if float(envelope.D(1.0)) < 2 - 1e-12:
        raise HypothesisError("symmetrization needs D(1) >= 2")
    u_grid = tuple(float(u) for u in (u_grid if u_grid is not None else exp.u_grid))
    members = exp.members()
    means = exp.fclass.true_means(members)
    n = exp.n
    phi_p = phi_values(envelope, n, means)
    if not np.all(phi_p > 0):
        raise HypothesisError("phi vanishes at some member")

    def lhs_block(reps):
        X = draw(exp.fclass, n, exp.seed, reps, PHASE_SYM_LHS)
        return (_deviations(exp.fclass, members, X, means) / phi_p[None, :]).max(axis=1)

    def rhs_block(reps):
        X = draw(exp.fclass, n, exp.seed, reps, exp.phase)
        Y = draw(exp.fclass, n, exp.seed, reps, PHASE_Y)
        fx = exp.fclass.empirical_means(members, X)
        fy = exp.fclass.empirical_means(members, Y)
        num = n * (fy - fx)
        den = phi_values(envelope, n, (fx + fy) / 2)
        return _ratio_or_zero(num, den).max(axis=1)

    lhs = np.concatenate(_fan_out(lhs_block, exp.R, threads))
    rhs = np.concatenate(_fan_out(rhs_block, exp.R, threads))
    R = exp.R
    rows = []
    for u in u_grid:
        fl = float(np.mean(lhs >= u))
        fr = float(np.mean(rhs >= u - SHIFT))
        se = math.sqrt(_binomial_stderr(fl, R) ** 2 + 4 * _binomial_stderr(fr, R) ** 2)
        rows.append({"u": u, "lhs": fl, "rhs_event": fr, "rhs": 2 * fr, "stderr": se,
                     "pass": fl <= 2 * fr + 3 * se})
    return SymmetrizationReport(rows, R)


@dataclass
class RademacherSummary:
    sups: np.ndarray
    u: float
    tail: float  # fraction of sign vectors with sup >= u

    def quantiles(self, qs=(0.25, 0.5, 0.75)):
        return {q: float(np.quantile(self.sups, q)) for q in qs}


def rademacher_sup(vectors, envelope: EntropyEnvelope, sign_replicates: int = 10_000, seed: int = 0,
                   u: float = 36.0, threads: int = 1) -> RademacherSummary:
    """Sign-conditional law of ``sup_f sum_i eps_i (f(y_i) - f(x_i)) / phi(f_bar(x, y))``.

    ``vectors`` has one row per member holding ``(f(x_1..x_n), f(y_1..y_n))``.
    """
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    n = V.shape[1] // 2
    diff = V[:, n:] - V[:, :n]
    den = phi_values(envelope, n, V.mean(axis=1))

    def block(reps):
        signs = np.stack([replicate_rng(seed, k, PHASE_SIGNS).choice([-1.0, 1.0], n) for k in reps])
        return _ratio_or_zero(signs @ diff.T, np.broadcast_to(den, (len(reps), len(den)))).max(axis=1)

    sups = np.concatenate(_fan_out(block, sign_replicates, threads))
    return RademacherSummary(sups, u, float(np.mean(sups >= u)))


def chebyshev_check(exp: Experiment, members, threads: int = 1) -> list[dict]:
    """``P(|sum(Pf - f(y_i))| >= sqrt(2 n Pf)) <= 1/2`` per member, with 3 standard errors of slack."""
    means = exp.fclass.true_means(members)
    n = exp.n
    thr = np.sqrt(2 * n * means)

    def block(reps):
        X = draw(exp.fclass, n, exp.seed, reps, PHASE_Y)
        return np.abs(_deviations(exp.fclass, members, X, means)) >= thr[None, :]

    hits = np.concatenate(_fan_out(block, exp.R, threads))
    rows = []
    for j, f in enumerate(members):
        freq = float(hits[:, j].mean())
        se = _binomial_stderr(freq, exp.R)
        rows.append({"member": f, "Pf": float(means[j]), "frequency": freq, "stderr": se,
                     "pass": freq <= 0.5 + 3 * se})
    return rows


# ---------------------------------------------------------------------------
# the h function from the tail argument
# ---------------------------------------------------------------------------

@dataclass
class HReport:
    c_grid: np.ndarray
    h: np.ndarray
    second_moment: float
    monotone: bool
    convex: bool
    endpoints: bool
    averaged: bool

    @property
    def passed(self) -> bool:
        return self.monotone and self.convex and self.endpoints and self.averaged


def h_values(values, probs, c) -> np.ndarray:
    """``h(c) = E[(xi - c)^2 1(xi > c)]`` for a discrete law on [0, 1]."""
    t = np.asarray(values, dtype=float)[None, :]
    p = np.asarray(probs, dtype=float)[None, :]
    c = np.asarray(c, dtype=float)[:, None]
    return np.sum(p * np.where(t > c, (t - c) ** 2, 0.0), axis=1)


def h_check(values, probs, c_grid=None, tol: float = 1e-12, vectors: int = 200, seed: int = 0) -> HReport:
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if values.min() < 0 or values.max() > 1:
        raise ValueError("xi must be supported on [0, 1]")
    if abs(probs.sum() - 1) > 1e-12 or probs.min() < 0:
        raise ValueError("probabilities must be nonnegative and sum to 1")
    c = np.linspace(0.0, 1.0, 101) if c_grid is None else np.sort(np.asarray(c_grid, dtype=float))
    h = h_values(values, probs, c)
    m2 = float(probs @ values**2)
    monotone = bool(np.all(np.diff(h) <= tol))
    slopes = np.diff(h) / np.diff(c)
    convex = bool(np.all(np.diff(slopes) >= -tol * max(1.0, np.abs(slopes).max(initial=0.0))))
    ends = h_values(values, probs, [0.0, 1.0])
    endpoints = abs(ends[0] - m2) <= tol and abs(ends[1]) <= tol

    # averaged bound for random c-vectors, both uniform and clustered near the ends
    rng = replicate_rng(seed, 0, phase=12)
    ok = True
    for k in range(vectors):
        size = int(rng.integers(1, 40))
        cv = rng.uniform(size=size) if k % 2 else rng.beta(0.3, 0.3, size=size)
        lhs = h_values(values, probs, cv).mean()
        ok &= lhs <= (1 - cv.mean()) * m2 + tol
    return HReport(c, h, m2, monotone, convex, bool(endpoints), bool(ok))


def random_law(rng, atoms: int = 10):
    values = rng.uniform(size=atoms)
    values[rng.integers(atoms)] = rng.choice([0.0, 1.0])
    probs = rng.dirichlet(np.ones(atoms))
    return values, probs


def h_random_laws(count: int = 100, atoms: int = 10, seed: int = 0) -> list[HReport]:
    return [h_check(*random_law(replicate_rng(seed, k, phase=13), atoms), seed=k) for k in range(count)]


# ---------------------------------------------------------------------------
# median stability across n
# ---------------------------------------------------------------------------

@dataclass
class StabilityScan:
    estimates: list  # MedianEstimate per n
    band: float

    @property
    def center(self) -> float:
        return float(np.median([e.value for e in self.estimates]))

    def within_band(self) -> bool:
        c = self.center
        if c == 0:
            return all(e.value == 0 for e in self.estimates)
        return all(c / self.band <= e.value <= c * self.band for e in self.estimates)

    def rows(self) -> list[dict]:
        return [{"n": e.n, "M_hat": e.value, "q25": e.q25, "q75": e.q75, "ci_low": e.ci_low,
                 "ci_high": e.ci_high} for e in self.estimates]


def median_stability_scan(fclass: FunctionClass, normalizer: Normalizer, n_grid, R: int, seed: int,
                          resolution: float = DEFAULT_RESOLUTION, band: float = 1.5, threads: int = 1) -> StabilityScan:
    """Median of Z at each n; each n uses its own phase so streams never overlap."""
    est = []
    for k, n in enumerate(n_grid):
        exp = Experiment(fclass, int(n), R, seed, normalizer, resolution=resolution, phase=100 + k)
        est.append(estimate_median(exp, threads))
    return StabilityScan(est, band)
