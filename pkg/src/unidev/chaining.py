"""Dyadic net hierarchy, projections and increment sets for a finite set of 2n-vectors.

Node 0 is always the zero vector, which anchors the hierarchy; the input
vectors become nodes ``1..N`` after de-duplication (a zero input vector is
identified with node 0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .capacity import EntropyEnvelope, constant_envelope
from .entropy import entropy_integral
from .errors import ResolutionError

DEFAULT_J_MAX = 20


def dist(f, g) -> float:
    """``((2n)^-1 sum_i (f_i - g_i)^2)^(1/2)``."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    return float(np.sqrt(np.mean((f - g) ** 2)))


@dataclass
class PointSet2n:
    """Class members evaluated at ``(x_1..x_n, y_1..y_n)``; rows are members."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if v.shape[1] % 2:
            raise ValueError("vectors must have even length 2n")
        if v.size and (v.min() < 0 or v.max() > 1):
            raise ValueError("entries must lie in [0, 1]")
        self.vectors = v

    @classmethod
    def from_class(cls, fclass, members, x, y) -> "PointSet2n":
        pts = np.concatenate([np.asarray(x), np.asarray(y)])
        return cls(fclass.values(members, pts))

    @property
    def n(self) -> int:
        return self.vectors.shape[1] // 2

    def mean(self) -> np.ndarray:
        """``f_bar(x, y)`` for each member."""
        return self.vectors.mean(axis=1)


@dataclass
class NetHierarchy:
    nodes: np.ndarray  # (N+1, 2n), row 0 is the zero vector
    member_node: np.ndarray  # input row -> node id
    levels: list  # levels[j] = sorted node ids of F_j, j = 0..j_max
    j_max: int
    projections: dict = field(default_factory=dict)  # node id -> list of node ids, index = level

    @property
    def n(self) -> int:
        return self.nodes.shape[1] // 2

    def sizes(self) -> list[int]:
        return [len(lv) for lv in self.levels]

    def collapsed(self, j: int) -> bool:
        """True when ``F_j == F_{j+1}``; nested levels of equal size coincide."""
        return j + 1 <= self.j_max and len(self.levels[j]) == len(self.levels[j + 1])

    def band(self, node: int) -> int | None:
        """The j with ``d(f, 0)`` in ``(2^-(j+1), 2^-j]``, or None for the zero vector."""
        r = dist(self.nodes[node], 0.0)
        if r == 0:
            return None
        j = max(0, math.floor(-math.log2(r)))
        while r > 2.0**-j:
            j -= 1
        while r <= 2.0 ** -(j + 1):
            j += 1
        return j

    def to_json(self) -> dict:
        return {
            "j_max": self.j_max,
            "n": self.n,
            "sizes": self.sizes(),
            "levels": [list(map(int, lv)) for lv in self.levels],
            "member_node": list(map(int, self.member_node)),
            "projections": {str(k): list(map(int, v)) for k, v in sorted(self.projections.items())},
            "deltas": {str(j): [list(map(int, p)) for p in pairs] for j, pairs in delta_pairs(self).items()},
        }


def build_hierarchy(points: PointSet2n, j_max: int = DEFAULT_J_MAX) -> NetHierarchy:
    """Nested greedy nets ``{0} = F_0 ⊆ F_1 ⊆ ...``.

    Level j extends level j-1 by scanning nodes in index order and keeping
    those more than ``2^-j`` from everything kept so far; maximality makes
    each level a ``2^-j``-cover.
    """
    if not isinstance(points, PointSet2n):
        points = PointSet2n(points)
    vecs = points.vectors
    zero = np.zeros((1, vecs.shape[1]))
    uniq, inverse = np.unique(np.vstack([zero, vecs]), axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    # renumber so the zero vector is node 0 and the rest keep first-appearance order
    order = [inverse[0]] + [k for k in dict.fromkeys(inverse[1:]) if k != inverse[0]]
    remap = {old: new for new, old in enumerate(order)}
    nodes = uniq[order]
    member_node = np.array([remap[k] for k in inverse[1:]], dtype=int)

    diff = nodes[:, None, :] - nodes[None, :, :]
    D = np.sqrt(np.mean(diff**2, axis=2))
    if len(nodes) > 1:
        off = D[~np.eye(len(nodes), dtype=bool)]
        if off.min() <= 2.0**-j_max:
            raise ResolutionError(
                f"minimum pairwise distance {off.min():.3g} is not above 2^-{j_max}; increase j_max"
            )

    levels = [[0]]
    for j in range(1, j_max + 1):
        radius = 2.0**-j
        current = list(levels[-1])
        for k in range(1, len(nodes)):
            if k in current:
                continue
            if D[k, current].min() > radius:
                current.append(k)
        levels.append(sorted(current))

    h = NetHierarchy(nodes=nodes, member_node=member_node, levels=levels, j_max=j_max)
    h._dist = D
    for node in range(len(nodes)):
        h.projections[node] = _project_node(h, node)
    return h


def _project_node(h: NetHierarchy, node: int) -> list[int]:
    D = h._dist
    proj = [0] * (h.j_max + 1)
    j = h.band(node)
    if j is None:
        return proj
    for k in range(j + 1, h.j_max + 1):
        level = h.levels[k]
        ds = D[node, level]
        ok = np.nonzero(ds <= 2.0**-k)[0]
        proj[k] = level[ok[np.argmin(ds[ok])]]
    for k in range(h.j_max - 1, j, -1):
        if h.collapsed(k):
            proj[k] = proj[k + 1]
    return proj


def project(h: NetHierarchy, member: int) -> list[np.ndarray]:
    """``[pi_0(f), ..., pi_jmax(f)]`` as vectors for input row ``member``."""
    node = int(h.member_node[member])
    return [h.nodes[k] for k in h.projections[node]]


def delta_pairs(h: NetHierarchy) -> dict[int, list[tuple[int, int]]]:
    """Node pairs ``(g, h)`` generating each increment set, j = 1..j_max.

    A collapsed level (``F_j == F_{j-1}``) contributes ``{0}`` plus the
    increments ``g - 0`` of members whose chain starts at that level; without
    those the telescoping decomposition would break for such members.
    """
    D = h._dist
    out = {}
    for j in range(1, h.j_max + 1):
        if len(h.levels[j]) == len(h.levels[j - 1]):
            starts = sorted({proj[j] for node, proj in h.projections.items() if h.band(node) == j - 1})
            out[j] = [(0, 0)] + [(g, 0) for g in starts if g != 0]
            continue
        lim = 2.0 ** (-j + 2)
        out[j] = [(g, k) for g in h.levels[j] for k in h.levels[j - 1] if D[g, k] <= lim]
    return out


def delta_sets(h: NetHierarchy) -> dict[int, np.ndarray]:
    """``Delta_j = {g - h : g in F_j, h in F_{j-1}, d(g, h) <= 2^(-j+2)}``, ``{0}`` on collapsed levels."""
    return {
        j: np.array([h.nodes[g] - h.nodes[k] for g, k in pairs])
        for j, pairs in delta_pairs(h).items()
    }


def level_integrals(envelope: EntropyEnvelope, n: int, j_max: int = DEFAULT_J_MAX) -> np.ndarray:
    """``I_j = sqrt(n) * integral over (2^-(j+1), 2^-j] of sqrt(log D)`` for j = 0..j_max."""
    return np.array(
        [math.sqrt(n) * entropy_integral(envelope, 2.0**-j, 2.0 ** -(j + 1)) for j in range(j_max + 1)]
    )


def default_envelope(h: NetHierarchy) -> EntropyEnvelope:
    """Constant envelope at the node count: no packing of the node set can exceed it."""
    return constant_envelope(max(2.0, float(len(h.nodes))))


def chained_sup_bound(h: NetHierarchy, envelope: EntropyEnvelope | None = None, u: float = 36.0):
    """Per-member chained bound ``u sqrt(n) integral_0^(2^-(j+1)) sqrt(log D)``.

    Returns ``(bounds, radius_ok)`` where ``radius_ok[i]`` records
    ``d(f, 0) <= f_bar^(1/2)`` for input row i.
    """
    envelope = envelope or default_envelope(h)
    n = h.n
    bounds = np.zeros(len(h.member_node))
    radius_ok = np.zeros(len(h.member_node), dtype=bool)
    for i, node in enumerate(h.member_node):
        vec = h.nodes[node]
        radius_ok[i] = dist(vec, 0.0) ** 2 <= vec.mean() + 1e-15
        j = h.band(node)
        if j is None:
            continue
        bounds[i] = u * math.sqrt(n) * entropy_integral(envelope, 2.0 ** -(j + 1))
    return bounds, radius_ok


def rademacher_increments(h: NetHierarchy, signs) -> np.ndarray:
    """``sum_i eps_i (f_{i+n} - f_i)`` for every input row and every sign vector (rows of ``signs``)."""
    signs = np.atleast_2d(signs)
    n = h.n
    vecs = h.nodes[h.member_node]
    return signs @ (vecs[:, n:] - vecs[:, :n]).T


def check_hierarchy(h: NetHierarchy, envelope: EntropyEnvelope | None = None, tol: float = 1e-12) -> dict:
    """Failure counts for every structural invariant of the hierarchy."""
    D = h._dist
    envelope = envelope or default_envelope(h)
    n = h.n
    fails = {
        "separation": 0,
        "covering": 0,
        "link": 0,
        "reconstruction": 0,
        "delta_membership": 0,
        "delta_cardinality": 0,
        "delta_energy": 0,
        "tail_sum": 0,
    }
    all_nodes = np.arange(len(h.nodes))
    for j, level in enumerate(h.levels):
        r = 2.0**-j
        sub = D[np.ix_(level, level)]
        off = sub[~np.eye(len(level), dtype=bool)]
        fails["separation"] += int(np.sum(off <= r)) // 2
        fails["covering"] += int(np.sum(D[np.ix_(all_nodes, level)].min(axis=1) > r))
    pairs = {k: set(v) for k, v in delta_pairs(h).items()}
    deltas = delta_sets(h)
    for node, proj in h.projections.items():
        for k in range(1, h.j_max + 1):
            if D[proj[k - 1], proj[k]] > 2.0 ** (-k + 2):
                fails["link"] += 1
            g, k0 = proj[k], proj[k - 1]
            # a zero increment is always available through (0, 0) or (g, g)
            if g != k0 and (g, k0) not in pairs[k]:
                fails["delta_membership"] += 1
        telescoped = sum((h.nodes[proj[k]] - h.nodes[proj[k - 1]] for k in range(1, h.j_max + 1)), np.zeros(2 * n))
        if np.max(np.abs(telescoped - h.nodes[node])) > tol:
            fails["reconstruction"] += 1
    for j in range(1, h.j_max + 1):
        if len(deltas[j]) > len(h.levels[j]) * len(h.levels[j - 1]):
            fails["delta_cardinality"] += 1
        energy = np.sum((deltas[j][:, n:] - deltas[j][:, :n]) ** 2, axis=1)
        fails["delta_energy"] += int(np.sum(energy > n * 4 * 2.0 ** (-2 * j + 4) * (1 + tol)))
    I = level_integrals(envelope, n, h.j_max)
    for j in range(h.j_max + 1):
        tail = I[j + 1 :].sum()
        whole = math.sqrt(n) * entropy_integral(envelope, 2.0 ** -(j + 1))
        if tail > whole * (1 + 1e-12) + 1e-15:
            fails["tail_sum"] += 1
    return fails
