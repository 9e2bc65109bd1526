"""Exact one-dimensional optimal transport.

``solve_1d`` sweeps the sorted cumulative masses of both sides (the
north-west-corner rule on sorted atoms), producing the monotone coupling and
Kantorovich potentials by complementary slackness along the chain. The sweep
is vectorized: chain cells come from merging the two sets of cumulative cut
points, potentials from a cumulative sum of cost increments.

``lp_oracle_small`` is an independent brute-force solver used by the tests.
"""

from __future__ import annotations

import enum
import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import linear_sum_assignment

from amortot.errors import EmptyMeasure, MassMismatch, PositivityViolation, ShapeMismatch, TooLarge
from amortot.measures import CostMatrix, DiscreteMeasure, Potentials, TransportPlan

__all__ = [
    "OneDCost",
    "Projected1DMeasure",
    "OneDSolution",
    "solve_1d",
    "lp_oracle_small",
]

logger = logging.getLogger(__name__)

TIE_TOL = 1e-12
MASS_MISMATCH_TOL = 1e-9

MAX_ORACLE_ATOMS = 6
MAX_REPLICATION = 720
MAX_BASES = 200_000


class OneDCost(enum.Enum):
    SQUARE = "square"
    ABS = "abs"

    def __call__(self, diff):
        if self is OneDCost.SQUARE:
            return diff * diff
        return np.abs(diff)


@dataclass(frozen=True, eq=False)
class Projected1DMeasure:
    """Positions on the real line with weights and the stable sort order."""

    positions: np.ndarray
    weights: np.ndarray
    sort_permutation: np.ndarray | None = None

    def __post_init__(self) -> None:
        positions = np.array(self.positions, dtype=np.float64).reshape(-1)
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        if positions.shape != weights.shape:
            raise ShapeMismatch(f"{positions.size} positions but {weights.size} weights")
        if positions.size == 0:
            raise EmptyMeasure("projected measure has no atoms")
        if np.any(weights <= 0.0):
            raise PositivityViolation("projected weights must be > 0")
        if self.sort_permutation is None:
            perm = np.argsort(positions, kind="stable")
        else:
            perm = np.asarray(self.sort_permutation, dtype=np.int64)
            if np.any(np.sort(perm) != np.arange(positions.size)):
                raise ShapeMismatch("sort_permutation is not a permutation")
            if np.any(np.diff(positions[perm]) < 0):
                raise ShapeMismatch("sort_permutation does not sort the positions")
        for array in (positions, weights, perm):
            array.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "sort_permutation", perm)

    @property
    def n(self) -> int:
        return self.positions.size

    @property
    def sorted_positions(self) -> np.ndarray:
        return self.positions[self.sort_permutation]

    @property
    def sorted_weights(self) -> np.ndarray:
        return self.weights[self.sort_permutation]


@dataclass(frozen=True, eq=False)
class OneDSolution:
    """Monotone plan (original indices), potentials and cost of a 1D problem.

    ``pivots`` lists the zero-mass cells that bridge exact mass ties so the
    complementary-slackness chain stays connected.
    """

    plan: TransportPlan
    f: np.ndarray
    g: np.ndarray
    cost: float
    pivots: tuple[tuple[int, int], ...] = ()

    @property
    def potentials(self) -> Potentials:
        return Potentials(self.f, self.g, 0.0)


def _snap_ties(cut_a: np.ndarray, cut_b: np.ndarray) -> np.ndarray:
    """Move column cut points onto row cut points closer than TIE_TOL."""
    cut_b = cut_b.copy()
    if cut_a.size == 0 or cut_b.size == 0:
        return cut_b
    idx = np.searchsorted(cut_a, cut_b)
    below = np.clip(idx - 1, 0, cut_a.size - 1)
    above = np.clip(idx, 0, cut_a.size - 1)
    d_below = np.abs(cut_a[below] - cut_b)
    d_above = np.abs(cut_a[above] - cut_b)
    nearest = np.where(d_below <= d_above, below, above)
    tied = np.minimum(d_below, d_above) <= TIE_TOL
    cut_b[tied] = cut_a[nearest[tied]]
    return cut_b


def solve_1d(
    a: Projected1DMeasure, b: Projected1DMeasure, h: OneDCost = OneDCost.SQUARE,
) -> OneDSolution:
    """Exact 1D OT between ``a`` and ``b`` under the convex cost h(x - y).

    Potentials use the gauge g = 0 on the first sorted atom of ``b``. When a
    row and a column are exhausted at the same cumulative mass, the jump of f
    across the tie is the value closest to zero that keeps the pair dual
    feasible; the bridging cell is recorded as a zero-mass pivot.
    """
    n, m = a.n, b.n
    xs, ys = a.sorted_positions, b.sorted_positions
    cum_a = np.cumsum(a.sorted_weights)
    cum_b = np.cumsum(b.sorted_weights)
    if abs(cum_a[-1] - cum_b[-1]) > MASS_MISMATCH_TOL:
        raise MassMismatch(f"total masses differ: {cum_a[-1]!r} vs {cum_b[-1]!r}")

    cut_a = cum_a[:-1]
    cut_b = _snap_ties(cut_a, cum_b[:-1])
    cuts = np.concatenate([cut_a, cut_b])
    # 0 = row advance, 1 = column advance; rows advance first on ties.
    kinds = np.concatenate([np.zeros(n - 1, dtype=np.int8), np.ones(m - 1, dtype=np.int8)])
    order = np.lexsort((kinds, cuts))
    cuts, row_step = cuts[order], kinds[order] == 0

    rows = np.concatenate([[0], np.cumsum(row_step)])
    cols = np.concatenate([[0], np.cumsum(~row_step)])
    bounds = np.concatenate([[0.0], cuts, [cum_a[-1]]])
    masses = np.maximum(np.diff(bounds), 0.0)

    h_chain = h(xs[rows] - ys[cols])
    increments = np.zeros(rows.size)
    step_in = np.flatnonzero(row_step) + 1
    increments[step_in] = h_chain[step_in] - h_chain[step_in - 1]

    pivot = masses == 0.0
    pivot_idx = np.flatnonzero(pivot)
    if pivot_idx.size:
        # Pivot k sits at (i+1, j) between (i, j) and (i+1, j+1).
        upper = h_chain[pivot_idx] - h_chain[pivot_idx - 1]
        lower = h_chain[pivot_idx + 1] - h(xs[rows[pivot_idx] - 1] - ys[cols[pivot_idx] + 1])
        increments[pivot_idx] = np.clip(0.0, lower, upper)

    f_chain = h_chain[0] + np.cumsum(increments)
    g_chain = h_chain - f_chain
    support = ~pivot
    f_sorted = np.empty(n)
    g_sorted = np.empty(m)
    f_sorted[rows[support]] = f_chain[support]
    g_sorted[cols[support]] = g_chain[support]

    perm_a, perm_b = a.sort_permutation, b.sort_permutation
    f = np.empty(n)
    g = np.empty(m)
    f[perm_a] = f_sorted
    g[perm_b] = g_sorted
    plan = TransportPlan.from_chain(
        (n, m), perm_a[rows[support]], perm_b[cols[support]], masses[support],
    )
    pivots = tuple(
        (int(perm_a[rows[k]]), int(perm_b[cols[k]])) for k in pivot_idx
    )
    return OneDSolution(
        plan=plan,
        f=f,
        g=g,
        cost=float(np.dot(masses, h_chain)),
        pivots=pivots,
    )


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------

def _common_denominator(weights: np.ndarray) -> int | None:
    denominator = 1
    for w in weights:
        frac = Fraction(float(w)).limit_denominator(MAX_REPLICATION)
        if abs(float(frac) - w) > 1e-14:
            return None
        denominator = math.lcm(denominator, frac.denominator)
        if denominator > MAX_REPLICATION:
            return None
    return denominator


def _replicated_counts(weights: np.ndarray, denominator: int) -> np.ndarray | None:
    counts = np.rint(weights * denominator).astype(np.int64)
    if counts.sum() != denominator or np.any(counts <= 0):
        return None
    return counts


def _by_permutation(C: np.ndarray) -> tuple[float, np.ndarray]:
    n = C.shape[0]
    perms = np.array(list(itertools.permutations(range(n))))
    totals = C[np.arange(n), perms].sum(axis=1)
    best = perms[int(np.argmin(totals))]
    plan = np.zeros_like(C)
    plan[np.arange(n), best] = 1.0 / n
    return float(totals.min() / n), plan


def _by_assignment(C: np.ndarray, counts_a: np.ndarray, counts_b: np.ndarray) -> tuple[float, np.ndarray]:
    # Integral marginals make an optimal vertex an assignment between copies.
    total = int(counts_a.sum())
    rows = np.repeat(np.arange(C.shape[0]), counts_a)
    cols = np.repeat(np.arange(C.shape[1]), counts_b)
    expanded = C[np.ix_(rows, cols)]
    r, c = linear_sum_assignment(expanded)
    plan = np.zeros_like(C)
    np.add.at(plan, (rows[r], cols[c]), 1.0 / total)
    return float(expanded[r, c].sum() / total), plan


def _tree_masses(edges, alpha: np.ndarray, beta: np.ndarray) -> dict | None:
    """Masses of the basic solution on a spanning tree, or None if it has a cycle."""
    n, m = alpha.size, beta.size
    parent = list(range(n + m))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in edges:
        ri, rj = find(i), find(n + j)
        if ri == rj:
            return None
        parent[ri] = rj

    supply, demand = alpha.copy(), beta.copy()
    active = set(edges)
    masses = {}
    while active:
        row_deg: dict[int, list] = {}
        col_deg: dict[int, list] = {}
        for edge in active:
            row_deg.setdefault(edge[0], []).append(edge)
            col_deg.setdefault(edge[1], []).append(edge)
        leaf = next((e[0] for e in row_deg.values() if len(e) == 1), None)
        if leaf is not None:
            i, j = leaf
            amount = supply[i]
        else:
            i, j = next(e[0] for e in col_deg.values() if len(e) == 1)
            amount = demand[j]
        masses[(i, j)] = amount
        supply[i] -= amount
        demand[j] -= amount
        active.remove((i, j))
    return masses


def _by_vertex_enumeration(C: np.ndarray, alpha: np.ndarray, beta: np.ndarray) -> tuple[float, np.ndarray]:
    n, m = C.shape
    cells = [(i, j) for i in range(n) for j in range(m)]
    basis_size = n + m - 1
    if math.comb(len(cells), basis_size) > MAX_BASES:
        raise TooLarge(f"{n}x{m} instance has too many candidate bases to enumerate")
    best_cost, best = math.inf, None
    for edges in itertools.combinations(cells, basis_size):
        masses = _tree_masses(edges, alpha, beta)
        if masses is None or min(masses.values()) < -1e-15:
            continue
        cost = sum(w * C[i, j] for (i, j), w in masses.items())
        if cost < best_cost:
            best_cost, best = cost, masses
    plan = np.zeros_like(C)
    for (i, j), w in best.items():
        plan[i, j] = max(w, 0.0)
    return float(best_cost), plan


def lp_oracle_small(
    mu: DiscreteMeasure, nu: DiscreteMeasure, C: CostMatrix,
) -> tuple[float, TransportPlan]:
    """Exact unregularized OT by exhaustive search; tests only.

    Uniform square instances enumerate all permutations; rational weights
    with a small common denominator are replicated into an assignment
    problem; anything else enumerates spanning-tree bases.
    """
    n, m = mu.n, nu.n
    if C.shape != (n, m):
        raise ShapeMismatch(f"cost matrix {C.shape} does not match ({n}, {m})")
    if n > MAX_ORACLE_ATOMS or m > MAX_ORACLE_ATOMS:
        raise TooLarge(f"oracle handles at most {MAX_ORACLE_ATOMS} atoms per side, got {n}x{m}")
    costs = C.values
    uniform = np.all(mu.weights == mu.weights[0]) and np.all(nu.weights == nu.weights[0])
    if n == m and uniform:
        cost, plan = _by_permutation(costs)
        return cost, TransportPlan.from_dense(plan)

    denominator = _common_denominator(np.concatenate([mu.weights, nu.weights]))
    if denominator is not None:
        counts_a = _replicated_counts(mu.weights, denominator)
        counts_b = _replicated_counts(nu.weights, denominator)
        if counts_a is not None and counts_b is not None:
            cost, plan = _by_assignment(costs, counts_a, counts_b)
            return cost, TransportPlan.from_dense(plan)

    cost, plan = _by_vertex_enumeration(costs, mu.weights, nu.weights)
    return cost, TransportPlan.from_dense(plan)
