"""Discrete measures, ground costs, transport plans and dual potentials.

Every other module builds on these types. Arrays stored on the frozen
dataclasses are made read-only at construction so instances can be shared
between threads.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from amortot.errors import (
    DimensionMismatch,
    DomainMismatch,
    EmptyMeasure,
    EpsilonNonPositive,
    PositivityViolation,
    ShapeMismatch,
)

__all__ = [
    "Domain",
    "CostFamily",
    "CostSpec",
    "CostMatrix",
    "DiscreteMeasure",
    "TransportPlan",
    "Potentials",
    "build_cost_matrix",
    "plan_from_potentials",
    "marginal_errors",
    "transport_cost",
]

logger = logging.getLogger(__name__)

SPHERE_TOL = 1e-9


class Domain(enum.IntEnum):
    EUCLIDEAN = 0
    UNIT_SPHERE = 1


class CostFamily(enum.Enum):
    SQ_EUCLIDEAN = "sqeuclidean"
    EUCLIDEAN = "euclidean"
    SPHERICAL_GEODESIC = "geodesic"


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted point cloud: ``atoms`` is n×d, ``weights`` sum to one."""

    atoms: np.ndarray
    weights: np.ndarray
    domain: Domain = Domain.EUCLIDEAN

    def __post_init__(self) -> None:
        atoms = np.array(self.atoms, dtype=np.float64)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        if atoms.ndim != 2 or atoms.shape[0] != weights.shape[0]:
            raise ShapeMismatch(
                f"atoms {atoms.shape} and weights {weights.shape} disagree on the atom count"
            )
        if atoms.shape[0] == 0:
            raise EmptyMeasure("a measure needs at least one atom")
        if not (np.all(np.isfinite(atoms)) and np.all(np.isfinite(weights))):
            raise PositivityViolation("atoms and weights must be finite")
        if np.any(weights <= 0.0):
            bad = int(np.flatnonzero(weights <= 0.0)[0])
            raise PositivityViolation(f"weight {bad} is {weights[bad]!r}; weights must be > 0")
        total = weights.sum()
        # Renormalize only when needed so that saving and reloading is bit-exact.
        if abs(total - 1.0) > 1e-13:
            weights = weights / total
        domain = Domain(self.domain)
        if domain is Domain.UNIT_SPHERE:
            norms = np.linalg.norm(atoms, axis=1)
            worst = float(np.max(np.abs(norms - 1.0)))
            if worst > SPHERE_TOL:
                raise DomainMismatch(f"unit-sphere atom off the sphere by {worst:.3e}")
        object.__setattr__(self, "atoms", _frozen(atoms))
        object.__setattr__(self, "weights", _frozen(weights))
        object.__setattr__(self, "domain", domain)

    @classmethod
    def uniform(cls, atoms, domain: Domain = Domain.EUCLIDEAN) -> DiscreteMeasure:
        atoms = np.asarray(atoms, dtype=np.float64)
        n = atoms.shape[0]
        return cls(atoms, np.full(n, 1.0 / n), domain)

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)


@dataclass(frozen=True)
class CostSpec:
    family: CostFamily = CostFamily.SQ_EUCLIDEAN

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", CostFamily(self.family))

    def check_domains(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> None:
        if mu.dim != nu.dim:
            raise DimensionMismatch(f"atom dimensions differ: {mu.dim} vs {nu.dim}")
        if self.family is CostFamily.SPHERICAL_GEODESIC and not (
            mu.domain is Domain.UNIT_SPHERE and nu.domain is Domain.UNIT_SPHERE
        ):
            raise DomainMismatch("geodesic cost needs both measures on the unit sphere")


@dataclass(frozen=True, eq=False)
class CostMatrix:
    values: np.ndarray
    family: CostFamily = CostFamily.SQ_EUCLIDEAN

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeMismatch(f"cost matrix must be 2-D, got shape {values.shape}")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def build_cost_matrix(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec) -> CostMatrix:
    """C_ij = c(x_i, y_j) for the cost family."""
    cost.check_domains(mu, nu)
    x, y = mu.atoms, nu.atoms
    if cost.family is CostFamily.SPHERICAL_GEODESIC:
        # Rounding can push inner products slightly outside [-1, 1].
        values = np.arccos(np.clip(x @ y.T, -1.0, 1.0))
    else:
        diff = x[:, None, :] - y[None, :, :]
        values = np.einsum("ijk,ijk->ij", diff, diff)
        if cost.family is CostFamily.EUCLIDEAN:
            values = np.sqrt(values)
    return CostMatrix(values, cost.family)


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """A coupling, either dense (n×m) or a sparse chain of (row, col, mass) triples.

    Chain triples are kept sorted by (row, col) in original atom indices and
    carry strictly positive mass.
    """

    shape: tuple[int, int]
    epsilon: float = 0.0
    dense: np.ndarray | None = None
    rows: np.ndarray | None = None
    cols: np.ndarray | None = None
    masses: np.ndarray | None = None

    def __post_init__(self) -> None:
        n, m = (int(s) for s in self.shape)
        object.__setattr__(self, "shape", (n, m))
        if self.epsilon < 0:
            raise EpsilonNonPositive(f"plan epsilon must be >= 0, got {self.epsilon}")
        if self.dense is not None:
            dense = np.array(self.dense, dtype=np.float64)
            if dense.shape != (n, m):
                raise ShapeMismatch(f"dense plan shape {dense.shape} != {(n, m)}")
            if np.any(dense < 0.0) or not np.all(np.isfinite(dense)):
                raise PositivityViolation("plan entries must be finite and >= 0")
            object.__setattr__(self, "dense", _frozen(dense))
            return
        rows = np.asarray(self.rows, dtype=np.int64).reshape(-1)
        cols = np.asarray(self.cols, dtype=np.int64).reshape(-1)
        masses = np.asarray(self.masses, dtype=np.float64).reshape(-1)
        if not (rows.shape == cols.shape == masses.shape):
            raise ShapeMismatch("chain rows, cols and masses must have equal length")
        if rows.size > n + m - 1:
            raise ShapeMismatch(f"chain has {rows.size} entries; at most {n + m - 1} allowed")
        if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= m):
            raise ShapeMismatch("chain index out of range")
        if np.any(masses < 0.0) or not np.all(np.isfinite(masses)):
            raise PositivityViolation("chain masses must be finite and >= 0")
        order = np.lexsort((cols, rows))
        object.__setattr__(self, "rows", _frozen(rows[order].copy()))
        object.__setattr__(self, "cols", _frozen(cols[order].copy()))
        object.__setattr__(self, "masses", _frozen(masses[order].copy()))

    @classmethod
    def from_dense(cls, values, epsilon: float = 0.0) -> TransportPlan:
        values = np.asarray(values, dtype=np.float64)
        return cls(shape=values.shape, epsilon=epsilon, dense=values)

    @classmethod
    def from_chain(cls, shape, rows, cols, masses, epsilon: float = 0.0) -> TransportPlan:
        return cls(shape=tuple(shape), epsilon=epsilon, rows=rows, cols=cols, masses=masses)

    @property
    def is_sparse(self) -> bool:
        return self.dense is None

    def to_dense(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense
        out = np.zeros(self.shape)
        np.add.at(out, (self.rows, self.cols), self.masses)
        return out

    def to_chain(self) -> TransportPlan:
        """Sparse view holding the positive entries of the plan."""
        if self.is_sparse:
            return self
        rows, cols = np.nonzero(self.dense)
        return TransportPlan.from_chain(
            self.shape, rows, cols, self.dense[rows, cols], self.epsilon,
        )

    def triples(self) -> list[tuple[int, int, float]]:
        if self.dense is not None:
            rows, cols = np.nonzero(self.dense)
            masses = self.dense[rows, cols]
        else:
            rows, cols, masses = self.rows, self.cols, self.masses
        return [(int(r), int(c), float(w)) for r, c, w in zip(rows, cols, masses)]

    def row_sums(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense.sum(axis=1)
        return np.bincount(self.rows, weights=self.masses, minlength=self.shape[0])

    def col_sums(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense.sum(axis=0)
        return np.bincount(self.cols, weights=self.masses, minlength=self.shape[1])

    def total_mass(self) -> float:
        if self.dense is not None:
            return float(self.dense.sum())
        return float(self.masses.sum())


@dataclass(frozen=True, eq=False)
class Potentials:
    """Dual pair (f, g) for regularization ``epsilon`` (0 for exact 1D duals)."""

    f: np.ndarray
    g: np.ndarray
    epsilon: float = 0.0

    def __post_init__(self) -> None:
        f = np.array(self.f, dtype=np.float64).reshape(-1)
        g = np.array(self.g, dtype=np.float64).reshape(-1)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise PositivityViolation("potentials must be finite")
        if self.epsilon < 0:
            raise EpsilonNonPositive(f"epsilon must be >= 0, got {self.epsilon}")
        object.__setattr__(self, "f", _frozen(f))
        object.__setattr__(self, "g", _frozen(g))
        object.__setattr__(self, "epsilon", float(self.epsilon))

    def max_violation(self, C: CostMatrix) -> float:
        """Largest f_i + g_j - C_ij; dual feasibility means this is <= 0."""
        _check_shape(C.shape, (self.f.size, self.g.size))
        return float(np.max(self.f[:, None] + self.g[None, :] - C.values))


def _check_shape(got: tuple[int, ...], want: tuple[int, ...]) -> None:
    if tuple(got) != tuple(want):
        raise ShapeMismatch(f"shape {tuple(got)} does not match {tuple(want)}")


def plan_from_potentials(pot: Potentials, C: CostMatrix) -> TransportPlan:
    """P_ij = exp((f_i + g_j - C_ij) / eps), exponentiated once in log space."""
    if pot.epsilon <= 0:
        raise EpsilonNonPositive(f"plan recovery needs epsilon > 0, got {pot.epsilon}")
    _check_shape(C.shape, (pot.f.size, pot.g.size))
    log_plan = (pot.f[:, None] + pot.g[None, :] - C.values) / pot.epsilon
    return TransportPlan.from_dense(np.exp(log_plan), pot.epsilon)


def marginal_errors(
    plan: TransportPlan, mu: DiscreteMeasure, nu: DiscreteMeasure,
) -> tuple[float, float]:
    """L1 distances of the plan's row and column sums to the marginals."""
    _check_shape(plan.shape, (mu.n, nu.n))
    row_l1 = float(np.abs(plan.row_sums() - mu.weights).sum())
    col_l1 = float(np.abs(plan.col_sums() - nu.weights).sum())
    return row_l1, col_l1


def transport_cost(plan: TransportPlan, C: CostMatrix) -> float:
    """<C, P> for dense or chain plans."""
    _check_shape(plan.shape, C.shape)
    if plan.dense is not None:
        return float(np.sum(plan.dense * C.values))
    return float(np.dot(plan.masses, C.values[plan.rows, plan.cols]))
