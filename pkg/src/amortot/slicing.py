"""Projection families and the sliced-potential feature matrix.

A projection set holds L unit vectors. Linear slicing projects atoms onto
each direction; stereographic slicing (sphere data) reflects the sphere so the
direction becomes the north pole, projects stereographically onto the
equatorial plane and keeps the signed radial coordinate.

Column l of the feature matrix is the exact 1D Kantorovich potential of the
l-th slice read at the source atoms, shifted to alpha-weighted mean zero.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from amortot.errors import BadDimension, DimensionMismatch, DomainMismatch
from amortot.measures import CostFamily, CostSpec, DiscreteMeasure, Domain
from amortot.ot1d import OneDCost, OneDSolution, Projected1DMeasure, solve_1d
from amortot.seeding import counter_rng

__all__ = [
    "ProjectionFamily",
    "ProjectionSet",
    "SlicedFeatures",
    "sample_projections",
    "project",
    "slice_cost",
    "sliced_features",
]

logger = logging.getLogger(__name__)

POLE_SENTINEL = 1e12
POLE_TOL = 1e-14
UNIT_TOL = 1e-9


class ProjectionFamily(enum.Enum):
    LINEAR = "linear"
    STEREOGRAPHIC = "stereographic"


@dataclass(frozen=True, eq=False)
class ProjectionSet:
    family: ProjectionFamily
    thetas: np.ndarray
    seed: int = 0

    def __post_init__(self) -> None:
        thetas = np.array(self.thetas, dtype=np.float64)
        if thetas.ndim != 2 or thetas.shape[0] < 1:
            raise BadDimension(f"thetas must be an L x d matrix with L >= 1, got {thetas.shape}")
        norms = np.linalg.norm(thetas, axis=1)
        if np.max(np.abs(norms - 1.0)) > UNIT_TOL:
            raise BadDimension("every projection direction must have unit norm")
        family = ProjectionFamily(self.family)
        if family is ProjectionFamily.STEREOGRAPHIC and thetas.shape[1] < 3:
            raise BadDimension("stereographic slicing needs d >= 3")
        thetas.setflags(write=False)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "family", family)

    @property
    def L(self) -> int:
        return self.thetas.shape[0]

    @property
    def dim(self) -> int:
        return self.thetas.shape[1]

    def prefix(self, count: int) -> ProjectionSet:
        """First ``count`` directions; equal to resampling with L=count."""
        if not 1 <= count <= self.L:
            raise BadDimension(f"prefix length {count} outside 1..{self.L}")
        return ProjectionSet(self.family, self.thetas[:count], self.seed)


@dataclass(frozen=True, eq=False)
class SlicedFeatures:
    X: np.ndarray
    per_slice_solutions: tuple[OneDSolution, ...] | None = None


def sample_projections(family: ProjectionFamily, L: int, d: int, seed: int) -> ProjectionSet:
    """L directions uniform on the unit sphere, one Philox stream per index."""
    family = ProjectionFamily(family)
    if L < 1 or d < 1:
        raise BadDimension(f"need L >= 1 and d >= 1, got L={L}, d={d}")
    if family is ProjectionFamily.STEREOGRAPHIC and d < 3:
        raise BadDimension(f"stereographic slicing needs d >= 3, got d={d}")
    thetas = np.empty((L, d))
    for l in range(L):
        rng = counter_rng(seed, l)
        v = rng.standard_normal(d)
        norm = np.linalg.norm(v)
        while norm == 0.0:
            v = rng.standard_normal(d)
            norm = np.linalg.norm(v)
        thetas[l] = v / norm
    return ProjectionSet(family, thetas, seed)


def _check_compatible(pset: ProjectionSet, measure: DiscreteMeasure) -> None:
    if measure.dim != pset.dim:
        raise DimensionMismatch(f"atoms have d={measure.dim}, projections d={pset.dim}")
    if pset.family is ProjectionFamily.STEREOGRAPHIC and measure.domain is not Domain.UNIT_SPHERE:
        raise DomainMismatch("stereographic slicing needs unit-sphere measures")


def _positions(pset: ProjectionSet, atoms: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """Projected coordinates, one column per direction."""
    if pset.family is ProjectionFamily.LINEAR:
        return atoms @ thetas.T
    # Householder reflection u = theta - e_d sends theta to the pole e_d.
    u = thetas.copy()
    u[:, -1] -= 1.0
    u_sq = np.einsum("ld,ld->l", u, u)
    scale = np.divide(2.0, u_sq, out=np.zeros_like(u_sq), where=u_sq > 0.0)
    s = (atoms @ u.T) * scale
    z_last = atoms[:, -1:] - s * u[:, -1]
    z_first = atoms[:, :1] - s * u[:, 0]
    sq_norm = np.einsum("nd,nd->n", atoms, atoms)[:, None]
    height = 1.0 - z_last
    at_pole = height <= POLE_TOL
    with np.errstate(divide="ignore", invalid="ignore"):
        radial = np.sqrt(np.maximum(sq_norm - z_last * z_last, 0.0)) / height
    signed = np.where(z_first < 0.0, -radial, radial)
    return np.where(at_pole, POLE_SENTINEL, signed)


def project(pset: ProjectionSet, l: int, measure: DiscreteMeasure) -> Projected1DMeasure:
    """Push ``measure`` through the l-th projection; weights pass through."""
    _check_compatible(pset, measure)
    positions = _positions(pset, measure.atoms, pset.thetas[l:l + 1])[:, 0]
    return Projected1DMeasure(positions, measure.weights)


def slice_cost(cost: CostSpec, family: ProjectionFamily) -> OneDCost:
    """1D ground cost used on every slice.

    Stereographic slices compare radial coordinates with the squared
    difference, not the geodesic distance.
    """
    if family is ProjectionFamily.LINEAR and cost.family is CostFamily.EUCLIDEAN:
        return OneDCost.ABS
    return OneDCost.SQUARE


def sliced_features(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    cost: CostSpec,
    pset: ProjectionSet,
    *,
    keep_solutions: bool = False,
) -> SlicedFeatures:
    """n x L matrix of re-centered sliced potentials at the atoms of ``mu``."""
    cost.check_domains(mu, nu)
    _check_compatible(pset, mu)
    _check_compatible(pset, nu)
    h = slice_cost(cost, pset.family)
    pos_mu = _positions(pset, mu.atoms, pset.thetas)
    pos_nu = _positions(pset, nu.atoms, pset.thetas)
    X = np.empty((mu.n, pset.L))
    solutions = []
    for l in range(pset.L):
        solution = solve_1d(
            Projected1DMeasure(pos_mu[:, l], mu.weights),
            Projected1DMeasure(pos_nu[:, l], nu.weights),
            h,
        )
        X[:, l] = solution.f - solution.f @ mu.weights
        if keep_solutions:
            solutions.append(solution)
    return SlicedFeatures(X, tuple(solutions) if keep_solutions else None)
