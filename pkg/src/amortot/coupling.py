"""Uses of a transport plan: displacement interpolation, barycentric mapping, coupling samples."""

from __future__ import annotations

import logging

import numpy as np

from amortot.errors import BadT, DegeneratePlan, InvalidSpec, ShapeMismatch, WrongCostFamily
from amortot.measures import CostFamily, CostSpec, DiscreteMeasure, Domain, TransportPlan
from amortot.seeding import counter_rng

__all__ = ["interpolate", "barycentric_map", "sample_coupling"]

logger = logging.getLogger(__name__)

MASS_FLOOR = 1e-12


def _check_plan(plan: TransportPlan, mu: DiscreteMeasure, nu: DiscreteMeasure) -> None:
    if plan.shape != (mu.n, nu.n):
        raise ShapeMismatch(f"plan {plan.shape} does not match measures ({mu.n}, {nu.n})")


def interpolate(
    plan: TransportPlan,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    t: float,
    cost: CostSpec | None = None,
    mass_floor: float = MASS_FLOOR,
) -> DiscreteMeasure:
    """Displacement interpolation at time ``t``.

    Each plan entry above ``mass_floor`` moves its mass to (1 - t) x_i + t y_j.
    Coinciding points are merged (first occurrence keeps its position in the
    output) and the result is renormalized. Measures on the unit sphere are
    rejected whatever ``cost`` says: straight chords leave the sphere.
    """
    cost = cost or CostSpec()
    if cost.family is not CostFamily.SQ_EUCLIDEAN:
        raise WrongCostFamily(f"interpolation needs the squared Euclidean cost, got {cost.family.value}")
    if Domain.UNIT_SPHERE in (mu.domain, nu.domain):
        raise WrongCostFamily("interpolation is not defined for unit-sphere measures (geodesic cost)")
    if not 0.0 <= t <= 1.0:
        raise BadT(f"t must lie in [0, 1], got {t}")
    _check_plan(plan, mu, nu)
    triples = [(i, j, w) for i, j, w in plan.triples() if w > mass_floor]
    if not triples:
        raise DegeneratePlan(f"no plan entry exceeds the mass floor {mass_floor:g}")
    rows = np.array([i for i, _, _ in triples])
    cols = np.array([j for _, j, _ in triples])
    masses = np.array([w for _, _, w in triples])
    points = (1.0 - t) * mu.atoms[rows] + t * nu.atoms[cols]
    unique, first, inverse = np.unique(points, axis=0, return_index=True, return_inverse=True)
    merged = np.bincount(inverse.reshape(-1), weights=masses, minlength=unique.shape[0])
    order = np.argsort(first)
    return DiscreteMeasure(unique[order], merged[order], Domain.EUCLIDEAN)


def barycentric_map(plan: TransportPlan, mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
    """Image of every source atom: the plan-weighted average of the target atoms.

    Rows without mass are left where they are.
    """
    _check_plan(plan, mu, nu)
    dense = plan.to_dense()
    row_mass = dense.sum(axis=1)
    empty = row_mass <= 0.0
    mapped = (dense @ nu.atoms) / np.where(empty, 1.0, row_mass)[:, None]
    mapped[empty] = mu.atoms[empty]
    return mapped


def sample_coupling(plan: TransportPlan, k: int, seed: int = 0) -> list[tuple[int, int]]:
    """k i.i.d. index pairs drawn from the plan by inverse CDF on its flattened entries."""
    if k < 1:
        raise InvalidSpec(f"sample count must be >= 1, got {k}")
    dense = plan.to_dense()
    cdf = np.cumsum(dense.ravel())
    total = float(cdf[-1]) if cdf.size else 0.0
    if total <= 0.0:
        raise DegeneratePlan("plan has zero total mass")
    if abs(total - 1.0) > 1e-6:
        logger.warning("Sampling from a plan with total mass %.6f; probabilities are renormalized", total)
    u = counter_rng(seed).uniform(0.0, total, size=k)
    flat = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)
    rows, cols = np.unravel_index(flat, dense.shape)
    return [(int(i), int(j)) for i, j in zip(rows, cols)]
