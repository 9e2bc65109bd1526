"""Training-free sliced baseline (random-search min-SWGG).

Each projection yields a monotone 1D coupling; lifted back to the original
atom indices it is a feasible plan for the full problem. The baseline keeps
the direction whose lifted plan has the lowest true cost.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from amortot.measures import (
    CostSpec,
    DiscreteMeasure,
    TransportPlan,
    build_cost_matrix,
    transport_cost,
)
from amortot.ot1d import Projected1DMeasure, solve_1d
from amortot.slicing import ProjectionSet, _check_compatible, _positions, slice_cost

__all__ = ["LiftedPlanResult", "min_swgg_plan", "lifted_costs"]

logger = logging.getLogger(__name__)

VARIANT = "random-search"


@dataclass(frozen=True, eq=False)
class LiftedPlanResult:
    plan: TransportPlan
    chosen_theta_index: int
    lifted_cost: float


def _lifted_plans(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec, pset: ProjectionSet):
    cost.check_domains(mu, nu)
    _check_compatible(pset, mu)
    _check_compatible(pset, nu)
    h = slice_cost(cost, pset.family)
    pos_mu = _positions(pset, mu.atoms, pset.thetas)
    pos_nu = _positions(pset, nu.atoms, pset.thetas)
    for l in range(pset.L):
        yield solve_1d(
            Projected1DMeasure(pos_mu[:, l], mu.weights),
            Projected1DMeasure(pos_nu[:, l], nu.weights),
            h,
        ).plan


def lifted_costs(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec, pset: ProjectionSet) -> np.ndarray:
    """True cost <C, plan_l> of every lifted slice plan."""
    C = build_cost_matrix(mu, nu, cost)
    return np.array([transport_cost(plan, C) for plan in _lifted_plans(mu, nu, cost, pset)])


def min_swgg_plan(
    mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec, pset: ProjectionSet,
) -> LiftedPlanResult:
    """Best lifted plan over the directions of ``pset``; ties go to the lowest index."""
    C = build_cost_matrix(mu, nu, cost)
    best_index, best_cost, best_plan = -1, np.inf, None
    for l, plan in enumerate(_lifted_plans(mu, nu, cost, pset)):
        lifted = transport_cost(plan, C)
        if lifted < best_cost:
            best_index, best_cost, best_plan = l, lifted, plan
    logger.debug("min-SWGG picked direction %d of %d (cost %.6e)", best_index, pset.L, best_cost)
    return LiftedPlanResult(best_plan, best_index, float(best_cost))
