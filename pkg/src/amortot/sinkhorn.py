"""Log-domain Sinkhorn solver and the entropic (semi-)dual objective.

All exponential sums go through ``scipy.special.logsumexp`` so that small
regularizations (eps = 0.005 on unit-scale costs) never overflow.

The potential updates pair g with log(beta) and f with log(alpha), which is
the only assignment consistent with the vector shapes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from amortot.errors import ConfigError, EpsilonNonPositive, ShapeMismatch
from amortot.measures import (
    CostMatrix,
    DiscreteMeasure,
    Potentials,
    TransportPlan,
    plan_from_potentials,
)

__all__ = [
    "SinkhornConfig",
    "SinkhornResult",
    "sinkhorn_solve",
    "dual_objective",
    "g_from_f",
    "f_from_g",
    "semi_dual",
    "dual_objective_grad_f",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SinkhornConfig:
    epsilon: float
    max_iters: int = 10_000
    marginal_tol: float = 1e-9

    def __post_init__(self) -> None:
        _check_epsilon(self.epsilon)
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.marginal_tol <= 0:
            raise ConfigError(f"marginal_tol must be > 0, got {self.marginal_tol}")


@dataclass(frozen=True)
class SinkhornResult:
    potentials: Potentials
    plan: TransportPlan
    iterations_used: int
    final_marginal_error: float
    converged: bool


def _check_epsilon(epsilon: float) -> None:
    if not epsilon > 0:
        raise EpsilonNonPositive(f"epsilon must be > 0, got {epsilon}")


def _check_problem(f: np.ndarray | None, mu: DiscreteMeasure, nu: DiscreteMeasure, C: CostMatrix) -> None:
    if C.shape != (mu.n, nu.n):
        raise ShapeMismatch(f"cost matrix {C.shape} does not match measures ({mu.n}, {nu.n})")
    if f is not None and f.shape != (mu.n,):
        raise ShapeMismatch(f"f has shape {f.shape}, expected ({mu.n},)")


def _g_update(f, log_beta, C, epsilon):
    # g_j = eps log b_j - eps log sum_i exp((f_i - C_ij) / eps)
    return epsilon * (log_beta - logsumexp((f[..., :, None] - C) / epsilon, axis=-2))


def _f_update(g, log_alpha, C, epsilon):
    return epsilon * (log_alpha - logsumexp((g[..., None, :] - C) / epsilon, axis=-1))


def g_from_f(
    f: np.ndarray, mu: DiscreteMeasure, nu: DiscreteMeasure, C: CostMatrix, epsilon: float,
) -> np.ndarray:
    """Best response g to f: the induced plan has column sums exactly beta."""
    _check_epsilon(epsilon)
    f = np.asarray(f, dtype=np.float64)
    _check_problem(f, mu, nu, C)
    return _g_update(f, nu.log_weights(), C.values, epsilon)


def f_from_g(
    g: np.ndarray, mu: DiscreteMeasure, nu: DiscreteMeasure, C: CostMatrix, epsilon: float,
) -> np.ndarray:
    """Best response f to g: the induced plan has row sums exactly alpha."""
    _check_epsilon(epsilon)
    g = np.asarray(g, dtype=np.float64)
    _check_problem(None, mu, nu, C)
    if g.shape != (nu.n,):
        raise ShapeMismatch(f"g has shape {g.shape}, expected ({nu.n},)")
    return _f_update(g, mu.log_weights(), C.values, epsilon)


def dual_objective(
    f: np.ndarray,
    g: np.ndarray,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    C: CostMatrix,
    epsilon: float,
) -> float:
    """<f, alpha> + <g, beta> - eps * sum_ij exp((f_i + g_j - C_ij) / eps)."""
    _check_epsilon(epsilon)
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    _check_problem(f, mu, nu, C)
    if g.shape != (nu.n,):
        raise ShapeMismatch(f"g has shape {g.shape}, expected ({nu.n},)")
    mass = np.exp(logsumexp((f[:, None] + g[None, :] - C.values) / epsilon))
    return float(f @ mu.weights + g @ nu.weights - epsilon * mass)


def semi_dual(
    f: np.ndarray, mu: DiscreteMeasure, nu: DiscreteMeasure, C: CostMatrix, epsilon: float,
) -> float:
    """J(f) = dual_objective(f, g_from_f(f))."""
    return dual_objective(f, g_from_f(f, mu, nu, C, epsilon), mu, nu, C, epsilon)


def dual_objective_grad_f(
    f: np.ndarray, mu: DiscreteMeasure, nu: DiscreteMeasure, C: CostMatrix, epsilon: float,
) -> np.ndarray:
    """Gradient of the semi-dual J at f: alpha - P 1 with P built from (f, g_from_f(f)).

    The term through g vanishes because g is the exact best response.
    """
    f = np.asarray(f, dtype=np.float64)
    g = g_from_f(f, mu, nu, C, epsilon)
    log_rows = logsumexp((f[:, None] + g[None, :] - C.values) / epsilon, axis=1)
    return mu.weights - np.exp(log_rows)


def sinkhorn_solve(
    mu: DiscreteMeasure, nu: DiscreteMeasure, C: CostMatrix, cfg: SinkhornConfig,
) -> SinkhornResult:
    """Alternate g- and f-updates until both plan marginals are within tolerance.

    Running out of iterations is not an error: the result comes back with
    ``converged=False`` so that sweeps can count and skip it.
    """
    _check_problem(None, mu, nu, C)
    eps = cfg.epsilon
    log_alpha, log_beta = mu.log_weights(), nu.log_weights()
    costs = C.values
    f = np.zeros(mu.n)
    g = np.zeros(nu.n)
    error = np.inf
    iteration = 0
    for iteration in range(1, cfg.max_iters + 1):
        g = _g_update(f, log_beta, costs, eps)
        f = _f_update(g, log_alpha, costs, eps)
        # After the f-update every entry is <= 1, so exponentiating is safe.
        plan = np.exp((f[:, None] + g[None, :] - costs) / eps)
        row_err = np.abs(plan.sum(axis=1) - mu.weights).sum()
        col_err = np.abs(plan.sum(axis=0) - nu.weights).sum()
        error = float(max(row_err, col_err))
        if error <= cfg.marginal_tol:
            break
    potentials = Potentials(f, g, eps)
    final_error = error
    converged = final_error <= cfg.marginal_tol
    if converged:
        logger.debug("Sinkhorn converged in %d iterations (error %.3e)", iteration, final_error)
    else:
        logger.warning(
            "Sinkhorn stopped after %d iterations with marginal error %.3e (tol %.1e)",
            iteration, final_error, cfg.marginal_tol,
        )
    return SinkhornResult(
        potentials=potentials,
        plan=plan_from_potentials(potentials, C),
        iterations_used=iteration,
        final_marginal_error=final_error,
        converged=converged,
    )
