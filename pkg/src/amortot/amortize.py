"""Amortized potentials: f_hat(x) = sum_l omega_l * sliced_potential_l(x).

Two ways to fit omega over a training set of measure pairs:

- RA (regression): ridge least squares from sliced features to converged
  Sinkhorn potentials, solved in closed form through Cholesky.
- OA (objective): Adam ascent on the mean entropic semi-dual, with the
  feature matrices computed once per pair and cached.

Either way, a plan is recovered by completing f_hat with its exact
best-response g and exponentiating.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from amortot.errors import (
    ConfigError,
    InvalidSpec,
    NonFinite,
    ShapeMismatch,
    SingularGram,
    SinkhornNotConverged,
)
from amortot.measures import (
    CostMatrix,
    CostSpec,
    DiscreteMeasure,
    Potentials,
    TransportPlan,
    build_cost_matrix,
    plan_from_potentials,
)
from amortot.parallel import ordered_map
from amortot.seeding import counter_rng
from amortot.sinkhorn import SinkhornConfig, SinkhornResult, g_from_f, sinkhorn_solve
from amortot.slicing import ProjectionSet, sliced_features

__all__ = [
    "TrainingMethod",
    "AmortizedModel",
    "TrainingSet",
    "RAAccumulator",
    "Adam",
    "PairProblem",
    "SemiDualObjective",
    "prepare_problems",
    "ra_accumulate",
    "ra_fit",
    "oa_fit",
    "predict_potential",
    "predict_plan",
    "default_batch",
]

logger = logging.getLogger(__name__)

CHOLESKY_JITTER = 1e-10
FULL_BATCH_LIMIT = 64
# Stream index for OA mini-batch shuffling, kept apart from projection streams.
_SHUFFLE_STREAM = 0x0A


class TrainingMethod(enum.Enum):
    RA = "ra"
    OA = "oa"


@dataclass(frozen=True, eq=False)
class AmortizedModel:
    omega: np.ndarray
    pset: ProjectionSet
    cost: CostSpec
    epsilon: float
    ridge_lambda: float
    trained_by: TrainingMethod
    pairs_used: int = 0
    wall_seconds: float = 0.0

    def __post_init__(self) -> None:
        omega = np.array(self.omega, dtype=np.float64).reshape(-1)
        if omega.size != self.pset.L:
            raise ShapeMismatch(f"omega has {omega.size} entries for L={self.pset.L}")
        if not np.all(np.isfinite(omega)):
            raise NonFinite("model coefficients must be finite")
        if not self.epsilon > 0:
            raise ConfigError(f"model epsilon must be > 0, got {self.epsilon}")
        omega.setflags(write=False)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "trained_by", TrainingMethod(self.trained_by))


@dataclass(eq=False)
class TrainingSet:
    """Measure pairs sharing one cost family and one regularization."""

    pairs: list[tuple[DiscreteMeasure, DiscreteMeasure]]
    cost: CostSpec
    epsilon: float

    def __post_init__(self) -> None:
        if not self.pairs:
            raise InvalidSpec("a training set needs at least one pair")
        if not self.epsilon > 0:
            raise InvalidSpec(f"training epsilon must be > 0, got {self.epsilon}")
        for mu, nu in self.pairs:
            self.cost.check_domains(mu, nu)

    def __len__(self) -> int:
        return len(self.pairs)

    def head(self, count: int) -> TrainingSet:
        """The first ``count`` pairs."""
        if not 1 <= count <= len(self.pairs):
            raise InvalidSpec(f"cannot take {count} of {len(self.pairs)} pairs")
        return TrainingSet(self.pairs[:count], self.cost, self.epsilon)


@dataclass
class RAAccumulator:
    """Running sums of X^T X and X^T y over training pairs."""

    L: int
    gram: np.ndarray = field(init=False)
    moment: np.ndarray = field(init=False)
    pairs_seen: int = 0

    def __post_init__(self) -> None:
        self.gram = np.zeros((self.L, self.L))
        self.moment = np.zeros(self.L)

    def add(self, X: np.ndarray, y: np.ndarray) -> None:
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.L or y.shape != (X.shape[0],):
            raise ShapeMismatch(f"features {X.shape} / responses {y.shape} do not fit L={self.L}")
        self.gram += X.T @ X
        self.moment += X.T @ y
        self.pairs_seen += 1

    def system(self, ridge_lambda: float) -> np.ndarray:
        """Left-hand side sum X^T X + lambda * M * I."""
        gram = 0.5 * (self.gram + self.gram.T)
        return gram + ridge_lambda * self.pairs_seen * np.eye(self.L)

    def solve(self, ridge_lambda: float) -> np.ndarray:
        if ridge_lambda < 0:
            raise ConfigError(f"ridge lambda must be >= 0, got {ridge_lambda}")
        lhs = self.system(ridge_lambda)
        try:
            factor = linalg.cho_factor(lhs, lower=True)
        except linalg.LinAlgError:
            logger.warning("Gram matrix not positive definite; retrying with jitter %.0e", CHOLESKY_JITTER)
            try:
                factor = linalg.cho_factor(lhs + CHOLESKY_JITTER * np.eye(self.L), lower=True)
            except linalg.LinAlgError as e:
                raise SingularGram("normal equations are singular even with jitter") from e
        return linalg.cho_solve(factor, self.moment)

    def residual(self, omega: np.ndarray, ridge_lambda: float) -> float:
        return float(np.linalg.norm(self.system(ridge_lambda) @ omega - self.moment))


class Adam:
    """Adam in ascent form (parameters move along the gradient)."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.momentum_1: np.ndarray | float = 0.0
        self.momentum_2: np.ndarray | float = 0.0
        self.t = 0

    def ascend(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.momentum_1 = self.beta1 * self.momentum_1 + (1.0 - self.beta1) * grad
        self.momentum_2 = self.beta2 * self.momentum_2 + (1.0 - self.beta2) * grad * grad
        m_hat = self.momentum_1 / (1.0 - self.beta1 ** self.t)
        v_hat = self.momentum_2 / (1.0 - self.beta2 ** self.t)
        return params + self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# Per-pair preparation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PairProblem:
    """Everything OA needs about one pair: cost matrix and cached features."""

    mu: DiscreteMeasure
    nu: DiscreteMeasure
    C: CostMatrix
    X: np.ndarray


def prepare_problems(
    train: TrainingSet, pset: ProjectionSet, workers: int | None = None,
) -> list[PairProblem]:
    def prepare(pair):
        mu, nu = pair
        return PairProblem(
            mu, nu,
            build_cost_matrix(mu, nu, train.cost),
            sliced_features(mu, nu, train.cost, pset).X,
        )

    return ordered_map(prepare, train.pairs, workers)


class _ShapeGroup:
    """Pairs of one (n, m) shape stacked along a leading batch axis."""

    def __init__(self, problems: list[PairProblem]):
        self.C = np.stack([p.C.values for p in problems])
        self.X = np.stack([p.X for p in problems])
        self.alpha = np.stack([p.mu.weights for p in problems])
        self.beta = np.stack([p.nu.weights for p in problems])
        self.log_beta = np.log(self.beta)

    def evaluate(self, omega: np.ndarray, members: np.ndarray, epsilon: float) -> tuple[np.ndarray, np.ndarray]:
        """Per-pair semi-dual values and summed omega-gradient.

        With g the exact best response to f, the plan's total mass is sum(beta),
        so only one exponentiation of the (batch, n, m) kernel is needed: it
        yields both the column log-sum-exp for g and the plan's row sums.
        """
        C, X = self.C[members], self.X[members]
        alpha, beta = self.alpha[members], self.beta[members]
        f = X @ omega
        kernel = f[:, :, None] - C
        kernel /= epsilon
        shift = kernel.max(axis=1)
        kernel -= shift[:, None, :]
        np.exp(kernel, out=kernel)
        col_sums = kernel.sum(axis=1)
        g = epsilon * (self.log_beta[members] - shift - np.log(col_sums))
        values = (
            np.einsum("bn,bn->b", f, alpha) + np.einsum("bm,bm->b", g, beta)
            - epsilon * beta.sum(axis=1)
        )
        # plan[i, j] = kernel[i, j] * beta[j] / col_sums[j]
        row_sums = np.matmul(kernel, (beta / col_sums)[:, :, None])[:, :, 0]
        return values, np.einsum("bnl,bn->l", X, alpha - row_sums)


class SemiDualObjective:
    """Mean semi-dual J(X omega) over a subset of pairs, with its omega-gradient."""

    def __init__(self, problems: list[PairProblem], epsilon: float):
        if not problems:
            raise InvalidSpec("objective needs at least one pair")
        self.epsilon = epsilon
        self.size = len(problems)
        by_shape: dict[tuple[int, int], list[int]] = {}
        for index, problem in enumerate(problems):
            by_shape.setdefault(problem.C.shape, []).append(index)
        self._groups = []
        self._location = np.empty((self.size, 2), dtype=np.int64)
        for group_id, indices in enumerate(by_shape.values()):
            self._groups.append(_ShapeGroup([problems[i] for i in indices]))
            for position, i in enumerate(indices):
                self._location[i] = (group_id, position)

    def __call__(self, omega: np.ndarray, indices: np.ndarray | None = None) -> tuple[float, np.ndarray]:
        if indices is None:
            indices = np.arange(self.size)
        indices = np.asarray(indices)
        total = 0.0
        grad = np.zeros_like(omega, dtype=np.float64)
        for group_id, group in enumerate(self._groups):
            members = self._location[indices][self._location[indices, 0] == group_id, 1]
            if members.size == 0:
                continue
            values, group_grad = group.evaluate(omega, members, self.epsilon)
            total += float(values.sum())
            grad += group_grad
        return total / indices.size, grad / indices.size


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def ra_accumulate(
    train: TrainingSet,
    pset: ProjectionSet,
    *,
    sinkhorn_cfg: SinkhornConfig | None = None,
    truths: list[SinkhornResult] | None = None,
    workers: int | None = None,
) -> tuple[RAAccumulator, int]:
    """Normal-equation sums over the training pairs and the number skipped.

    ``truths`` may carry precomputed Sinkhorn solutions, one per pair.
    """
    cfg = sinkhorn_cfg or SinkhornConfig(train.epsilon)
    if truths is not None and len(truths) != len(train):
        raise ShapeMismatch(f"{len(truths)} ground truths for {len(train)} pairs")

    def prepare(index):
        mu, nu = train.pairs[index]
        if truths is not None:
            truth = truths[index]
        else:
            truth = sinkhorn_solve(mu, nu, build_cost_matrix(mu, nu, train.cost), cfg)
        if not truth.converged:
            return None
        f_star = truth.potentials.f
        return sliced_features(mu, nu, train.cost, pset).X, f_star - f_star @ mu.weights

    accumulator = RAAccumulator(pset.L)
    skipped = 0
    for index, prepared in enumerate(ordered_map(prepare, range(len(train)), workers)):
        if prepared is None:
            skipped += 1
            logger.warning("Skipping training pair %d: Sinkhorn did not converge", index)
            continue
        accumulator.add(*prepared)
    return accumulator, skipped


def ra_fit(
    train: TrainingSet,
    pset: ProjectionSet,
    ridge_lambda: float = 1e-3,
    *,
    sinkhorn_cfg: SinkhornConfig | None = None,
    truths: list[SinkhornResult] | None = None,
    workers: int | None = None,
) -> AmortizedModel:
    """Ridge regression of re-centered Sinkhorn potentials on sliced features.

    Solves (sum X^T X + lambda M I) omega = sum X^T y. Pairs whose ground
    truth does not converge are skipped and counted.
    """
    if ridge_lambda < 0:
        raise ConfigError(f"ridge lambda must be >= 0, got {ridge_lambda}")
    cfg = sinkhorn_cfg or SinkhornConfig(train.epsilon)
    started = time.perf_counter()
    accumulator, skipped = ra_accumulate(
        train, pset, sinkhorn_cfg=cfg, truths=truths, workers=workers,
    )
    if accumulator.pairs_seen == 0:
        raise SinkhornNotConverged(f"none of the {len(train)} training pairs converged")
    omega = accumulator.solve(ridge_lambda)
    elapsed = time.perf_counter() - started
    logger.info(
        "RA fit: L=%d, %d pairs used, %d skipped, %.2fs",
        pset.L, accumulator.pairs_seen, skipped, elapsed,
    )
    return AmortizedModel(
        omega=omega,
        pset=pset,
        cost=train.cost,
        epsilon=cfg.epsilon,
        ridge_lambda=ridge_lambda,
        trained_by=TrainingMethod.RA,
        pairs_used=accumulator.pairs_seen,
        wall_seconds=elapsed,
    )


def default_batch(pairs: int) -> int:
    return pairs if pairs <= FULL_BATCH_LIMIT else FULL_BATCH_LIMIT


def oa_fit(
    train: TrainingSet,
    pset: ProjectionSet,
    epsilon: float | None = None,
    lr: float = 1e-3,
    iters: int = 5000,
    batch: int | None = None,
    *,
    seed: int = 0,
    workers: int | None = None,
) -> AmortizedModel:
    """Adam ascent of the mean semi-dual over omega, starting from zero.

    Returns the best iterate seen (full-training-set objective), which is
    never worse than the zero start.
    """
    epsilon = train.epsilon if epsilon is None else epsilon
    pairs = len(train)
    batch = default_batch(pairs) if batch is None else batch
    if iters < 1:
        raise ConfigError(f"iters must be >= 1, got {iters}")
    if not lr > 0:
        raise ConfigError(f"learning rate must be > 0, got {lr}")
    if not 1 <= batch <= pairs:
        raise ConfigError(f"batch must be in 1..{pairs}, got {batch}")
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    started = time.perf_counter()

    objective = SemiDualObjective(prepare_problems(train, pset, workers), epsilon)
    optimizer = Adam(lr=lr)
    omega = np.zeros(pset.L)
    full_batch = batch == pairs
    best_value, best_omega = -np.inf, omega
    initial_value = None
    order = np.arange(pairs)
    cursor = pairs
    epoch = 0

    def consider(value: float, candidate: np.ndarray) -> None:
        nonlocal best_value, best_omega
        if value > best_value:
            best_value, best_omega = value, candidate.copy()

    if not full_batch:
        initial_value = objective(omega)[0]
        consider(initial_value, omega)

    for step in range(iters):
        if full_batch:
            value, grad = objective(omega)
            if initial_value is None:
                initial_value = value
            consider(value, omega)
        else:
            if cursor + batch > pairs:
                order = counter_rng(seed, _SHUFFLE_STREAM, epoch).permutation(pairs)
                cursor = 0
                epoch += 1
            value, grad = objective(omega, order[cursor:cursor + batch])
            cursor += batch
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            raise NonFinite(f"semi-dual objective or gradient not finite at step {step} (value {value})")
        omega = optimizer.ascend(omega, grad)
        if not full_batch and cursor + batch > pairs:
            consider(objective(omega)[0], omega)
        if step % 500 == 0:
            logger.debug("OA step %d: batch objective %.6e", step, value)

    final_value = objective(omega)[0]
    if not np.isfinite(final_value):
        raise NonFinite("final semi-dual objective is not finite")
    consider(final_value, omega)
    elapsed = time.perf_counter() - started
    logger.info(
        "OA fit: L=%d, %d pairs, %d iterations, objective %.6e -> %.6e, %.2fs",
        pset.L, pairs, iters, initial_value, best_value, elapsed,
    )
    return AmortizedModel(
        omega=best_omega,
        pset=pset,
        cost=train.cost,
        epsilon=epsilon,
        ridge_lambda=0.0,
        trained_by=TrainingMethod.OA,
        pairs_used=pairs,
        wall_seconds=elapsed,
    )


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def predict_potential(model: AmortizedModel, mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
    """f_hat = X omega at the atoms of ``mu``."""
    return sliced_features(mu, nu, model.cost, model.pset).X @ model.omega


def predict_plan(
    model: AmortizedModel,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    C: CostMatrix | None = None,
) -> TransportPlan:
    """Plan from (f_hat, g_from_f(f_hat)); its column sums equal beta."""
    if C is None:
        C = build_cost_matrix(mu, nu, model.cost)
    f_hat = predict_potential(model, mu, nu)
    g_hat = g_from_f(f_hat, mu, nu, C, model.epsilon)
    return plan_from_potentials(Potentials(f_hat, g_hat, model.epsilon), C)
