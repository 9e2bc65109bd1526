"""Synthetic task families and loaders for user-supplied measures.

Three seeded meta-distributions:

- ``grid2d``: images on a fixed k x k grid whose intensities are mixtures of
  Gaussian bumps (handwritten-digit stand-in).
- ``sphere``: supply on a few spherical caps against demand from a
  von Mises-Fisher mixture (landmass vs. population stand-in).
- ``color``: small colour palettes in the RGB cube with Dirichlet weights.

Pair ``i`` of a spec is drawn from its own counter stream (seed, i), so a
pair does not depend on how many others are generated.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from amortot.amortize import TrainingSet
from amortot.errors import DomainMismatch, InvalidSpec
from amortot.formats import read_measure, write_measure
from amortot.measures import CostFamily, CostSpec, DiscreteMeasure, Domain
from amortot.parallel import ordered_map
from amortot.seeding import counter_rng

__all__ = [
    "TaskFamily",
    "TaskSpec",
    "generate",
    "split_indices",
    "check_disjoint",
    "train_test_split",
    "load_measures",
    "save_training_set",
    "load_training_set",
]

logger = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-8
SPHERE_DIM = 3
MANIFEST = "manifest.json"


class TaskFamily(enum.Enum):
    GRID2D = "grid2d"
    SPHERE_SUPPLY_DEMAND = "sphere"
    COLOR_CLOUDS = "color"


DEFAULT_EPSILON = {
    TaskFamily.GRID2D: 0.1,
    TaskFamily.SPHERE_SUPPLY_DEMAND: 0.5,
    TaskFamily.COLOR_CLOUDS: 0.005,
}

DEFAULT_COST = {
    TaskFamily.GRID2D: CostFamily.SQ_EUCLIDEAN,
    TaskFamily.SPHERE_SUPPLY_DEMAND: CostFamily.SPHERICAL_GEODESIC,
    TaskFamily.COLOR_CLOUDS: CostFamily.SQ_EUCLIDEAN,
}


@dataclass(frozen=True)
class TaskSpec:
    family: TaskFamily
    n: int
    m: int | None = None  # defaults to n (10n for sphere)
    epsilon: float | None = None  # per-family default
    cost: CostSpec | None = None  # per-family default
    seed: int = 0
    count: int = 100

    def __post_init__(self) -> None:
        family = TaskFamily(self.family)
        object.__setattr__(self, "family", family)
        if self.m is None:
            m = 10 * self.n if family is TaskFamily.SPHERE_SUPPLY_DEMAND else self.n
            object.__setattr__(self, "m", m)
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", DEFAULT_EPSILON[family])
        if self.cost is None:
            object.__setattr__(self, "cost", CostSpec(DEFAULT_COST[family]))
        self._validate()

    def _validate(self) -> None:
        if self.n < 1 or self.m < 1:
            raise InvalidSpec(f"sizes must be positive, got n={self.n}, m={self.m}")
        if self.count < 1:
            raise InvalidSpec(f"count must be >= 1, got {self.count}")
        if not self.epsilon > 0:
            raise InvalidSpec(f"epsilon must be > 0, got {self.epsilon}")
        if self.seed < 0:
            raise InvalidSpec(f"seed must be non-negative, got {self.seed}")
        geodesic = self.cost.family is CostFamily.SPHERICAL_GEODESIC
        if self.family is TaskFamily.SPHERE_SUPPLY_DEMAND and not geodesic:
            raise InvalidSpec("sphere tasks use the geodesic cost")
        if self.family is not TaskFamily.SPHERE_SUPPLY_DEMAND and geodesic:
            raise InvalidSpec(f"geodesic cost needs sphere data, not {self.family.value}")
        if self.family is TaskFamily.GRID2D:
            k = math.isqrt(self.n)
            if k * k != self.n or self.m != self.n:
                raise InvalidSpec(f"grid2d needs n = m = k^2, got n={self.n}, m={self.m}")
        if self.family is TaskFamily.COLOR_CLOUDS and self.m != self.n:
            raise InvalidSpec(f"color tasks use n = m = K, got n={self.n}, m={self.m}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["family"] = self.family.value
        out["cost"] = self.cost.family.value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> TaskSpec:
        data = dict(data)
        data["cost"] = CostSpec(CostFamily(data["cost"]))
        return cls(**data)


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def _floored(weights: np.ndarray) -> np.ndarray:
    weights = weights / weights.sum()
    weights = np.maximum(weights, WEIGHT_FLOOR)
    return weights / weights.sum()


def _grid_atoms(n: int) -> np.ndarray:
    k = math.isqrt(n)
    axis = np.linspace(0.0, 1.0, k)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def _bump_image(rng: np.random.Generator, atoms: np.ndarray) -> np.ndarray:
    bumps = rng.integers(2, 5)
    centers = rng.uniform(0.15, 0.85, size=(bumps, 2))
    scales = rng.uniform(0.05, 0.2, size=bumps)
    heights = rng.uniform(0.5, 1.0, size=bumps)
    sq_dist = ((atoms[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return _floored((heights * np.exp(-sq_dist / (2.0 * scales ** 2))).sum(axis=1))


def _grid_pair(spec: TaskSpec, rng: np.random.Generator):
    atoms = _grid_atoms(spec.n)
    return (
        DiscreteMeasure(atoms, _bump_image(rng, atoms)),
        DiscreteMeasure(atoms, _bump_image(rng, atoms)),
    )


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _uniform_sphere(rng: np.random.Generator, count: int) -> np.ndarray:
    return _unit(rng.standard_normal((count, SPHERE_DIM)))


def _cap_points(rng: np.random.Generator, count: int) -> np.ndarray:
    """Area-uniform points restricted to the union of 2-3 random caps."""
    caps = rng.integers(2, 4)
    centers = _uniform_sphere(rng, caps)
    cos_radius = np.cos(rng.uniform(0.5, 1.0, size=caps))
    found: list[np.ndarray] = []
    total = 0
    while total < count:
        batch = _uniform_sphere(rng, 4 * count)
        inside = np.any(batch @ centers.T >= cos_radius, axis=1)
        found.append(batch[inside])
        total += int(inside.sum())
    return np.concatenate(found)[:count]


def _vmf_sample(rng: np.random.Generator, mean: np.ndarray, kappa: float, count: int) -> np.ndarray:
    # On S^2 Wood's rejection step has an exact inverse-CDF form.
    u = rng.uniform(size=count)
    w = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa
    tangent = rng.standard_normal((count, SPHERE_DIM))
    tangent -= np.outer(tangent @ mean, mean)
    tangent = _unit(tangent)
    points = w[:, None] * mean + np.sqrt(np.clip(1.0 - w * w, 0.0, None))[:, None] * tangent
    return _unit(points)


def _vmf_density(points: np.ndarray, means: np.ndarray, kappas: np.ndarray, mix: np.ndarray) -> np.ndarray:
    # kappa / (2 pi (1 - e^{-2 kappa})) * exp(kappa (<mu, x> - 1)) avoids sinh overflow.
    norm = kappas / (2.0 * np.pi * (1.0 - np.exp(-2.0 * kappas)))
    return (mix * norm * np.exp(kappas * (points @ means.T - 1.0))).sum(axis=1)


def _sphere_pair(spec: TaskSpec, rng: np.random.Generator):
    supply = _cap_points(rng, spec.n)
    components = rng.integers(3, 7)
    means = _uniform_sphere(rng, components)
    kappas = rng.uniform(2.0, 10.0, size=components)
    mix = rng.dirichlet(np.ones(components))
    counts = rng.multinomial(spec.m, mix)
    demand = np.concatenate([
        _vmf_sample(rng, means[c], kappas[c], counts[c]) for c in range(components)
    ])
    weights = _floored(_vmf_density(demand, means, kappas, mix))
    return (
        DiscreteMeasure.uniform(supply, Domain.UNIT_SPHERE),
        DiscreteMeasure(demand, weights, Domain.UNIT_SPHERE),
    )


def _palette(rng: np.random.Generator, k: int) -> DiscreteMeasure:
    return DiscreteMeasure(rng.uniform(0.0, 1.0, size=(k, 3)), _floored(rng.dirichlet(np.ones(k))))


def _color_pair(spec: TaskSpec, rng: np.random.Generator):
    return _palette(rng, spec.n), _palette(rng, spec.m)


_GENERATORS = {
    TaskFamily.GRID2D: _grid_pair,
    TaskFamily.SPHERE_SUPPLY_DEMAND: _sphere_pair,
    TaskFamily.COLOR_CLOUDS: _color_pair,
}


def generate(spec: TaskSpec, workers: int | None = None) -> TrainingSet:
    """All ``spec.count`` pairs of the task, deterministic in (seed, index)."""
    make = _GENERATORS[spec.family]
    pairs = ordered_map(lambda index: make(spec, counter_rng(spec.seed, index)), range(spec.count), workers)
    logger.info(
        "Generated %d %s pairs (n=%d, m=%d, seed=%d)",
        spec.count, spec.family.value, spec.n, spec.m, spec.seed,
    )
    return TrainingSet(pairs, spec.cost, spec.epsilon)


# ---------------------------------------------------------------------------
# Splits and files
# ---------------------------------------------------------------------------

def split_indices(count: int, train_fraction: float = 0.7) -> tuple[range, range]:
    """First ``train_fraction`` of the pair indices for training, the rest for testing."""
    if not 0.0 < train_fraction < 1.0:
        raise InvalidSpec(f"train fraction must be in (0, 1), got {train_fraction}")
    cut = int(math.floor(train_fraction * count + 1e-9))
    if cut < 1 or cut >= count:
        raise InvalidSpec(f"a {train_fraction:g} split of {count} pairs leaves one side empty")
    return range(0, cut), range(cut, count)


def check_disjoint(train_idx: range, test_idx: range) -> None:
    """Raise InvalidSpec if any pair index is in both the train and the test split."""
    shared = set(train_idx) & set(test_idx)
    if shared:
        raise InvalidSpec(f"train and test splits share pair indices {sorted(shared)[:5]}")


def train_test_split(pairs: TrainingSet, train_fraction: float = 0.7) -> tuple[TrainingSet, TrainingSet]:
    train_idx, test_idx = split_indices(len(pairs), train_fraction)
    check_disjoint(train_idx, test_idx)
    return (
        TrainingSet([pairs.pairs[i] for i in train_idx], pairs.cost, pairs.epsilon),
        TrainingSet([pairs.pairs[i] for i in test_idx], pairs.cost, pairs.epsilon),
    )


def load_measures(
    path_mu: str | Path, path_nu: str | Path, cost: CostSpec,
) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """Read a validated (mu, nu) pair from AOTM files."""
    mu, nu = read_measure(path_mu), read_measure(path_nu)
    if mu.domain is not nu.domain:
        raise DomainMismatch(f"{path_mu} is {mu.domain.name} but {path_nu} is {nu.domain.name}")
    cost.check_domains(mu, nu)
    return mu, nu


def _pair_paths(directory: Path, index: int) -> tuple[Path, Path]:
    return directory / f"pair_{index:04d}_mu.aotm", directory / f"pair_{index:04d}_nu.aotm"


def save_training_set(directory: str | Path, pairs: TrainingSet, spec: TaskSpec | None = None) -> Path:
    """Write every pair as AOTM files plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for index, (mu, nu) in enumerate(pairs.pairs):
        path_mu, path_nu = _pair_paths(directory, index)
        write_measure(path_mu, mu)
        write_measure(path_nu, nu)
    manifest = {
        "count": len(pairs),
        "cost": pairs.cost.family.value,
        "epsilon": pairs.epsilon,
        "spec": spec.to_dict() if spec is not None else None,
    }
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    logger.info("Wrote %d pairs to %s", len(pairs), directory)
    return directory


def load_training_set(directory: str | Path) -> TrainingSet:
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST).read_text())
    cost = CostSpec(CostFamily(manifest["cost"]))
    pairs = [load_measures(*_pair_paths(directory, i), cost) for i in range(manifest["count"])]
    return TrainingSet(pairs, cost, float(manifest["epsilon"]))
