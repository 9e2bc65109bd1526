"""Run configuration.

Values come from, highest priority first: explicit overrides (CLI flags),
AOT_* environment variables, then the flat key-value spec file given to the
CLI with ``--spec``. The spec file uses dotenv syntax, one ``AOT_KEY=value``
per line.

Family-dependent settings (m, epsilon, cost, projection family) default to
None and are resolved against the task family when the domain objects are
built.
"""

from __future__ import annotations

from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from amortot.errors import ConfigError, InvalidSpec
from amortot.measures import CostFamily, CostSpec
from amortot.sinkhorn import SinkhornConfig
from amortot.slicing import ProjectionFamily
from amortot.tasks import TaskFamily, TaskSpec

__all__ = ["Settings", "load_settings"]


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="AOT_", env_file=None, env_file_encoding="utf-8",
    )

    # Task
    family: TaskFamily = TaskFamily.GRID2D
    n: int = Field(196, ge=1)
    m: int | None = Field(None, ge=1)
    epsilon: float | None = Field(None, gt=0)
    cost: CostFamily | None = None
    seed: int = Field(0, ge=0)
    count: int = Field(100, ge=2)
    train_fraction: float = Field(0.7, gt=0, lt=1)
    train_pairs: int | None = Field(None, ge=1)  # M; None = whole train split

    # Slicing
    projections: int = Field(100, ge=1)  # L
    projection_family: ProjectionFamily | None = None

    # RA / OA
    ridge_lambda: float = Field(1e-3, ge=0)
    lr: float = Field(1e-3, gt=0)
    iters: int = Field(5000, ge=1)
    batch: int | None = Field(None, ge=1)  # None = full batch up to 64 pairs

    # Ground truth
    sinkhorn_max_iters: int = Field(10_000, ge=1)
    sinkhorn_tol: float = Field(1e-9, gt=0)

    threads: int | None = Field(None, ge=1)

    def task_spec(self) -> TaskSpec:
        try:
            return TaskSpec(
                family=self.family,
                n=self.n,
                m=self.m,
                epsilon=self.epsilon,
                cost=CostSpec(self.cost) if self.cost is not None else None,
                seed=self.seed,
                count=self.count,
            )
        except InvalidSpec as e:
            raise ConfigError(str(e)) from e

    def sinkhorn_config(self, epsilon: float | None = None) -> SinkhornConfig:
        if epsilon is None:
            epsilon = self.task_spec().epsilon
        return SinkhornConfig(epsilon, self.sinkhorn_max_iters, self.sinkhorn_tol)

    def projection_family_for_task(self) -> ProjectionFamily:
        if self.projection_family is not None:
            return self.projection_family
        if self.family is TaskFamily.SPHERE_SUPPLY_DEMAND:
            return ProjectionFamily.STEREOGRAPHIC
        return ProjectionFamily.LINEAR


def load_settings(spec_path: str | Path | None = None, **overrides) -> Settings:
    """Settings from an optional spec file plus non-None overrides."""
    if spec_path is not None and not Path(spec_path).is_file():
        raise ConfigError(f"spec file not found: {spec_path}")
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return Settings(_env_file=spec_path, **overrides)
