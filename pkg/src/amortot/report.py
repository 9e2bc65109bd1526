"""Evaluation against converged Sinkhorn plans, and the L x M benchmark sweep.

RMSE is entrywise over the n*m plan entries. Inference time covers
everything a method needs at test time (feature extraction, prediction,
the g best response and plan assembly) and excludes the ground-truth solve.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from amortot.amortize import (
    AmortizedModel,
    TrainingSet,
    oa_fit,
    predict_plan,
    ra_fit,
)
from amortot.baselines import VARIANT, min_swgg_plan
from amortot.errors import AOTError, ConfigError, ShapeMismatch
from amortot.measures import TransportPlan, build_cost_matrix
from amortot.parallel import ordered_map
from amortot.sinkhorn import SinkhornConfig, SinkhornResult, sinkhorn_solve
from amortot.slicing import ProjectionFamily, ProjectionSet, sample_projections
from amortot.tasks import TaskSpec, check_disjoint, generate, split_indices, train_test_split

__all__ = [
    "Method",
    "PairRecord",
    "EvalReport",
    "SweepCell",
    "SweepResult",
    "plan_rmse",
    "ground_truths",
    "evaluate",
    "bench_sweep",
    "TIMING_COLUMNS",
]

logger = logging.getLogger(__name__)

INFER_NOTE = "infer_ms includes feature extraction, prediction, g update and plan assembly"
TIMING_COLUMNS = ("train_s", "infer_ms_mean", "infer_ms_std")
CSV_COLUMNS = (
    "L", "M", "method", "status", "pairs", "dropped",
    "rmse_mean", "rmse_std", *TIMING_COLUMNS, "error",
)


class Method(enum.Enum):
    RA = "ra"
    OA = "oa"
    MIN_SWGG = "minswgg"
    SINKHORN = "sinkhorn"


@dataclass(frozen=True)
class PairRecord:
    pair_index: int
    rmse: float
    infer_ms: float


@dataclass
class EvalReport:
    method: Method
    records: list[PairRecord] = field(default_factory=list)
    dropped: int = 0
    train_seconds: float = 0.0
    spec: dict | None = None

    @property
    def rmse_mean(self) -> float:
        return float(np.mean([r.rmse for r in self.records])) if self.records else float("nan")

    @property
    def rmse_std(self) -> float:
        return float(np.std([r.rmse for r in self.records])) if self.records else float("nan")

    @property
    def infer_ms_mean(self) -> float:
        return float(np.mean([r.infer_ms for r in self.records])) if self.records else float("nan")

    @property
    def infer_ms_std(self) -> float:
        return float(np.std([r.infer_ms for r in self.records])) if self.records else float("nan")

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "method": self.method.value,
            "pairs": len(self.records),
            "dropped": self.dropped,
            "rmse_mean": self.rmse_mean,
            "rmse_std": self.rmse_std,
            "records": [
                {"pair_index": r.pair_index, "rmse": r.rmse}
                | ({"infer_ms": r.infer_ms} if include_timing else {})
                for r in self.records
            ],
            "spec": self.spec,
        }
        if self.method is Method.MIN_SWGG:
            out["variant"] = VARIANT
        if include_timing:
            out["train_s"] = self.train_seconds
            out["infer_ms_mean"] = self.infer_ms_mean
            out["infer_ms_std"] = self.infer_ms_std
            out["timing_note"] = INFER_NOTE
        return out

    def write_json(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def plan_rmse(predicted: TransportPlan, truth: TransportPlan) -> float:
    """sqrt(mean_ij (P_hat_ij - P*_ij)^2)."""
    if predicted.shape != truth.shape:
        raise ShapeMismatch(f"plan shapes differ: {predicted.shape} vs {truth.shape}")
    diff = predicted.to_dense() - truth.to_dense()
    return float(np.sqrt(np.mean(diff * diff)))


def ground_truths(
    pairs: TrainingSet, cfg: SinkhornConfig, workers: int | None = None,
) -> list[SinkhornResult]:
    def solve(pair):
        mu, nu = pair
        return sinkhorn_solve(mu, nu, build_cost_matrix(mu, nu, pairs.cost), cfg)

    return ordered_map(solve, pairs.pairs, workers)


def _predictor(method: Method, model: AmortizedModel | None, pset: ProjectionSet | None, cost, cfg):
    if method in (Method.RA, Method.OA):
        if model is None:
            raise ConfigError(f"method {method.value} needs a trained model")
        return lambda mu, nu, C: predict_plan(model, mu, nu, C)
    if method is Method.MIN_SWGG:
        directions = pset if pset is not None else (model.pset if model is not None else None)
        if directions is None:
            raise ConfigError("min-SWGG needs a projection set")
        return lambda mu, nu, C: min_swgg_plan(mu, nu, cost, directions).plan
    return lambda mu, nu, C: sinkhorn_solve(mu, nu, C, cfg).plan


def evaluate(
    method: Method,
    test: TrainingSet,
    *,
    model: AmortizedModel | None = None,
    pset: ProjectionSet | None = None,
    sinkhorn_cfg: SinkhornConfig | None = None,
    truths: list[SinkhornResult] | None = None,
    index_offset: int = 0,
    train_seconds: float = 0.0,
    spec: dict | None = None,
    workers: int | None = None,
) -> EvalReport:
    """RMSE of ``method``'s plans against converged Sinkhorn plans on ``test``.

    Pairs whose ground truth does not converge are dropped and counted.
    """
    method = Method(method)
    cfg = sinkhorn_cfg or SinkhornConfig(test.epsilon)
    if truths is None:
        truths = ground_truths(test, cfg, workers)
    elif len(truths) != len(test):
        raise ShapeMismatch(f"{len(truths)} ground truths for {len(test)} test pairs")
    predict = _predictor(method, model, pset, test.cost, cfg)

    def run(index):
        truth = truths[index]
        if not truth.converged:
            return None
        mu, nu = test.pairs[index]
        C = build_cost_matrix(mu, nu, test.cost)
        started = time.perf_counter()
        plan = predict(mu, nu, C)
        infer_ms = 1000.0 * (time.perf_counter() - started)
        return PairRecord(index_offset + index, plan_rmse(plan, truth.plan), infer_ms)

    report = EvalReport(method, train_seconds=train_seconds, spec=spec)
    for index, record in enumerate(ordered_map(run, range(len(test)), workers)):
        if record is None:
            report.dropped += 1
            logger.warning("Dropping test pair %d: ground truth did not converge", index_offset + index)
        else:
            report.records.append(record)
    logger.info(
        "Evaluated %s on %d pairs (%d dropped): rmse %.3e +/- %.3e",
        method.value, len(report.records), report.dropped, report.rmse_mean, report.rmse_std,
    )
    return report


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepCell:
    L: int
    M: int
    method: Method
    report: EvalReport | None = None
    error: str | None = None

    def row(self) -> dict:
        row = {"L": self.L, "M": self.M, "method": self.method.value}
        if self.report is None:
            return row | {"status": "failed", "error": self.error}
        report = self.report
        return row | {
            "status": "ok",
            "pairs": len(report.records),
            "dropped": report.dropped,
            "rmse_mean": repr(report.rmse_mean),
            "rmse_std": repr(report.rmse_std),
            "train_s": f"{report.train_seconds:.6f}",
            "infer_ms_mean": f"{report.infer_ms_mean:.6f}",
            "infer_ms_std": f"{report.infer_ms_std:.6f}",
        }


@dataclass
class SweepResult:
    spec: dict
    cells: list[SweepCell] = field(default_factory=list)

    def report_for(self, L: int, M: int, method: Method) -> EvalReport | None:
        for cell in self.cells:
            if (cell.L, cell.M, cell.method) == (L, M, Method(method)):
                return cell.report
        return None

    def write_csv(self, path: str | Path, include_timing: bool = True) -> None:
        columns = [c for c in CSV_COLUMNS if include_timing or c not in TIMING_COLUMNS]
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", restval="")
            writer.writeheader()
            for cell in self.cells:
                writer.writerow(cell.row())

    def to_dict(self, include_timing: bool = True) -> dict:
        return {
            "spec": self.spec,
            "cells": [
                {"L": c.L, "M": c.M, "method": c.method.value, "error": c.error,
                 "report": c.report.to_dict(include_timing) if c.report else None}
                for c in self.cells
            ],
        }

    def write_json(self, path: str | Path, include_timing: bool = True) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(include_timing), indent=2) + "\n")


def bench_sweep(
    spec: TaskSpec,
    L_values: list[int],
    M_values: list[int],
    methods: list[Method],
    *,
    projection_family: ProjectionFamily = ProjectionFamily.LINEAR,
    train_fraction: float = 0.7,
    ridge_lambda: float = 1e-3,
    lr: float = 1e-3,
    iters: int = 5000,
    batch: int | None = None,
    sinkhorn_cfg: SinkhornConfig | None = None,
    workers: int | None = None,
) -> SweepResult:
    """Train and evaluate every (L, M, method) cell on one shared task pool.

    Projection sets for the different L are prefixes of one sampled set and
    the M training pairs are the first M of the train split. Ground truths
    are solved once per pair. A failing cell is recorded and the sweep moves on.
    """
    if not L_values or not M_values or not methods:
        raise ConfigError("sweep grids must be nonempty")
    cfg = sinkhorn_cfg or SinkhornConfig(spec.epsilon)
    pool = generate(spec, workers)
    train_idx, test_idx = split_indices(len(pool), train_fraction)
    check_disjoint(train_idx, test_idx)
    train, test = train_test_split(pool, train_fraction)
    test_offset = test_idx.start
    test_truths = ground_truths(test, cfg, workers)
    methods = [Method(m) for m in methods]
    train_truths = None
    if Method.RA in methods:
        train_truths = ground_truths(train.head(min(max(M_values), len(train))), cfg, workers)
    dim = pool.pairs[0][0].dim
    full_pset = sample_projections(projection_family, max(L_values), dim, spec.seed)
    result = SweepResult(spec.to_dict())

    for L in L_values:
        pset = full_pset.prefix(L)
        for M in M_values:
            for method in methods:
                cell = SweepCell(L, M, method)
                try:
                    cell.report = _run_cell(
                        method, train, test, M, pset, cfg, test_truths, train_truths, test_offset,
                        ridge_lambda=ridge_lambda, lr=lr, iters=iters, batch=batch,
                        seed=spec.seed, spec=result.spec, workers=workers,
                    )
                except (AOTError, ValueError, ArithmeticError) as e:
                    cell.error = f"{type(e).__name__}: {e}"
                    logger.warning("Sweep cell L=%d M=%d %s failed: %s", L, M, method.value, cell.error)
                result.cells.append(cell)
                logger.info("Sweep cell L=%d M=%d %s done", L, M, method.value)
    return result


def _run_cell(
    method, train, test, M, pset, cfg, test_truths, train_truths, test_offset,
    *, ridge_lambda, lr, iters, batch, seed, spec, workers,
) -> EvalReport:
    if method is Method.RA:
        subset = train.head(M)
        model = ra_fit(
            subset, pset, ridge_lambda,
            sinkhorn_cfg=cfg, truths=train_truths[:M], workers=workers,
        )
    elif method is Method.OA:
        subset = train.head(M)
        cell_batch = None if batch is None else min(batch, M)
        model = oa_fit(subset, pset, cfg.epsilon, lr, iters, cell_batch, seed=seed, workers=workers)
    else:
        model = None
    train_seconds = model.wall_seconds if model is not None else 0.0
    return evaluate(
        method, test,
        model=model, pset=pset, sinkhorn_cfg=cfg, truths=test_truths,
        index_offset=test_offset, train_seconds=train_seconds, spec=spec, workers=workers,
    )
