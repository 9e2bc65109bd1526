"""Command-line interface.

Usage:
    aot generate --spec run.env --out pairs/
    aot train --method ra|oa --spec run.env [--L 100] [--lambda 1e-3] [--lr 1e-3]
        [--iters 5000] [--seed 0] --out model.aotw
    aot predict --model model.aotw --mu a.aotm --nu b.aotm --out plan.aotp [--heatmap plan.pgm]
    aot eval --method ra|oa|minswgg|sinkhorn [--model model.aotw] --spec run.env --report report.json
    aot bench --spec run.env --L 3,5,10,20,50,100 --M 10,20,50 --out sweep.csv
    aot interpolate --plan plan.aotp --mu a.aotm --nu b.aotm --t 0.25 [--cost sqeuclidean] --out m.aotm
    aot sample --plan plan.aotp --k 1000 [--seed 0] --out pairs.csv
    aot transfer --plan plan.aotp --mu a.aotm --nu b.aotm --out mapped.aotm

Every command prints a JSON summary on stdout. Exit codes: 0 success,
2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from amortot.amortize import TrainingMethod, oa_fit, predict_plan, ra_fit
from amortot.config import Settings, load_settings
from amortot.coupling import barycentric_map, interpolate, sample_coupling
from amortot.errors import AOTError, ConfigError
from amortot.formats import (
    read_measure,
    read_model,
    read_plan,
    write_measure,
    write_measure_csv,
    write_model,
    write_plan,
    write_plan_csv,
    write_plan_pgm,
)
from amortot.measures import (
    CostFamily,
    CostSpec,
    DiscreteMeasure,
    build_cost_matrix,
    marginal_errors,
    transport_cost,
)
from amortot.report import Method, bench_sweep, evaluate
from amortot.slicing import sample_projections
from amortot.tasks import (
    check_disjoint,
    generate,
    load_measures,
    save_training_set,
    split_indices,
    train_test_split,
)

logger = logging.getLogger(__name__)


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def _method_list(text: str) -> list[Method]:
    try:
        return [Method(part.strip()) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"unknown method in {text!r}") from e


def _settings(args: argparse.Namespace, **overrides) -> Settings:
    return load_settings(getattr(args, "spec", None), seed=getattr(args, "seed", None), **overrides)


def _split(settings: Settings):
    """Generated pool split into train/test, with the test index offset."""
    spec = settings.task_spec()
    pool = generate(spec, settings.threads)
    train_idx, test_idx = split_indices(len(pool), settings.train_fraction)
    check_disjoint(train_idx, test_idx)
    train, test = train_test_split(pool, settings.train_fraction)
    return spec, train, test, test_idx.start


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_generate(args: argparse.Namespace) -> dict:
    settings = _settings(args)
    spec = settings.task_spec()
    pairs = generate(spec, settings.threads)
    out = save_training_set(args.out, pairs, spec)
    return {"out": str(out), "pairs": len(pairs), "spec": spec.to_dict()}


def cmd_train(args: argparse.Namespace) -> dict:
    settings = _settings(
        args, projections=args.L, ridge_lambda=args.ridge_lambda, lr=args.lr,
        iters=args.iters, batch=args.batch, train_pairs=args.M,
    )
    spec, train, _, _ = _split(settings)
    if settings.train_pairs is not None:
        train = train.head(min(settings.train_pairs, len(train)))
    dim = train.pairs[0][0].dim
    pset = sample_projections(settings.projection_family_for_task(), settings.projections, dim, spec.seed)
    method = TrainingMethod(args.method)
    if method is TrainingMethod.RA:
        model = ra_fit(
            train, pset, settings.ridge_lambda,
            sinkhorn_cfg=settings.sinkhorn_config(spec.epsilon), workers=settings.threads,
        )
    else:
        model = oa_fit(
            train, pset, spec.epsilon, settings.lr, settings.iters, settings.batch,
            seed=spec.seed, workers=settings.threads,
        )
    write_model(args.out, model)
    logger.info("Wrote %s model to %s", method.value, args.out)
    return {
        "out": str(args.out),
        "method": method.value,
        "L": pset.L,
        "pairs_used": model.pairs_used,
        "train_s": model.wall_seconds,
    }


def cmd_predict(args: argparse.Namespace) -> dict:
    model = read_model(args.model)
    mu, nu = load_measures(args.mu, args.nu, model.cost)
    C = build_cost_matrix(mu, nu, model.cost)
    plan = predict_plan(model, mu, nu, C)
    write_plan(args.out, plan)
    if args.csv:
        write_plan_csv(args.csv, plan)
    if args.heatmap:
        write_plan_pgm(args.heatmap, plan)
    row_l1, col_l1 = marginal_errors(plan, mu, nu)
    return {
        "out": str(args.out),
        "shape": list(plan.shape),
        "transport_cost": transport_cost(plan, C),
        "row_l1": row_l1,
        "col_l1": col_l1,
    }


def cmd_eval(args: argparse.Namespace) -> dict:
    settings = _settings(args, projections=args.L)
    method = Method(args.method)
    model = read_model(args.model) if args.model else None
    if method in (Method.RA, Method.OA) and model is None:
        raise ConfigError(f"--model is required for method {method.value}")
    spec, _, test, offset = _split(settings)
    if model is not None and model.epsilon != spec.epsilon:
        logger.warning("Model epsilon %g differs from task epsilon %g", model.epsilon, spec.epsilon)
    pset = None
    if method is Method.MIN_SWGG and model is None:
        dim = test.pairs[0][0].dim
        pset = sample_projections(settings.projection_family_for_task(), settings.projections, dim, spec.seed)
    report = evaluate(
        method, test,
        model=model, pset=pset, sinkhorn_cfg=settings.sinkhorn_config(spec.epsilon),
        index_offset=offset,
        train_seconds=model.wall_seconds if model is not None else 0.0,
        spec=spec.to_dict(), workers=settings.threads,
    )
    if args.report:
        report.write_json(args.report)
    summary = report.to_dict()
    summary.pop("records")
    return summary | {"report": str(args.report) if args.report else None}


def cmd_bench(args: argparse.Namespace) -> dict:
    settings = _settings(args)
    spec = settings.task_spec()
    result = bench_sweep(
        spec, args.L, args.M, args.methods,
        projection_family=settings.projection_family_for_task(),
        train_fraction=settings.train_fraction,
        ridge_lambda=settings.ridge_lambda,
        lr=settings.lr,
        iters=settings.iters,
        batch=settings.batch,
        sinkhorn_cfg=settings.sinkhorn_config(spec.epsilon),
        workers=settings.threads,
    )
    result.write_csv(args.out)
    json_path = Path(args.json) if args.json else Path(args.out).with_suffix(".json")
    result.write_json(json_path)
    failed = sum(1 for cell in result.cells if cell.report is None)
    return {"out": str(args.out), "json": str(json_path), "cells": len(result.cells), "failed": failed}


def cmd_interpolate(args: argparse.Namespace) -> dict:
    plan = read_plan(args.plan)
    mu, nu = read_measure(args.mu), read_measure(args.nu)
    cost = CostSpec(args.cost) if args.cost else None
    measure = interpolate(plan, mu, nu, args.t, cost)
    write_measure(args.out, measure)
    if args.csv:
        write_measure_csv(args.csv, measure)
    return {"out": str(args.out), "t": args.t, "atoms": measure.n}


def cmd_sample(args: argparse.Namespace) -> dict:
    samples = sample_coupling(read_plan(args.plan), args.k, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col"])
        writer.writerows(samples)
    return {"out": str(out), "k": len(samples), "seed": args.seed}


def cmd_transfer(args: argparse.Namespace) -> dict:
    plan = read_plan(args.plan)
    mu, nu = read_measure(args.mu), read_measure(args.nu)
    mapped = DiscreteMeasure(barycentric_map(plan, mu, nu), mu.weights)
    write_measure(args.out, mapped)
    if args.csv:
        write_measure_csv(args.csv, mapped)
    return {"out": str(args.out), "atoms": mapped.n}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aot",
        description="Amortized entropic optimal transport with sliced potentials",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="Write a synthetic task as AOTM pairs")
    p.add_argument("--spec", metavar="FILE", help="Key-value config file (AOT_KEY=value)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="Fit an amortized model on the train split")
    p.add_argument("--method", required=True, choices=[m.value for m in TrainingMethod])
    p.add_argument("--spec", metavar="FILE")
    p.add_argument("--L", type=int, help="Number of projections (default 100)")
    p.add_argument("--M", type=int, help="Training pairs to use (default: whole train split)")
    p.add_argument("--lambda", dest="ridge_lambda", type=float, help="Ridge coefficient (RA)")
    p.add_argument("--lr", type=float, help="Adam learning rate (OA)")
    p.add_argument("--iters", type=int, help="Adam iterations (OA)")
    p.add_argument("--batch", type=int, help="Pairs per Adam step (OA)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, metavar="FILE")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="Predict a plan for one measure pair")
    p.add_argument("--model", required=True)
    p.add_argument("--mu", required=True)
    p.add_argument("--nu", required=True)
    p.add_argument("--out", required=True, help="AOTP plan file")
    p.add_argument("--csv", help="Also write the plan as row,col,mass CSV")
    p.add_argument("--heatmap", help="Also write a PGM heatmap of the plan")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="RMSE against Sinkhorn on the test split")
    p.add_argument("--method", required=True, choices=[m.value for m in Method])
    p.add_argument("--model")
    p.add_argument("--spec", metavar="FILE")
    p.add_argument("--L", type=int, help="Projections for min-SWGG without a model")
    p.add_argument("--seed", type=int)
    p.add_argument("--report", help="Write the full report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="Sweep projections L and training pairs M")
    p.add_argument("--spec", metavar="FILE")
    p.add_argument("--L", type=_int_list, default=[3, 5, 10, 20, 50, 100])
    p.add_argument("--M", type=_int_list, default=[10, 20, 50])
    p.add_argument(
        "--methods", type=_method_list, default=[Method.RA, Method.OA, Method.MIN_SWGG],
        help="Comma-separated subset of ra,oa,minswgg,sinkhorn",
    )
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="Sweep CSV")
    p.add_argument("--json", help="Sweep JSON (default: next to the CSV)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("interpolate", help="Displacement interpolation at time t")
    p.add_argument("--plan", required=True)
    p.add_argument("--mu", required=True)
    p.add_argument("--nu", required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument(
        "--cost", choices=[c.value for c in CostFamily],
        help="Cost the plan was solved under (default sqeuclidean)",
    )
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("sample", help="Draw index pairs from a plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV of row,col pairs")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("transfer", help="Barycentric map of mu's atoms through a plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--mu", required=True)
    p.add_argument("--nu", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_transfer)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        result = args.func(args)
    except ValidationError as e:
        print(f"error: invalid configuration: {e}", file=sys.stderr)
        return ConfigError.exit_code
    except AOTError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    json.dump(result, sys.stdout, indent=2)
    print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
