"""End-to-end tests for the aot command line."""

import csv
import json
import os

import numpy as np
import pytest

from amortot.cli import main
from amortot.formats import read_measure, read_model, read_plan, write_measure, write_plan
from amortot.measures import DiscreteMeasure, Domain, TransportPlan

SPEC = "AOT_FAMILY=grid2d\nAOT_N=9\nAOT_COUNT=10\nAOT_PROJECTIONS=3\nAOT_ITERS=5\n"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if code == 0 else None)


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for key in list(os.environ):
        if key.startswith("AOT_"):
            monkeypatch.delenv(key)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "run.env").write_text(SPEC)
    assert main(["generate", "--spec", str(root / "run.env"), "--out", str(root / "pairs")]) == 0
    assert main(["train", "--method", "ra", "--spec", str(root / "run.env"), "--out", str(root / "ra.aotw")]) == 0
    assert main([
        "predict", "--model", str(root / "ra.aotw"),
        "--mu", str(root / "pairs" / "pair_0008_mu.aotm"),
        "--nu", str(root / "pairs" / "pair_0008_nu.aotm"),
        "--out", str(root / "plan.aotp"),
    ]) == 0
    return root


class TestGenerate:
    def test_writes_pairs_and_manifest(self, workspace):
        manifest = json.loads((workspace / "pairs" / "manifest.json").read_text())
        assert manifest["count"] == 10
        assert manifest["spec"]["n"] == 9
        assert read_measure(workspace / "pairs" / "pair_0000_mu.aotm").n == 9

    def test_summary(self, workspace, capsys, tmp_path):
        code, summary = run(capsys, "generate", "--spec", workspace / "run.env", "--seed", 5, "--out", tmp_path)
        assert code == 0
        assert summary["pairs"] == 10
        assert summary["spec"]["seed"] == 5


class TestTrain:
    def test_ra_model(self, workspace):
        model = read_model(workspace / "ra.aotw")
        assert model.pset.L == 3
        assert model.pairs_used == 7

    def test_oa_with_flags(self, workspace, capsys, tmp_path):
        code, summary = run(
            capsys, "train", "--method", "oa", "--spec", workspace / "run.env",
            "--L", 4, "--M", 5, "--lr", 1e-2, "--iters", 3, "--out", tmp_path / "oa.aotw",
        )
        assert code == 0
        assert summary["method"] == "oa"
        assert summary["L"] == 4
        assert summary["pairs_used"] == 5
        assert read_model(tmp_path / "oa.aotw").trained_by.value == "oa"


class TestPredict:
    def test_plan_and_exports(self, workspace, capsys, tmp_path):
        code, summary = run(
            capsys, "predict", "--model", workspace / "ra.aotw",
            "--mu", workspace / "pairs" / "pair_0009_mu.aotm",
            "--nu", workspace / "pairs" / "pair_0009_nu.aotm",
            "--out", tmp_path / "p.aotp", "--csv", tmp_path / "p.csv", "--heatmap", tmp_path / "p.pgm",
        )
        assert code == 0
        assert summary["shape"] == [9, 9]
        assert summary["col_l1"] <= 1e-12
        assert (tmp_path / "p.pgm").read_bytes().startswith(b"P5\n9 9\n255\n")
        with open(tmp_path / "p.csv", newline="") as fh:
            assert next(csv.reader(fh)) == ["row", "col", "mass"]

    def test_bad_magic_exit_code(self, workspace, capsys, tmp_path):
        (tmp_path / "junk.aotm").write_bytes(b"JUNK" + bytes(40))
        code, _ = run(
            capsys, "predict", "--model", workspace / "ra.aotw",
            "--mu", tmp_path / "junk.aotm", "--nu", workspace / "pairs" / "pair_0009_nu.aotm",
            "--out", tmp_path / "p.aotp",
        )
        assert code == 3

    def test_missing_file_exit_code(self, workspace, capsys, tmp_path):
        code, _ = run(
            capsys, "predict", "--model", tmp_path / "absent.aotw",
            "--mu", workspace / "pairs" / "pair_0009_mu.aotm",
            "--nu", workspace / "pairs" / "pair_0009_nu.aotm",
            "--out", tmp_path / "p.aotp",
        )
        assert code == 3


class TestEval:
    def test_sinkhorn(self, workspace, capsys):
        code, summary = run(capsys, "eval", "--method", "sinkhorn", "--spec", workspace / "run.env")
        assert code == 0
        assert summary["pairs"] == 3
        assert summary["rmse_mean"] == pytest.approx(0.0, abs=1e-12)

    def test_ra_with_report(self, workspace, capsys, tmp_path):
        code, summary = run(
            capsys, "eval", "--method", "ra", "--model", workspace / "ra.aotw",
            "--spec", workspace / "run.env", "--report", tmp_path / "r.json",
        )
        assert code == 0
        report = json.loads((tmp_path / "r.json").read_text())
        assert [r["pair_index"] for r in report["records"]] == [7, 8, 9]
        assert summary["rmse_mean"] == report["rmse_mean"]
        assert "records" not in summary

    def test_min_swgg_without_model(self, workspace, capsys):
        code, summary = run(capsys, "eval", "--method", "minswgg", "--spec", workspace / "run.env", "--L", 2)
        assert code == 0
        assert summary["variant"] == "random-search"

    def test_model_required(self, workspace, capsys):
        code, _ = run(capsys, "eval", "--method", "ra", "--spec", workspace / "run.env")
        assert code == 2


class TestBench:
    def test_sweep_files(self, workspace, capsys, tmp_path):
        code, summary = run(
            capsys, "bench", "--spec", workspace / "run.env",
            "--L", "2,3", "--M", "3,5", "--methods", "ra,minswgg", "--out", tmp_path / "sweep.csv",
        )
        assert code == 0
        assert summary["cells"] == 8
        assert summary["failed"] == 0
        with open(tmp_path / "sweep.csv", newline="") as fh:
            assert len(list(csv.DictReader(fh))) == 8
        assert json.loads((tmp_path / "sweep.json").read_text())["spec"]["n"] == 9

    def test_bad_list(self, workspace, capsys, tmp_path):
        with pytest.raises(SystemExit):
            main(["bench", "--spec", str(workspace / "run.env"), "--L", "a,b", "--out", str(tmp_path / "s.csv")])


class TestPlanCommands:
    def test_interpolate(self, workspace, capsys, tmp_path):
        code, summary = run(
            capsys, "interpolate", "--plan", workspace / "plan.aotp",
            "--mu", workspace / "pairs" / "pair_0008_mu.aotm",
            "--nu", workspace / "pairs" / "pair_0008_nu.aotm",
            "--t", 0.5, "--out", tmp_path / "mid.aotm",
        )
        assert code == 0
        mid = read_measure(tmp_path / "mid.aotm")
        assert summary["atoms"] == mid.n
        assert mid.weights.sum() == pytest.approx(1.0)

    def test_interpolate_bad_t(self, workspace, capsys, tmp_path):
        code, _ = run(
            capsys, "interpolate", "--plan", workspace / "plan.aotp",
            "--mu", workspace / "pairs" / "pair_0008_mu.aotm",
            "--nu", workspace / "pairs" / "pair_0008_nu.aotm",
            "--t", 2.0, "--out", tmp_path / "mid.aotm",
        )
        assert code == 3

    def test_interpolate_cost_flag(self, workspace, capsys, tmp_path):
        args = [
            "interpolate", "--plan", workspace / "plan.aotp",
            "--mu", workspace / "pairs" / "pair_0008_mu.aotm",
            "--nu", workspace / "pairs" / "pair_0008_nu.aotm",
            "--t", 0.5, "--out", tmp_path / "mid.aotm",
        ]
        assert run(capsys, *args, "--cost", "sqeuclidean")[0] == 0
        assert run(capsys, *args, "--cost", "geodesic")[0] == 3

    def test_interpolate_sphere_measures_rejected(self, capsys, tmp_path):
        mu = DiscreteMeasure.uniform([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], Domain.UNIT_SPHERE)
        nu = DiscreteMeasure.uniform([[0.0, 0.0, 1.0], [0.0, -1.0, 0.0]], Domain.UNIT_SPHERE)
        write_measure(tmp_path / "mu.aotm", mu)
        write_measure(tmp_path / "nu.aotm", nu)
        write_plan(tmp_path / "plan.aotp", TransportPlan.from_dense(np.eye(2) / 2))
        code, _ = run(
            capsys, "interpolate", "--plan", tmp_path / "plan.aotp",
            "--mu", tmp_path / "mu.aotm", "--nu", tmp_path / "nu.aotm",
            "--t", 0.5, "--out", tmp_path / "mid.aotm",
        )
        assert code == 3
        assert not (tmp_path / "mid.aotm").exists()

    def test_sample(self, workspace, capsys, tmp_path):
        code, summary = run(capsys, "sample", "--plan", workspace / "plan.aotp", "--k", 100, "--seed", 4,
                            "--out", tmp_path / "s.csv")
        assert code == 0
        assert summary["k"] == 100
        with open(tmp_path / "s.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["row", "col"]
        assert len(rows) == 101
        plan = read_plan(workspace / "plan.aotp").to_dense()
        assert all(plan[int(r), int(c)] > 0 for r, c in rows[1:])

    def test_transfer(self, workspace, capsys, tmp_path):
        code, summary = run(
            capsys, "transfer", "--plan", workspace / "plan.aotp",
            "--mu", workspace / "pairs" / "pair_0008_mu.aotm",
            "--nu", workspace / "pairs" / "pair_0008_nu.aotm",
            "--out", tmp_path / "mapped.aotm",
        )
        assert code == 0
        mapped = read_measure(tmp_path / "mapped.aotm")
        mu = read_measure(workspace / "pairs" / "pair_0008_mu.aotm")
        assert summary["atoms"] == 9
        np.testing.assert_array_equal(mapped.weights, mu.weights)


class TestConfigErrors:
    def test_env_validation_exit_code(self, monkeypatch, capsys, tmp_path):
        monkeypatch.setenv("AOT_N", "-1")
        code, _ = run(capsys, "generate", "--out", tmp_path)
        assert code == 2

    def test_invalid_task_exit_code(self, capsys, tmp_path):
        (tmp_path / "bad.env").write_text("AOT_FAMILY=grid2d\nAOT_N=10\n")
        code, _ = run(capsys, "generate", "--spec", tmp_path / "bad.env", "--out", tmp_path / "o")
        assert code == 2

    def test_missing_spec_file(self, capsys, tmp_path):
        code, _ = run(capsys, "generate", "--spec", tmp_path / "absent.env", "--out", tmp_path)
        assert code == 2
