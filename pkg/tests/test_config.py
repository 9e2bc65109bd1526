"""Tests for centralized configuration."""

import os

import pytest
from pydantic import ValidationError

from amortot.config import Settings, load_settings
from amortot.errors import ConfigError
from amortot.measures import CostFamily
from amortot.slicing import ProjectionFamily
from amortot.tasks import TaskFamily


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for key in list(os.environ):
        if key.startswith("AOT_"):
            monkeypatch.delenv(key)


class TestSettings:
    def test_defaults(self):
        s = Settings(_env_file=None)
        assert s.family is TaskFamily.GRID2D
        assert s.n == 196
        assert s.m is None and s.epsilon is None
        assert s.count == 100
        assert s.train_fraction == 0.7
        assert s.projections == 100
        assert s.ridge_lambda == 1e-3
        assert (s.lr, s.iters, s.batch) == (1e-3, 5000, None)
        assert s.sinkhorn_tol == 1e-9

    def test_env_overrides(self, monkeypatch):
        monkeypatch.setenv("AOT_FAMILY", "sphere")
        monkeypatch.setenv("AOT_N", "50")
        monkeypatch.setenv("AOT_EPSILON", "0.25")
        monkeypatch.setenv("AOT_PROJECTIONS", "12")
        s = Settings(_env_file=None)
        assert s.family is TaskFamily.SPHERE_SUPPLY_DEMAND
        assert s.n == 50
        assert s.epsilon == 0.25
        assert s.projections == 12

    def test_out_of_range_rejected(self, monkeypatch):
        monkeypatch.setenv("AOT_N", "-1")
        with pytest.raises(ValidationError):
            Settings(_env_file=None)

    def test_unknown_family_rejected(self, monkeypatch):
        monkeypatch.setenv("AOT_FAMILY", "torus")
        with pytest.raises(ValidationError):
            Settings(_env_file=None)


class TestLoadSettings:
    def test_spec_file(self, tmp_path):
        spec = tmp_path / "run.env"
        spec.write_text("AOT_FAMILY=color\nAOT_N=8\nAOT_COUNT=4\n")
        s = load_settings(spec)
        assert s.family is TaskFamily.COLOR_CLOUDS
        assert (s.n, s.count) == (8, 4)

    def test_env_beats_spec_file(self, tmp_path, monkeypatch):
        spec = tmp_path / "run.env"
        spec.write_text("AOT_N=8\n")
        monkeypatch.setenv("AOT_N", "9")
        assert load_settings(spec).n == 9

    def test_overrides_beat_everything(self, tmp_path, monkeypatch):
        spec = tmp_path / "run.env"
        spec.write_text("AOT_N=8\n")
        monkeypatch.setenv("AOT_N", "9")
        assert load_settings(spec, n=16).n == 16

    def test_none_overrides_dropped(self, monkeypatch):
        monkeypatch.setenv("AOT_SEED", "7")
        s = load_settings(seed=None, projections=None)
        assert s.seed == 7
        assert s.projections == 100

    def test_missing_spec_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_settings(tmp_path / "nope.env")


class TestDerived:
    def test_task_spec_resolves_family_defaults(self):
        spec = Settings(_env_file=None).task_spec()
        assert spec.m == 196
        assert spec.epsilon == 0.1
        assert spec.cost.family is CostFamily.SQ_EUCLIDEAN

    def test_task_spec_maps_invalid_spec(self):
        with pytest.raises(ConfigError):
            Settings(_env_file=None, n=10).task_spec()

    def test_explicit_cost(self):
        spec = Settings(_env_file=None, family=TaskFamily.COLOR_CLOUDS, n=4, cost=CostFamily.EUCLIDEAN).task_spec()
        assert spec.cost.family is CostFamily.EUCLIDEAN

    def test_projection_family_follows_task(self):
        assert Settings(_env_file=None).projection_family_for_task() is ProjectionFamily.LINEAR
        sphere = Settings(_env_file=None, family=TaskFamily.SPHERE_SUPPLY_DEMAND, n=10)
        assert sphere.projection_family_for_task() is ProjectionFamily.STEREOGRAPHIC
        forced = Settings(_env_file=None, projection_family=ProjectionFamily.LINEAR, family=TaskFamily.SPHERE_SUPPLY_DEMAND)
        assert forced.projection_family_for_task() is ProjectionFamily.LINEAR

    def test_sinkhorn_config(self):
        s = Settings(_env_file=None, sinkhorn_max_iters=50, sinkhorn_tol=1e-6)
        cfg = s.sinkhorn_config()
        assert (cfg.epsilon, cfg.max_iters, cfg.marginal_tol) == (0.1, 50, 1e-6)
        assert s.sinkhorn_config(0.3).epsilon == 0.3
