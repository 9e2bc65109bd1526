"""Tests for coupling.py: interpolation, barycentric maps and coupling samples."""

import logging
from collections import Counter

import numpy as np
import pytest

from amortot.coupling import barycentric_map, interpolate, sample_coupling
from amortot.errors import BadT, DegeneratePlan, InvalidSpec, ShapeMismatch, WrongCostFamily
from amortot.measures import CostFamily, CostSpec, DiscreteMeasure, Domain, TransportPlan, build_cost_matrix
from amortot.sinkhorn import SinkhornConfig, sinkhorn_solve


@pytest.fixture
def solved():
    rng = np.random.default_rng(3)
    mu = DiscreteMeasure(rng.uniform(size=(4, 2)), rng.dirichlet(np.ones(4)))
    nu = DiscreteMeasure(rng.uniform(size=(5, 2)), rng.dirichlet(np.ones(5)))
    result = sinkhorn_solve(mu, nu, build_cost_matrix(mu, nu, CostSpec()), SinkhornConfig(0.05))
    return mu, nu, result.plan


class TestInterpolate:
    def test_t0_recovers_source(self, solved):
        mu, nu, plan = solved
        m = interpolate(plan, mu, nu, 0.0)
        np.testing.assert_array_equal(m.atoms, mu.atoms)
        np.testing.assert_allclose(m.weights, mu.weights, atol=1e-9)

    def test_t1_recovers_target(self, solved):
        mu, nu, plan = solved
        m = interpolate(plan, mu, nu, 1.0)
        order = np.lexsort(m.atoms.T[::-1])
        expected = np.lexsort(nu.atoms.T[::-1])
        np.testing.assert_array_equal(m.atoms[order], nu.atoms[expected])
        np.testing.assert_allclose(m.weights[order], nu.weights[expected], atol=1e-9)

    def test_identity_plan_any_t(self):
        mu = DiscreteMeasure([[0.0, 0.0], [1.0, 2.0], [3.0, 1.0]], [0.2, 0.3, 0.5])
        plan = TransportPlan.from_dense(np.diag(mu.weights))
        for t in (0.0, 0.3, 0.75, 1.0):
            m = interpolate(plan, mu, mu, t)
            np.testing.assert_allclose(m.atoms, mu.atoms, rtol=1e-15)
            np.testing.assert_allclose(m.weights, mu.weights, rtol=1e-15)

    def test_midpoint_of_a_shift(self):
        mu = DiscreteMeasure.uniform([[0.0], [1.0]])
        nu = DiscreteMeasure.uniform([[2.0], [3.0]])
        plan = TransportPlan.from_chain((2, 2), [0, 1], [0, 1], [0.5, 0.5])
        m = interpolate(plan, mu, nu, 0.5)
        assert m.atoms[:, 0].tolist() == [1.0, 2.0]
        assert m.weights.tolist() == [0.5, 0.5]

    def test_tiny_entries_dropped_and_renormalized(self):
        mu = DiscreteMeasure.uniform([[0.0], [1.0]])
        plan = TransportPlan.from_dense([[0.5, 1e-14], [0.0, 0.5]])
        m = interpolate(plan, mu, mu, 0.5)
        assert m.n == 2
        assert m.weights.sum() == pytest.approx(1.0)

    def test_bad_t(self, solved):
        mu, nu, plan = solved
        with pytest.raises(BadT):
            interpolate(plan, mu, nu, 1.5)
        with pytest.raises(BadT):
            interpolate(plan, mu, nu, -0.1)

    def test_wrong_cost_family(self, solved):
        mu, nu, plan = solved
        with pytest.raises(WrongCostFamily):
            interpolate(plan, mu, nu, 0.5, CostSpec(CostFamily.EUCLIDEAN))

    def test_sphere_measures_rejected_with_default_cost(self):
        mu = DiscreteMeasure.uniform([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], Domain.UNIT_SPHERE)
        nu = DiscreteMeasure.uniform([[0.0, 0.0, 1.0], [0.0, -1.0, 0.0]], Domain.UNIT_SPHERE)
        plan = TransportPlan.from_dense(np.eye(2) / 2)
        with pytest.raises(WrongCostFamily):
            interpolate(plan, mu, nu, 0.5)

    def test_all_mass_below_floor(self):
        mu = DiscreteMeasure.uniform([[0.0]])
        with pytest.raises(DegeneratePlan):
            interpolate(TransportPlan.from_dense([[1e-13]]), mu, mu, 0.5)

    def test_shape_mismatch(self, solved):
        mu, nu, plan = solved
        with pytest.raises(ShapeMismatch):
            interpolate(plan, nu, mu, 0.5)


class TestBarycentricMap:
    def test_permutation_plan(self):
        mu = DiscreteMeasure.uniform([[0.0], [1.0]])
        nu = DiscreteMeasure.uniform([[5.0], [7.0]])
        plan = TransportPlan.from_chain((2, 2), [0, 1], [1, 0], [0.5, 0.5])
        np.testing.assert_allclose(barycentric_map(plan, mu, nu), [[7.0], [5.0]])

    def test_split_row_averages(self):
        mu = DiscreteMeasure.uniform([[0.0, 0.0]])
        nu = DiscreteMeasure([[2.0, 0.0], [0.0, 4.0]], [0.25, 0.75])
        plan = TransportPlan.from_dense([[0.25, 0.75]])
        np.testing.assert_allclose(barycentric_map(plan, mu, nu), [[0.5, 3.0]])

    def test_empty_row_stays_put(self):
        mu = DiscreteMeasure.uniform([[0.0], [9.0]])
        nu = DiscreteMeasure.uniform([[1.0], [2.0]])
        plan = TransportPlan.from_dense([[0.5, 0.5], [0.0, 0.0]])
        np.testing.assert_allclose(barycentric_map(plan, mu, nu), [[1.5], [9.0]])


class TestSampleCoupling:
    def test_single_entry(self):
        plan = TransportPlan.from_dense([[0.0, 0.0], [0.0, 1.0]])
        assert sample_coupling(plan, 50, seed=1) == [(1, 1)] * 50

    def test_uniform_frequencies(self):
        plan = TransportPlan.from_dense(np.full((2, 2), 0.25))
        k = 100_000
        counts = Counter(sample_coupling(plan, k, seed=2))
        for cell in [(0, 0), (0, 1), (1, 0), (1, 1)]:
            assert counts[cell] / k == pytest.approx(0.25, abs=0.01)

    def test_same_seed_same_samples(self, solved):
        _, _, plan = solved
        assert sample_coupling(plan, 100, seed=7) == sample_coupling(plan, 100, seed=7)

    def test_never_samples_zero_entries(self):
        plan = TransportPlan.from_chain((3, 3), [0, 1, 2], [2, 0, 1], [0.2, 0.3, 0.5])
        samples = set(sample_coupling(plan, 1000, seed=3))
        assert samples <= {(0, 2), (1, 0), (2, 1)}

    def test_zero_mass(self):
        with pytest.raises(DegeneratePlan):
            sample_coupling(TransportPlan.from_dense(np.zeros((2, 2))), 5)

    def test_bad_k(self):
        with pytest.raises(InvalidSpec):
            sample_coupling(TransportPlan.from_dense([[1.0]]), 0)

    def test_unnormalized_plan_warns(self, caplog):
        plan = TransportPlan.from_dense([[1.0, 0.0], [0.0, 1.0]])
        with caplog.at_level(logging.WARNING, logger="amortot.coupling"):
            samples = sample_coupling(plan, 10, seed=0)
        assert "total mass" in caplog.text
        assert set(samples) <= {(0, 0), (1, 1)}
