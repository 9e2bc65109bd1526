"""Tests for measures.py: measures, cost matrices, plans and potentials."""

import math

import numpy as np
import pytest

from amortot.errors import (
    DimensionMismatch,
    DomainMismatch,
    EmptyMeasure,
    EpsilonNonPositive,
    PositivityViolation,
    ShapeMismatch,
)
from amortot.measures import (
    CostFamily,
    CostMatrix,
    CostSpec,
    DiscreteMeasure,
    Domain,
    Potentials,
    TransportPlan,
    build_cost_matrix,
    marginal_errors,
    plan_from_potentials,
    transport_cost,
)


def _point(*coords, domain=Domain.EUCLIDEAN):
    return DiscreteMeasure([list(coords)], [1.0], domain)


# ---------------------------------------------------------------------------
# DiscreteMeasure
# ---------------------------------------------------------------------------


class TestDiscreteMeasure:
    def test_weights_renormalized(self):
        m = DiscreteMeasure([[0.0], [1.0]], [2.0, 6.0])
        assert m.weights.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(m.weights, [0.25, 0.75])

    def test_normalized_weights_kept_bitwise(self):
        w = np.array([0.1, 0.2, 0.7])
        m = DiscreteMeasure([[0.0], [1.0], [2.0]], w)
        assert np.array_equal(m.weights, w)

    def test_zero_weight_rejected(self):
        with pytest.raises(PositivityViolation):
            DiscreteMeasure([[0.0], [1.0]], [1.0, 0.0])

    def test_negative_weight_rejected(self):
        with pytest.raises(PositivityViolation):
            DiscreteMeasure([[0.0], [1.0]], [1.5, -0.5])

    def test_no_atoms_rejected(self):
        with pytest.raises(EmptyMeasure):
            DiscreteMeasure(np.zeros((0, 2)), np.zeros(0))

    def test_atom_weight_count_mismatch(self):
        with pytest.raises(ShapeMismatch):
            DiscreteMeasure([[0.0], [1.0]], [1.0])

    def test_sphere_atoms_must_be_unit(self):
        with pytest.raises(DomainMismatch):
            DiscreteMeasure([[0.0, 0.0, 1.1]], [1.0], Domain.UNIT_SPHERE)

    def test_arrays_are_read_only(self):
        m = DiscreteMeasure.uniform([[0.0, 0.0], [1.0, 1.0]])
        with pytest.raises(ValueError):
            m.atoms[0, 0] = 5.0

    def test_uniform(self):
        m = DiscreteMeasure.uniform(np.zeros((4, 2)))
        assert m.n == 4 and m.dim == 2
        np.testing.assert_allclose(m.weights, 0.25)


# ---------------------------------------------------------------------------
# build_cost_matrix
# ---------------------------------------------------------------------------


class TestBuildCostMatrix:
    def test_identical_single_atoms(self):
        C = build_cost_matrix(_point(0.0, 0.0), _point(0.0, 0.0), CostSpec(CostFamily.SQ_EUCLIDEAN))
        assert C.values.tolist() == [[0.0]]

    def test_pythagorean(self):
        C = build_cost_matrix(_point(0.0, 0.0), _point(3.0, 4.0), CostSpec(CostFamily.SQ_EUCLIDEAN))
        assert C.values[0, 0] == pytest.approx(25.0)

    def test_euclidean(self):
        C = build_cost_matrix(_point(0.0, 0.0), _point(3.0, 4.0), CostSpec(CostFamily.EUCLIDEAN))
        assert C.values[0, 0] == pytest.approx(5.0)

    def test_antipodal_geodesic(self):
        north = _point(0.0, 0.0, 1.0, domain=Domain.UNIT_SPHERE)
        south = _point(0.0, 0.0, -1.0, domain=Domain.UNIT_SPHERE)
        C = build_cost_matrix(north, south, CostSpec(CostFamily.SPHERICAL_GEODESIC))
        assert C.values[0, 0] == pytest.approx(math.pi)

    def test_geodesic_clamps_rounding(self):
        """Inner products a hair above 1 must not produce NaN."""
        v = np.array([0.6, 0.8, 0.0])
        rng = np.random.default_rng(3)
        atoms = np.vstack([v] + [w / np.linalg.norm(w) for w in rng.normal(size=(20, 3))])
        m = DiscreteMeasure.uniform(atoms, Domain.UNIT_SPHERE)
        C = build_cost_matrix(m, m, CostSpec(CostFamily.SPHERICAL_GEODESIC))
        assert np.all(np.isfinite(C.values))
        np.testing.assert_allclose(np.diag(C.values), 0.0, atol=1e-7)

    def test_geodesic_needs_sphere(self):
        with pytest.raises(DomainMismatch):
            build_cost_matrix(_point(0.0, 0.0, 1.0), _point(0.0, 1.0, 0.0), CostSpec(CostFamily.SPHERICAL_GEODESIC))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            build_cost_matrix(_point(0.0, 0.0), _point(0.0, 0.0, 0.0), CostSpec())

    def test_symmetric_family(self):
        rng = np.random.default_rng(0)
        a = DiscreteMeasure.uniform(rng.normal(size=(4, 2)))
        b = DiscreteMeasure.uniform(rng.normal(size=(5, 2)))
        C_ab = build_cost_matrix(a, b, CostSpec()).values
        C_ba = build_cost_matrix(b, a, CostSpec()).values
        np.testing.assert_allclose(C_ab, C_ba.T)
        assert np.all(C_ab >= 0)


# ---------------------------------------------------------------------------
# plan_from_potentials / marginal_errors
# ---------------------------------------------------------------------------


class TestPlanFromPotentials:
    def test_single_cell_exponent_zero(self):
        C = CostMatrix([[2.5]])
        plan = plan_from_potentials(Potentials([1.0], [1.5], 0.3), C)
        assert plan.to_dense().tolist() == [[1.0]]

    def test_half(self):
        eps = 0.2
        C = CostMatrix([[eps * math.log(2.0)]])
        plan = plan_from_potentials(Potentials([0.0], [0.0], eps), C)
        assert plan.to_dense()[0, 0] == pytest.approx(0.5, rel=1e-14)

    def test_zero_epsilon_rejected(self):
        with pytest.raises(EpsilonNonPositive):
            plan_from_potentials(Potentials([0.0], [0.0], 0.0), CostMatrix([[0.0]]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            plan_from_potentials(Potentials([0.0, 0.0], [0.0], 1.0), CostMatrix([[0.0]]))

    def test_shift_invariance(self):
        rng = np.random.default_rng(1)
        C = CostMatrix(rng.uniform(size=(5, 4)))
        f, g = rng.normal(size=5), rng.normal(size=4)
        base = plan_from_potentials(Potentials(f, g, 0.5), C).to_dense()
        shifted = plan_from_potentials(Potentials(f + 3.0, g - 3.0, 0.5), C).to_dense()
        np.testing.assert_allclose(shifted, base, rtol=1e-12)

    def test_nonnegative_for_extreme_inputs(self):
        C = CostMatrix([[0.0, 1e3], [1e3, 0.0]])
        plan = plan_from_potentials(Potentials([-500.0, 0.0], [0.0, 1.0], 0.01), C)
        assert np.all(plan.to_dense() >= 0.0)


class TestMarginalErrors:
    def test_product_plan_is_feasible(self):
        a = DiscreteMeasure([[0.0], [1.0], [2.0]], [0.2, 0.3, 0.5])
        b = DiscreteMeasure([[0.0], [1.0]], [0.4, 0.6])
        plan = TransportPlan.from_dense(np.outer(a.weights, b.weights))
        row, col = marginal_errors(plan, a, b)
        assert row <= 1e-15 and col <= 1e-15

    def test_zero_plan(self):
        a = DiscreteMeasure.uniform([[0.0], [1.0]])
        plan = TransportPlan.from_dense(np.zeros((2, 2)))
        assert marginal_errors(plan, a, a) == pytest.approx((1.0, 1.0))

    def test_shape_mismatch(self):
        a = DiscreteMeasure.uniform([[0.0], [1.0]])
        with pytest.raises(ShapeMismatch):
            marginal_errors(TransportPlan.from_dense(np.zeros((3, 2))), a, a)


# ---------------------------------------------------------------------------
# TransportPlan
# ---------------------------------------------------------------------------


class TestTransportPlan:
    def test_chain_dense_round_trip(self):
        chain = TransportPlan.from_chain((3, 3), [0, 1, 1, 2], [0, 0, 1, 2], [0.3, 0.1, 0.2, 0.4])
        back = TransportPlan.from_dense(chain.to_dense()).to_chain()
        assert back.triples() == chain.triples()

    def test_chain_sorted_by_row_then_col(self):
        chain = TransportPlan.from_chain((2, 2), [1, 0, 1], [1, 0, 0], [0.4, 0.5, 0.1])
        assert [(i, j) for i, j, _ in chain.triples()] == [(0, 0), (1, 0), (1, 1)]

    def test_chain_length_bound(self):
        with pytest.raises(ShapeMismatch):
            TransportPlan.from_chain((2, 2), [0, 0, 1, 1], [0, 1, 0, 1], [0.25] * 4)

    def test_negative_mass_rejected(self):
        with pytest.raises(PositivityViolation):
            TransportPlan.from_dense([[0.5, -0.1], [0.1, 0.5]])

    def test_transport_cost_dense_and_chain_agree(self):
        C = CostMatrix([[0.0, 2.0], [1.0, 3.0]])
        chain = TransportPlan.from_chain((2, 2), [0, 1], [1, 0], [0.5, 0.5])
        assert transport_cost(chain, C) == pytest.approx(1.5)
        assert transport_cost(TransportPlan.from_dense(chain.to_dense()), C) == pytest.approx(1.5)

    def test_sums(self):
        chain = TransportPlan.from_chain((2, 3), [0, 0, 1], [0, 1, 2], [0.2, 0.3, 0.5])
        np.testing.assert_allclose(chain.row_sums(), [0.5, 0.5])
        np.testing.assert_allclose(chain.col_sums(), [0.2, 0.3, 0.5])
        assert chain.total_mass() == pytest.approx(1.0)


class TestPotentials:
    def test_nonfinite_rejected(self):
        with pytest.raises(PositivityViolation):
            Potentials([np.nan], [0.0], 1.0)

    def test_max_violation(self):
        C = CostMatrix([[1.0, 2.0], [2.0, 1.0]])
        assert Potentials([0.5, 0.5], [0.5, 0.5]).max_violation(C) == pytest.approx(0.0)
