"""Tests for the two-valued redistribution g_phi."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadic_bellman.errors import DomainError
from dyadic_bellman.extremal_search import zero_mass_diagnostics
from dyadic_bellman.g_construction import (
    build_g,
    g_prime,
    residual_split,
    sigma_phi,
    verify_g,
    young_diagnostics,
    zero_measure_of_g,
)
from dyadic_bellman.linearization import linearize
from dyadic_bellman.maximal_op import maximal_function
from dyadic_bellman.measure_tree import build_random
from dyadic_bellman.stepfn import StepFunction, random_step_function, transfer


@pytest.fixture
def two_valued_g(two_valued_phi):
    return build_g(two_valued_phi, 2.0, linearize(two_valued_phi, 2.0))


class TestTwoValued:
    """(3, 1, 8, 8) at p = 2."""

    def test_records(self, two_valued_g):
        assert set(two_valued_g.records) == {0, 2}
        root = two_valued_g.records[0]
        assert root.blocks == (1,)
        assert root.c_I == pytest.approx(2.5)
        assert root.gamma_I == pytest.approx(0.4)
        assert root.a_I == pytest.approx(0.5)
        assert root.stage2_feasible
        assert two_valued_g.records[2].c_I == pytest.approx(8.0)
        assert two_valued_g.all_feasible

    def test_split_leaf(self, two_valued_g):
        tree = two_valued_g.refined_tree
        assert list(tree.leaves) == [3, 7, 8, 5, 6]
        assert tree.children(4) == (7, 8)
        assert tree.measure[7] == pytest.approx(0.15)
        assert tree.measure[8] == pytest.approx(0.10)
        np.testing.assert_allclose(two_valued_g.g.values, [2.5, 2.5, 0.0, 8.0, 8.0])
        assert two_valued_g.records[0].occupied == (3, 7)

    def test_verify(self, two_valued_phi, two_valued_g):
        assert verify_g(two_valued_phi, 2.0, two_valued_g).holds

    def test_zero_measure(self, two_valued_g):
        assert zero_measure_of_g(two_valued_g) == pytest.approx(0.1)
        deficit = sum(r.a_I - r.gamma_I for r in two_valued_g.records.values())
        assert deficit == pytest.approx(0.1)

    def test_g_prime(self, two_valued_g):
        np.testing.assert_allclose(g_prime(two_valued_g).values, [2.5, 2.5, 2.5, 8.0, 8.0])

    def test_dominates(self, two_valued_phi, two_valued_g):
        mg = maximal_function(two_valued_g.g).mphi.values
        mphi = transfer(maximal_function(two_valued_phi).mphi, two_valued_g.refined_tree).values
        assert np.all(mg >= mphi - 1e-12)


class TestSigma:
    def test_worked(self, worked_phi, worked_lin):
        gphi = build_g(worked_phi, 2.0, worked_lin)
        p_map = zero_mass_diagnostics(worked_phi, 2.0, worked_lin, R=1.0).p_map
        assert p_map[3] == pytest.approx(16.0)
        assert p_map[0] == p_map[1] == 0.0
        assert sigma_phi(gphi, p_map) == pytest.approx(4.0)

    def test_two_valued(self, two_valued_phi, two_valued_g):
        lin = linearize(two_valued_phi, 2.0)
        p_map = zero_mass_diagnostics(two_valued_phi, 2.0, lin, R=1.0).p_map
        assert dict(p_map) == pytest.approx({0: 5.0, 2: 64.0})
        assert sigma_phi(two_valued_g, p_map) == pytest.approx(0.4 * 5.0 + 0.5 * 64.0)

    def test_missing_members_count_zero(self, two_valued_g):
        assert sigma_phi(two_valued_g, {}) == 0.0


class TestInfeasible:
    """(3, 1, 2, 2): the common value does not fit node 2."""

    @pytest.fixture
    def gphi(self, binary2):
        phi = StepFunction(binary2, [3.0, 1.0, 2.0, 2.0])
        return phi, build_g(phi, 2.0, linearize(phi, 2.0))

    def test_flagged(self, gphi):
        _, g = gphi
        root = g.records[0]
        assert not root.stage2_feasible
        assert not g.all_feasible
        assert root.blocks == (4, 2)
        assert root.c_I == pytest.approx(1.8)
        assert dict(root.block_values) == pytest.approx({4: 1.0, 2: 2.0})

    def test_still_verifies(self, gphi):
        phi, g = gphi
        assert verify_g(phi, 2.0, g).holds


class TestDiagnostics:
    def test_residual_split(self, two_valued_g):
        above, below = residual_split(two_valued_g, 2.0)
        assert above >= 0.0 and below >= 0.0
        assert residual_split(two_valued_g, 2.0, c=1.0)[0] > 0.0

    def test_bad_c(self, two_valued_g):
        with pytest.raises(DomainError, match="c must be positive"):
            residual_split(two_valued_g, 2.0, c=0.0)

    def test_young(self, two_valued_phi, two_valued_g):
        diag = young_diagnostics(two_valued_phi, 2.0, two_valued_g)
        assert diag.young_slack >= -1e-12
        assert diag.holder_gap >= -1e-12

    def test_identity_on_worked(self, worked_phi, worked_lin):
        """A function already vanishing outside its peak is left unchanged."""
        g = build_g(worked_phi, 2.0, worked_lin)
        np.testing.assert_allclose(g.g.values, worked_phi.values)


class TestProperties:
    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), p=st.sampled_from([1.5, 2.0, 3.0]))
    def test_random(self, seed, p):
        rng = np.random.default_rng(seed)
        phi = random_step_function(rng, build_random(rng, int(rng.integers(1, 6)), 3))
        gphi = build_g(phi, p, linearize(phi, p))
        assert verify_g(phi, p, gphi).holds
        deficit = math.fsum(r.a_I - r.gamma_I for r in gphi.records.values())
        assert zero_measure_of_g(gphi) >= deficit - 1e-9
        diag = young_diagnostics(phi, p, gphi)
        assert diag.young_slack >= -1e-9 * max(1.0, diag.cross)
