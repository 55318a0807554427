"""Tests for the sharp inequality verifiers and the randomized sweep."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadic_bellman.errors import DomainError, UsageError
from dyadic_bellman.linearization import linearize
from dyadic_bellman.measure_tree import build_random
from dyadic_bellman.sharp_inequalities import (
    FamilyKind,
    complete_to_maximal,
    gap_at_beta_star,
    inequality_terms,
    instance_records,
    is_maximal_family,
    make_family,
    min_slacks,
    sample_family,
    sweep_inequalities,
    verify_310,
    verify_cor31,
    verify_thm31,
    verify_thm32,
)
from dyadic_bellman.stepfn import StepFunction, random_step_function


@pytest.fixture
def split_phi(binary2):
    """(4, 0, 0, 4): S_phi = {0, 3, 6} with two incomparable leaves."""
    return StepFunction(binary2, [4.0, 0.0, 0.0, 4.0])


class TestWorkedValues:
    """Slacks of (4,0,0,0) at p = 2, beta = 1."""

    def test_thm31(self, worked_phi, worked_lin):
        assert verify_thm31(worked_phi, 2.0, worked_lin, [1], 1.0) == pytest.approx(0.375)

    def test_thm32(self, worked_phi, worked_lin):
        assert verify_thm32(worked_phi, 2.0, worked_lin, [1], 1.0) == pytest.approx(1.75)

    def test_cor31(self, worked_phi, worked_lin):
        assert verify_cor31(worked_phi, 2.0, worked_lin, [3], 1.0) == pytest.approx(1.125)

    def test_whole_space(self, worked_phi, worked_lin):
        assert verify_310(worked_phi, 2.0, 1.0, worked_lin) == pytest.approx(2.125)
        assert verify_310(worked_phi, 2.0, 1.0) == pytest.approx(2.125)

    def test_parts_add_up(self, worked_phi, worked_lin):
        """Inside plus outside equals the whole-space slack."""
        for family in ([1], [3], [0]):
            inside = verify_thm32(worked_phi, 2.0, worked_lin, family, 1.0)
            outside = verify_cor31(worked_phi, 2.0, worked_lin, family, 1.0)
            assert inside + outside == pytest.approx(verify_310(worked_phi, 2.0, 1.0, worked_lin))

    def test_terms(self, worked_lin):
        terms = inequality_terms(worked_lin, [1], 1.0)
        assert dict(terms.member_y) == pytest.approx({1: 2.0})
        assert dict(terms.member_mu) == pytest.approx({1: 0.5})
        assert terms.rho[1] == pytest.approx(0.5)
        assert terms.tau[1] == pytest.approx(1.5)


class TestFamilies:
    """Family validation and completion."""

    def test_nested_rejected(self, worked_phi, worked_lin):
        with pytest.raises(UsageError, match="nested"):
            verify_thm32(worked_phi, 2.0, worked_lin, [0, 3], 1.0)

    def test_non_member_rejected(self, worked_phi, worked_lin):
        with pytest.raises(UsageError, match="not a member"):
            verify_cor31(worked_phi, 2.0, worked_lin, [2], 1.0)

    def test_non_maximal_rejected(self, split_phi):
        lin = linearize(split_phi, 2.0)
        assert lin.s_phi == (0, 3, 6)
        with pytest.raises(UsageError, match="not maximal"):
            verify_thm31(split_phi, 2.0, lin, [3], 1.0)

    def test_beta_domain(self, worked_phi, worked_lin):
        with pytest.raises(DomainError, match="beta"):
            verify_310(worked_phi, 2.0, 0.0, worked_lin)

    def test_completion(self, split_phi):
        lin = linearize(split_phi, 2.0)
        assert not is_maximal_family(lin, [3])
        assert complete_to_maximal(lin, [3]) == (3, 6)
        assert make_family(lin, [3, 6]).kind is FamilyKind.MAXIMAL
        assert make_family(lin, [3]).kind is FamilyKind.PLAIN

    def test_empty_completion(self, split_phi):
        """The empty family completes to the minimal members of S_phi."""
        lin = linearize(split_phi, 2.0)
        assert complete_to_maximal(lin, []) == (3, 6)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_sampled_families(self, seed):
        rng = np.random.default_rng(seed)
        phi = random_step_function(rng, build_random(rng, int(rng.integers(1, 6)), 3))
        lin = linearize(phi, 2.0)
        assert sample_family(lin, rng, maximal=True).kind is FamilyKind.MAXIMAL
        plain = sample_family(lin, rng, maximal=False)
        assert set(plain.members) <= set(lin.s_phi)


class TestBetaStar:
    def test_constant_is_tight(self, binary2):
        phi = StepFunction.constant(binary2, 2.0)
        assert gap_at_beta_star(phi, 2.0) == pytest.approx(0.0, abs=1e-12)

    def test_nonnegative(self, worked_phi):
        assert gap_at_beta_star(worked_phi, 2.0) >= -1e-9


class TestSweep:
    """Randomized evaluation over seeded instances."""

    @pytest.fixture
    def instances(self):
        rng = np.random.default_rng(7)
        out = []
        for i in range(12):
            tree = build_random(rng, int(rng.integers(1, 6)), 3)
            out.append((random_step_function(rng, tree), (1.5, 2.0, 3.0)[i % 3]))
        return out

    def test_records(self, worked_phi):
        records = instance_records(0, worked_phi, 2.0, seed=1)
        kinds = {r.inequality for r in records}
        assert kinds == {"thm31", "thm32", "cor31", "310", "additivity"}
        # three fixed betas plus beta*
        assert len(records) == 4 * 5

    def test_all_nonnegative(self, instances):
        slacks = min_slacks(sweep_inequalities(instances, seed=3))
        for name in ("thm31", "thm32", "cor31", "310"):
            assert slacks[name] >= -1e-7, name
        assert slacks["additivity"] >= -1e-7

    def test_thread_independent(self, instances):
        serial = sweep_inequalities(instances, seed=3)
        threaded = sweep_inequalities(instances, seed=3, threads=4)
        assert [r.to_row() for r in serial] == [r.to_row() for r in threaded]

    def test_instance_order(self, instances):
        records = sweep_inequalities(instances, seed=3)
        indices = [r.instance for r in records]
        assert indices == sorted(indices)
