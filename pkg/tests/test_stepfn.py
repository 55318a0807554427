"""Tests for step functions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadic_bellman.errors import DomainError, TreeFormatError, UsageError
from dyadic_bellman.measure_tree import build_random, build_uniform, refine_leaf, store_tree
from dyadic_bellman.stepfn import (
    Moments,
    StepFunction,
    average,
    l1_integral,
    load_function,
    lp_distance,
    moments,
    p_average,
    p_integral,
    random_step_function,
    store_function,
    transfer,
)


class TestStepFunction:
    """Test construction and node aggregates."""

    def test_averages(self, worked_phi):
        """Node averages aggregate bottom-up."""
        assert average(worked_phi, 0) == pytest.approx(1.0)
        assert average(worked_phi, 1) == pytest.approx(2.0)
        assert average(worked_phi, 2) == 0.0
        assert average(worked_phi, 3) == 4.0
        assert worked_phi.integral(1) == pytest.approx(1.0)

    def test_negative_rejected(self, binary2):
        with pytest.raises(DomainError, match="negative on leaf 5"):
            StepFunction(binary2, [1.0, 1.0, -1.0, 1.0])

    def test_non_finite_rejected(self, binary2):
        with pytest.raises(DomainError, match="finite"):
            StepFunction(binary2, [1.0, np.inf, 1.0, 1.0])

    def test_wrong_length(self, binary2):
        with pytest.raises(UsageError, match="3 values"):
            StepFunction(binary2, [1.0, 1.0, 1.0])

    def test_values_read_only(self, worked_phi):
        with pytest.raises(ValueError):
            worked_phi.values[0] = 1.0

    def test_from_leaf_map(self, binary2):
        phi = StepFunction.from_leaf_map(binary2, {6: 1.0, 3: 4.0, 4: 0.0, 5: 0.0})
        assert phi.leaf_map() == {3: 4.0, 4: 0.0, 5: 0.0, 6: 1.0}
        assert phi.value_at(6) == 1.0

    def test_from_leaf_map_errors(self, binary2):
        with pytest.raises(TreeFormatError, match="node 1 is not a leaf"):
            StepFunction.from_leaf_map(binary2, {1: 1.0, 3: 1.0, 4: 1.0, 5: 1.0, 6: 1.0})
        with pytest.raises(TreeFormatError, match="no value given for leaf 6"):
            StepFunction.from_leaf_map(binary2, {3: 1.0, 4: 1.0, 5: 1.0})

    def test_constant_and_scaled(self, binary2):
        phi = StepFunction.constant(binary2, 2.0).scaled(1.5)
        assert average(phi, 0) == pytest.approx(3.0)
        assert not phi.is_zero
        assert StepFunction.constant(binary2, 0.0).is_zero


class TestIntegrals:
    """Test integrals and moments."""

    def test_integrals(self, worked_phi):
        assert l1_integral(worked_phi) == pytest.approx(1.0)
        assert p_integral(worked_phi, 2.0) == pytest.approx(4.0)
        assert p_integral(worked_phi, 2.0, leaves=[4, 5]) == 0.0
        assert p_integral(worked_phi, 3.0, leaves=np.array([True, False, False, False])) == pytest.approx(16.0)
        assert p_average(worked_phi, 2.0, 1) == pytest.approx(8.0)

    def test_leaf_set_errors(self, worked_phi):
        with pytest.raises(UsageError, match="not a leaf"):
            p_integral(worked_phi, 2.0, leaves=[1])
        with pytest.raises(UsageError, match="mask length"):
            p_integral(worked_phi, 2.0, leaves=np.array([True, False]))

    def test_moments(self, worked_phi):
        m = moments(worked_phi, 2.0)
        assert (m.f, m.F) == pytest.approx((1.0, 4.0))
        assert m.ratio == pytest.approx(0.25)

    def test_moments_of_zero(self, binary2):
        with pytest.raises(DomainError, match="zero function"):
            moments(StepFunction.constant(binary2, 0.0), 2.0)

    def test_constant_moments_hold_holder(self, binary2):
        """Rounding never pushes F below f^p."""
        m = moments(StepFunction.constant(binary2, 0.1), 3.0)
        assert m.F >= m.f ** 3
        assert m.ratio == pytest.approx(1.0)

    def test_holder_violation(self):
        with pytest.raises(DomainError, match="Hölder"):
            Moments(2.0, 2.0, 3.0)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_integral_additive_over_children(self, seed):
        rng = np.random.default_rng(seed)
        phi = random_step_function(rng, build_random(rng, int(rng.integers(1, 6)), 3))
        tree = phi.tree
        for node in range(tree.n_nodes):
            kids = tree.children(node)
            if kids:
                assert phi.integral(node) == pytest.approx(
                    sum(phi.integral(k) for k in kids), rel=1e-12, abs=1e-300
                )


class TestTransfer:
    """Test carrying functions onto refinements."""

    def test_transfer(self, worked_phi):
        fine = refine_leaf(worked_phi.tree, 3, (0.5, 0.5))
        moved = transfer(worked_phi, fine)
        assert list(moved.values) == [4.0, 4.0, 0.0, 0.0, 0.0]
        assert moments(moved, 2.0).F == pytest.approx(4.0)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), p=st.sampled_from([1.5, 2.0, 3.0]))
    def test_refinement_keeps_moments(self, seed, p):
        rng = np.random.default_rng(seed)
        phi = random_step_function(rng, build_random(rng, int(rng.integers(1, 5)), 3))
        leaf = int(rng.choice(phi.tree.leaves))
        share = float(rng.uniform(0.1, 0.9))
        moved = transfer(phi, refine_leaf(phi.tree, leaf, (share, 1.0 - share)))
        before, after = moments(phi, p), moments(moved, p)
        assert after.f == pytest.approx(before.f, rel=1e-12)
        assert after.F == pytest.approx(before.F, rel=1e-12)

    def test_transfer_unrelated(self, worked_phi):
        with pytest.raises(UsageError, match="does not refine"):
            transfer(worked_phi, build_uniform(3, 1))

    def test_lp_distance(self, worked_phi):
        fine = refine_leaf(worked_phi.tree, 3, (0.5, 0.5))
        other = StepFunction(fine, [4.0, 2.0, 0.0, 0.0, 0.0])
        assert lp_distance(worked_phi, other, 2.0) == pytest.approx(4.0 * 0.125)
        assert lp_distance(other, worked_phi, 2.0) == pytest.approx(0.5)


class TestRandom:
    """Test the random generator."""

    def test_never_zero(self, binary2):
        for seed in range(30):
            phi = random_step_function(np.random.default_rng(seed), binary2, zero_prob=0.95)
            assert not phi.is_zero

    def test_reproducible(self, binary2):
        a = random_step_function(np.random.default_rng(3), binary2)
        b = random_step_function(np.random.default_rng(3), binary2)
        np.testing.assert_array_equal(a.values, b.values)


class TestFiles:
    """Test function documents."""

    def test_inline_round_trip(self, tmp_path, worked_phi):
        path = store_function(worked_phi, tmp_path / "phi.yaml")
        loaded = load_function(path)
        assert loaded.tree.structurally_equal(worked_phi.tree)
        np.testing.assert_array_equal(loaded.values, worked_phi.values)

    def test_tree_by_path(self, tmp_path, worked_phi):
        """A relative tree path resolves against the function file."""
        path = store_function(worked_phi, tmp_path / "fn" / "phi.yaml",
                              tree_path=tmp_path / "fn" / "tree.yaml")
        assert "tree.yaml" in path.read_text()
        np.testing.assert_array_equal(load_function(path).values, worked_phi.values)

    def test_handwritten_json(self, tmp_path, binary2):
        store_tree(binary2, tmp_path / "t.yaml")
        path = tmp_path / "phi.json"
        path.write_text(
            '{"tree": "t.yaml", "leaf_values": [{"leaf_id": 3, "value": 1}, '
            '{"leaf_id": 4, "value": 2}, {"leaf_id": 5, "value": 3}, {"leaf_id": 6, "value": 4}]}'
        )
        assert list(load_function(path).values) == [1.0, 2.0, 3.0, 4.0]

    def test_missing_fields(self, tmp_path):
        path = tmp_path / "phi.yaml"
        path.write_text("tree: t.yaml\n")
        with pytest.raises(TreeFormatError, match="leaf_values"):
            load_function(path)
