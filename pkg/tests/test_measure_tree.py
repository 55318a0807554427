"""Tests for measure trees."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadic_bellman.errors import CapacityError, DomainError, TreeFormatError, UsageError
from dyadic_bellman.maximal_op import maximal_function
from dyadic_bellman.measure_tree import (
    MeasureTree,
    build_nested_chain,
    build_random,
    build_uniform,
    chain_layout,
    common_refinement,
    default_ring_levels,
    load_tree,
    refine_leaf,
    refine_leaves,
    select_subfamily,
    store_tree,
)
from dyadic_bellman.stepfn import StepFunction


class TestStructure:
    """Test structure queries on a complete binary tree."""

    def test_counts(self, binary2):
        assert binary2.n_nodes == 7
        assert binary2.n_leaves == 4
        assert binary2.max_depth == 2
        assert binary2.root == 0

    def test_leaf_order(self, binary2):
        """Leaves come in depth-first order."""
        assert list(binary2.leaves) == [3, 4, 5, 6]
        np.testing.assert_allclose(binary2.leaf_measures, [0.25] * 4)

    def test_relations(self, binary2):
        assert binary2.children(0) == (1, 2)
        assert binary2.parent_of(4) == 1
        assert binary2.parent_of(0) is None
        assert binary2.depth_of(5) == 2
        assert binary2.ancestors(4) == [4, 1, 0]
        assert binary2.is_leaf(6) and not binary2.is_leaf(2)

    def test_containment(self, binary2):
        """contains is reflexive and follows the tree."""
        assert binary2.contains(1, 3)
        assert binary2.contains(1, 1)
        assert not binary2.contains(1, 5)
        assert not binary2.contains(3, 1)
        assert list(binary2.leaves_under(2)) == [5, 6]
        assert sorted(binary2.subtree_nodes(1)) == [1, 3, 4]

    def test_arrays_read_only(self, binary2):
        with pytest.raises(ValueError):
            binary2.measure[0] = 0.5


class TestValidation:
    """Test malformed node tables."""

    @pytest.mark.parametrize("parent,measure,match", [
        ([-1, -1], [1.0, 1.0], "exactly one root"),
        ([-1, 0], [1.0, 1.0], "single child"),
        ([-1, 0, 0], [1.0, 0.3, 0.3], "children measures sum"),
        ([-1, 0, 0], [1.0, 1.0, 0.0], "non-positive"),
        ([-1], [0.5], "expected 1"),
        ([-1, 5, 0], [1.0, 0.5, 0.5], "invalid parent"),
        ([-1, 2, 1, 0, 0], [1.0, 0.5, 0.5, 0.5, 0.5], "not reachable"),
    ])
    def test_rejects(self, parent, measure, match):
        """Each violation names what went wrong."""
        with pytest.raises(TreeFormatError, match=match):
            MeasureTree(parent, measure)

    def test_tree_format_is_value_error(self):
        assert issubclass(TreeFormatError, ValueError)

    def test_capacity(self):
        """Trees beyond the node cap are refused before allocation."""
        with pytest.raises(CapacityError):
            build_uniform(2, 22)


class TestBuilders:
    """Test tree builders."""

    def test_uniform_measures(self):
        tree = build_uniform(3, 2)
        assert tree.n_nodes == 13
        assert tree.n_leaves == 9
        np.testing.assert_allclose(tree.leaf_measures, [1.0 / 9.0] * 9)

    def test_uniform_domain(self):
        with pytest.raises(DomainError):
            build_uniform(1, 3)

    def test_nested_chain_layout(self):
        """Ring first, then core; rings are subdivided."""
        tree = build_nested_chain([0.5, 0.5], ring_subdivision=2, ring_levels=1)
        layout = chain_layout(tree)
        assert layout.cores == (0, 2, 6)
        assert layout.rings == (1, 5)
        assert layout.depth == 2
        assert list(tree.leaves) == [3, 4, 7, 8, 6]
        assert tree.measure[6] == pytest.approx(0.25)

    def test_nested_chain_ratio_domain(self):
        with pytest.raises(DomainError, match="outside"):
            build_nested_chain([0.5, 1.0], 2)

    def test_chain_layout_rejects_other_trees(self):
        with pytest.raises(UsageError, match="not a nested chain"):
            chain_layout(build_uniform(3, 1))

    def test_default_ring_levels(self):
        assert [default_ring_levels(k) for k in (1, 2, 3, 4, 7, 8, 16)] == [1, 2, 2, 3, 3, 4, 5]
        with pytest.raises(DomainError):
            default_ring_levels(0)

    def test_nested_chain_leaves_shrink_with_depth(self):
        """The largest leaf shrinks as the chain deepens."""
        def largest(k):
            return float(build_nested_chain([0.5] * k, ring_subdivision=2).leaf_measures.max())

        doubling = [largest(k) for k in (1, 2, 4, 8, 16)]
        assert doubling == pytest.approx([0.5, 0.25, 0.0625, 0.03125, 0.015625])
        assert all(b < a for a, b in zip(doubling, doubling[1:]))
        consecutive = [largest(k) for k in range(1, 17)]
        assert all(b <= a for a, b in zip(consecutive, consecutive[1:]))

    def test_nested_chain_prefix(self):
        short = build_nested_chain([0.5, 0.4], ring_subdivision=2, ring_levels=2)
        long = build_nested_chain([0.5, 0.4, 0.3], ring_subdivision=2, ring_levels=2)
        assert long.extends(short)

    def test_maximal_on_rings_is_core_average(self):
        """With core averages rising down the chain, M phi on R_k is Av(I_k)."""
        depth = 4
        tree = build_nested_chain([0.5] * depth, ring_subdivision=2, ring_levels=1)
        layout = chain_layout(tree)
        values = {int(layout.cores[-1]): 2.0 ** (depth + 2)}
        for k, ring in enumerate(layout.rings):
            values.update({int(leaf): 2.0 ** k for leaf in tree.leaves_under(ring)})
        phi = StepFunction.from_leaf_map(tree, values)
        mphi = maximal_function(phi).mphi
        cores = [phi.average(c) for c in layout.cores]
        assert cores == pytest.approx([6.0, 11.0, 20.0, 36.0, 64.0])
        for k, ring in enumerate(layout.rings):
            for leaf in tree.leaves_under(ring):
                assert mphi.value_at(int(leaf)) == pytest.approx(cores[k], rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), depth=st.integers(1, 6), arity=st.integers(2, 4))
    def test_random_tree_valid(self, seed, depth, arity):
        """Random trees satisfy the invariants and the size limits."""
        tree = build_random(np.random.default_rng(seed), depth, arity)
        assert tree.max_depth <= depth
        assert np.all(tree.n_children <= arity)
        assert tree.leaf_measures.sum() == pytest.approx(1.0)
        assert tree.leaf_measures.min() > 0


class TestRefinement:
    """Test leaf refinement and subfamily selection."""

    def test_refine_leaf(self, binary2):
        """New children are appended; old ids keep their meaning."""
        fine = refine_leaf(binary2, 4, (0.6, 0.4))
        assert fine.n_nodes == 9
        assert fine.children(4) == (7, 8)
        assert fine.measure[7] == pytest.approx(0.15)
        assert fine.extends(binary2)
        assert list(fine.leaves) == [3, 7, 8, 5, 6]

    def test_refine_leaves_key_order(self, binary2):
        fine = refine_leaves(binary2, {6: (0.5, 0.5), 3: (0.5, 0.5)})
        assert fine.children(3) == (7, 8)
        assert fine.children(6) == (9, 10)

    @pytest.mark.parametrize("node,fractions,match", [
        (1, (0.5, 0.5), "not a leaf"),
        (3, (1.0,), "at least two"),
        (3, (0.7, 0.7), "sum to"),
        (3, (1.2, -0.2), "positive"),
    ])
    def test_refine_errors(self, binary2, node, fractions, match):
        with pytest.raises(UsageError, match=match):
            refine_leaf(binary2, node, fractions)

    def test_select_exact(self, binary2):
        """Whole leaves suffice when they hit the target."""
        tree, family = select_subfamily(binary2, 0, 0.5)
        assert tree is binary2
        assert family == frozenset({3, 4})

    def test_select_with_split(self, binary2):
        """A leftover leaf is split to supply the remainder."""
        tree, family = select_subfamily(binary2, 0, 0.6)
        assert tree.n_nodes == 9
        assert family == frozenset({3, 7})
        assert sum(tree.measure[j] for j in family) == pytest.approx(0.4)

    def test_select_leaf_node(self, binary2):
        """A leaf is refined as (1 - a, a)."""
        tree, family = select_subfamily(binary2, 3, 0.25)
        (child,) = family
        assert tree.parent_of(child) == 3
        assert tree.measure[child] == pytest.approx(0.75 * 0.25)

    def test_select_domain(self, binary2):
        with pytest.raises(DomainError):
            select_subfamily(binary2, 0, 1.0)

    def test_common_refinement(self, binary2):
        fine = refine_leaf(binary2, 3, (0.5, 0.5))
        assert common_refinement(binary2, fine) is fine
        assert common_refinement(fine, binary2) is fine
        with pytest.raises(UsageError, match="no common refinement"):
            common_refinement(fine, refine_leaf(binary2, 5, (0.5, 0.5)))


class TestFiles:
    """Test tree documents."""

    def test_round_trip(self, tmp_path, binary2):
        path = store_tree(refine_leaf(binary2, 3, (0.25, 0.75)), tmp_path / "tree.yaml")
        loaded = load_tree(path)
        assert loaded.structurally_equal(refine_leaf(binary2, 3, (0.25, 0.75)))

    def test_json_accepted(self, tmp_path):
        """JSON documents load unchanged."""
        path = tmp_path / "tree.json"
        path.write_text(
            '{"root": 0, "nodes": [{"id": 0, "parent": null, "measure": 1},'
            ' {"id": 1, "parent": 0, "measure": 0.5}, {"id": 2, "parent": 0, "measure": 0.5}]}'
        )
        assert load_tree(path).n_leaves == 2

    def test_duplicate_id(self):
        doc = {"nodes": [{"id": 0, "parent": None, "measure": 1}, {"id": 0, "parent": 0, "measure": 1}]}
        with pytest.raises(TreeFormatError, match="listed twice"):
            MeasureTree.from_dict(doc)

    def test_root_mismatch(self, binary2):
        doc = binary2.to_dict()
        doc["root"] = 3
        with pytest.raises(TreeFormatError, match="declared root"):
            MeasureTree.from_dict(doc)

    def test_not_a_document(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("just a string")
        with pytest.raises(TreeFormatError, match="mapping"):
            load_tree(path)
