"""Linearization of the maximal operator.

For a step function φ, every leaf is owned by the largest node attaining
Mφ there. Grouping leaves by owner gives the sets A(φ,I); the owners plus
the root form S_φ, and I* is the nearest proper ancestor of I inside S_φ.
On S_φ the maximal function is the constant y_I = Av_I(φ) on A(φ,I).
"""

from __future__ import annotations
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Optional, Tuple
import logging
import math

import numpy as np

from .bellman_fn import check_p
from .config import TAU_NUM
from .maximal_op import MaximalResult, exceeds, maximal_function
from .measure_tree import NodeId
from .stepfn import StepFunction

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Linearization:
    """S_φ with its sets, correspondence and coefficients.

    Attributes:
        phi: The linearized function
        p: Exponent used for x_I
        s_phi: Members of S_φ ordered top-down (by depth, then id)
        a_sets: I -> leaves of A(φ,I)
        a_I: I -> μ(A(φ,I))
        y_I: I -> Av_I(φ)
        x_I: I -> a_I^{−1+1/p}·∫_{A(φ,I)} φ dμ (0 when a_I = 0)
        star: I -> I* for every member except the root
        integral_on_a: I -> ∫_{A(φ,I)} φ dμ
        p_integral_on_a: I -> ∫_{A(φ,I)} φ^p dμ
        leaf_owner: Per leaf (leaf order), the member whose A-set holds it
        in_s: Per node, membership in S_φ
        maximal: The maximal function the linearization was read from
    """
    phi: StepFunction
    p: float
    s_phi: Tuple[NodeId, ...]
    a_sets: Mapping[NodeId, np.ndarray]
    a_I: Mapping[NodeId, float]
    y_I: Mapping[NodeId, float]
    x_I: Mapping[NodeId, float]
    star: Mapping[NodeId, NodeId]
    integral_on_a: Mapping[NodeId, float]
    p_integral_on_a: Mapping[NodeId, float]
    leaf_owner: np.ndarray
    in_s: np.ndarray
    maximal: MaximalResult

    @property
    def tree(self):
        return self.phi.tree

    def children_in_s(self, node: int) -> Tuple[NodeId, ...]:
        """Members J with J* = node."""
        return tuple(j for j, s in self.star.items() if s == node)

    def a_array(self) -> np.ndarray:
        """a_I as a per-node array, zero outside S_φ."""
        a = np.zeros(self.tree.n_nodes)
        for i, v in self.a_I.items():
            a[i] = v
        return a

    def integral_mphi_p(self) -> float:
        """Σ a_I y_I^p, which equals ∫(Mφ)^p."""
        return math.fsum(self.a_I[i] * self.y_I[i] ** self.p for i in self.s_phi)


def _freeze(d: dict) -> Mapping:
    return MappingProxyType(d)


def linearize(phi: StepFunction, p: float,
              result: Optional[MaximalResult] = None) -> Linearization:
    """Group leaves by the argmax of the maximal function."""
    p = check_p(p)
    tree = phi.tree
    result = result or maximal_function(phi)
    owner = result.argmax_node

    members, inverse = np.unique(owner, return_inverse=True)
    mu = tree.leaf_measures
    a = np.bincount(inverse, weights=mu, minlength=members.size)
    l1 = np.bincount(inverse, weights=phi.values * mu, minlength=members.size)
    lp = np.bincount(inverse, weights=phi.values ** p * mu, minlength=members.size)
    order = np.argsort(inverse, kind="stable")
    groups = np.split(tree.leaves[order], np.cumsum(np.bincount(inverse, minlength=members.size))[:-1])

    in_s = np.zeros(tree.n_nodes, dtype=bool)
    in_s[members] = True
    in_s[tree.root] = True

    a_sets, a_I, y_I, x_I, int_a, pint_a = {}, {}, {}, {}, {}, {}
    for k, node in enumerate(members):
        node = NodeId(int(node))
        g = groups[k]
        g.setflags(write=False)
        a_sets[node] = g
        a_I[node] = float(a[k])
        int_a[node] = float(l1[k])
        pint_a[node] = float(lp[k])
    if tree.root not in a_sets:
        empty = np.zeros(0, dtype=np.int64)
        empty.setflags(write=False)
        a_sets[tree.root] = empty
        a_I[tree.root] = int_a[tree.root] = pint_a[tree.root] = 0.0

    for node in a_I:
        y_I[node] = phi.average(node)
        x_I[node] = a_I[node] ** (-1.0 + 1.0 / p) * int_a[node] if a_I[node] > 0 else 0.0

    # nearest member at or above each node, top-down
    nearest = np.empty(tree.n_nodes, dtype=np.int64)
    nearest[tree.root] = tree.root
    for level in tree.levels[1:]:
        nearest[level] = np.where(in_s[level], level, nearest[tree.parent[level]])
    star = {
        NodeId(int(i)): NodeId(int(nearest[tree.parent[i]]))
        for i in np.flatnonzero(in_s) if i != tree.root
    }

    s_sorted = sorted(a_I, key=lambda i: (tree.depth_of(i), i))
    in_s.setflags(write=False)
    owner_ro = np.array(owner)
    owner_ro.setflags(write=False)
    logger.debug("linearized %d leaves into %d members of S_phi", tree.n_leaves, len(s_sorted))
    return Linearization(
        phi=phi,
        p=p,
        s_phi=tuple(s_sorted),
        a_sets=_freeze(a_sets),
        a_I=_freeze(a_I),
        y_I=_freeze(y_I),
        x_I=_freeze(x_I),
        star=_freeze(star),
        integral_on_a=_freeze(int_a),
        p_integral_on_a=_freeze(pint_a),
        leaf_owner=owner_ro,
        in_s=in_s,
        maximal=result,
    )


def lemma31_mismatches(phi: StepFunction, lin: Linearization) -> Tuple[NodeId, ...]:
    """Non-root nodes where S_φ membership disagrees with the ancestor test.

    The test: every proper ancestor J has Av_J(φ) < Av_I(φ), with the same
    tie tolerance the maximal function uses.
    """
    tree = phi.tree
    avg = phi.averages
    anc_max = np.full(tree.n_nodes, -np.inf)
    for level in tree.levels[1:]:
        par = tree.parent[level]
        anc_max[level] = np.maximum(anc_max[par], avg[par])
    non_root = np.flatnonzero(tree.parent >= 0)
    qualifies = np.ones(tree.n_nodes, dtype=bool)
    qualifies[non_root] = exceeds(avg[non_root], anc_max[non_root])
    bad = np.flatnonzero(qualifies != lin.in_s)
    return tuple(NodeId(int(i)) for i in bad)


def verify_lemma31(phi: StepFunction, lin: Linearization) -> bool:
    """I ∈ S_φ iff Av_J(φ) < Av_I(φ) for every proper ancestor J."""
    bad = lemma31_mismatches(phi, lin)
    if bad:
        logger.debug("ancestor test fails at nodes %s", bad[:10])
    return not bad


@dataclass(frozen=True)
class Lemma32Report:
    """The four structural properties of S_φ.

    Attributes:
        part_i: A(φ,J) meets I only when J ⊆ I
        part_ii: every internal member has a child outside S_φ
        part_iii: I is the disjoint union of A(φ,J) over members J ⊆ I
        part_iv: a_I = μ(I) − Σ_{J* = I} μ(J)
        leaf_members: Members that are leaves (part ii is not asserted there)
    """
    part_i: bool
    part_ii: bool
    part_iii: bool
    part_iv: bool
    leaf_members: Tuple[NodeId, ...] = ()

    @property
    def holds(self) -> bool:
        return self.part_i and self.part_ii and self.part_iii and self.part_iv


def verify_lemma32(phi: StepFunction, lin: Linearization,
                   tau_num: float = TAU_NUM) -> Lemma32Report:
    tree = phi.tree
    owner = lin.leaf_owner
    in_s = lin.in_s
    members = np.array(lin.s_phi, dtype=np.int64)

    # (i) owner is the deepest member containing the leaf
    nearest = np.empty(tree.n_nodes, dtype=np.int64)
    nearest[tree.root] = tree.root
    for level in tree.levels[1:]:
        nearest[level] = np.where(in_s[level], level, nearest[tree.parent[level]])
    part_i = bool(np.array_equal(nearest[tree.leaves], owner))

    # (ii) at internal members only
    internal = members[~tree.is_leaf_mask[members]]
    part_ii = True
    for node in internal:
        if all(in_s[c] for c in tree.children(node)):
            part_ii = False
            break
    leaf_members = tuple(NodeId(int(i)) for i in members[tree.is_leaf_mask[members]])

    # (iii) owners of leaves in I lie inside I, and the A-measures fill I
    min_owner_depth = np.full(tree.n_nodes, np.iinfo(np.int64).max)
    min_owner_depth[tree.leaves] = tree.depth[owner]
    a_sub = lin.a_array()
    for level in reversed(tree.levels[1:]):
        par = tree.parent[level]
        np.minimum.at(min_owner_depth, par, min_owner_depth[level])
        np.add.at(a_sub, par, a_sub[level])
    inside = min_owner_depth[members] >= tree.depth[members]
    filled = np.abs(a_sub[members] - tree.measure[members]) <= tau_num * tree.measure[members]
    part_iii = bool(np.all(inside) and np.all(filled))

    # (iv) measure identity
    star_sum = np.zeros(tree.n_nodes)
    for j, s in lin.star.items():
        star_sum[s] += tree.measure[j]
    a_arr = lin.a_array()
    expected = tree.measure[members] - star_sum[members]
    part_iv = bool(np.all(np.abs(a_arr[members] - expected) <= tau_num * tree.measure[members]))

    return Lemma32Report(part_i, part_ii, part_iii, part_iv, leaf_members)


def reconstruct_maximal(lin: Linearization) -> StepFunction:
    """Σ_{I∈S_φ} y_I·χ_{A(φ,I)} as a step function."""
    y = lin.phi.averages[lin.leaf_owner]
    return StepFunction(lin.tree, y)


__all__ = [
    "Linearization",
    "linearize",
    "lemma31_mismatches",
    "verify_lemma31",
    "Lemma32Report",
    "verify_lemma32",
    "reconstruct_maximal",
]
