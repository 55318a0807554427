"""Finite truncations of measure trees.

A MeasureTree is a node table: each node has an optional parent and a
positive measure, children partition their parent, and the root has measure
one. Node ids are dense indices into the table and never change; refinement
returns a new tree whose table extends the old one, so a node id valid in a
coarse tree means the same set in every refinement of it.

Structure queries (children, depth, leaf spans) are derived once at
construction into read-only numpy arrays. Leaves are kept in depth-first
order, so the leaves under any node form a contiguous span and containment
is a span comparison.
"""

from __future__ import annotations
from dataclasses import dataclass, field
from pathlib import Path
from typing import FrozenSet, List, Mapping, NewType, Optional, Sequence, Tuple
import logging
import math

import numpy as np
import yaml

from .config import TAU_MEAS
from .errors import CapacityError, DomainError, TreeFormatError, UsageError
from .version import FORMAT_VERSION

logger = logging.getLogger(__name__)

NodeId = NewType("NodeId", int)

MAX_NODES = 2**22


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MeasureTree:
    """A finite tree of measurable sets.

    Attributes:
        parent: Parent id per node, -1 for the root
        measure: Measure per node, in (0, 1]
        tau_meas: Relative tolerance for child measure sums

    Invariants:
        - exactly one root, of measure 1
        - every internal node has at least two children
        - children measures sum to the parent measure within tau_meas
        - all measures strictly positive
    """
    parent: np.ndarray
    measure: np.ndarray
    tau_meas: float = field(default=TAU_MEAS, compare=False)

    def __post_init__(self):
        parent = np.array(self.parent, dtype=np.int64).ravel()
        measure = np.array(self.measure, dtype=np.float64).ravel()
        n = parent.size
        if n == 0:
            raise TreeFormatError("tree must have at least one node")
        if n > MAX_NODES:
            raise CapacityError(f"tree has {n} nodes, cap is {MAX_NODES}")
        if measure.size != n:
            raise TreeFormatError(
                f"parent table has {n} entries but measure table has {measure.size}"
            )
        object.__setattr__(self, "parent", _readonly(parent))
        object.__setattr__(self, "measure", _readonly(measure))
        self._derive()
        self._validate()

    # Derived structure

    def _derive(self) -> None:
        parent, n = self.parent, self.parent.size
        roots = np.flatnonzero(parent == -1)
        if roots.size != 1:
            raise TreeFormatError(f"tree must have exactly one root, found {roots.size}")
        bad = np.flatnonzero((parent < -1) | (parent >= n) | (parent == np.arange(n)))
        if bad.size:
            raise TreeFormatError(f"node {int(bad[0])} has invalid parent {int(parent[bad[0]])}")
        root = int(roots[0])

        non_root = np.flatnonzero(parent >= 0)
        order = np.argsort(parent[non_root], kind="stable")
        child_idx = non_root[order]
        n_children = np.bincount(parent[non_root], minlength=n)
        child_ptr = np.concatenate([[0], np.cumsum(n_children)])
        object.__setattr__(self, "root", NodeId(root))
        object.__setattr__(self, "child_idx", _readonly(child_idx))
        object.__setattr__(self, "child_ptr", _readonly(child_ptr))
        object.__setattr__(self, "n_children", _readonly(n_children))

        depth = np.full(n, -1, dtype=np.int64)
        levels = []
        frontier = np.array([root], dtype=np.int64)
        d = 0
        while frontier.size:
            depth[frontier] = d
            levels.append(_readonly(frontier))
            frontier, _ = self._expand(frontier)
            d += 1
        unreachable = np.flatnonzero(depth < 0)
        if unreachable.size:
            raise TreeFormatError(f"node {int(unreachable[0])} is not reachable from the root")
        object.__setattr__(self, "depth", _readonly(depth))
        object.__setattr__(self, "levels", tuple(levels))

        is_leaf = n_children == 0
        leaf_count = is_leaf.astype(np.int64)
        for level in reversed(levels[1:]):
            np.add.at(leaf_count, parent[level], leaf_count[level])

        span_start = np.zeros(n, dtype=np.int64)
        for level in levels[:-1]:
            internal = level[n_children[level] > 0]
            ch, counts = self._expand(internal)
            cnt = leaf_count[ch]
            excl = np.cumsum(cnt) - cnt
            first = np.cumsum(counts) - counts
            within = excl - np.repeat(excl[first], counts)
            span_start[ch] = np.repeat(span_start[internal], counts) + within
        span_stop = span_start + leaf_count

        leaves = np.flatnonzero(is_leaf)
        leaves = leaves[np.argsort(span_start[leaves], kind="stable")]
        leaf_pos = np.full(n, -1, dtype=np.int64)
        leaf_pos[leaves] = np.arange(leaves.size)
        object.__setattr__(self, "is_leaf_mask", _readonly(is_leaf))
        object.__setattr__(self, "span_start", _readonly(span_start))
        object.__setattr__(self, "span_stop", _readonly(span_stop))
        object.__setattr__(self, "leaves", _readonly(leaves))
        object.__setattr__(self, "leaf_pos", _readonly(leaf_pos))

    def _expand(self, frontier: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Children of every node in frontier, grouped by parent in order."""
        starts = self.child_ptr[frontier]
        counts = self.child_ptr[frontier + 1] - starts
        total = int(counts.sum())
        offsets = np.repeat(starts - (np.cumsum(counts) - counts), counts)
        return self.child_idx[np.arange(total) + offsets], counts

    def _validate(self) -> None:
        m, tau = self.measure, self.tau_meas
        bad = np.flatnonzero(~np.isfinite(m) | (m <= 0))
        if bad.size:
            raise TreeFormatError(f"node {int(bad[0])} has non-positive measure {m[bad[0]]!r}")
        if abs(m[self.root] - 1.0) > tau:
            raise TreeFormatError(f"root node {int(self.root)} has measure {m[self.root]!r}, expected 1")
        single = np.flatnonzero(self.n_children == 1)
        if single.size:
            raise TreeFormatError(f"node {int(single[0])} has a single child")
        non_root = np.flatnonzero(self.parent >= 0)
        child_sum = np.zeros_like(m)
        np.add.at(child_sum, self.parent[non_root], m[non_root])
        internal = ~self.is_leaf_mask
        off = np.abs(child_sum - m) > tau * m
        bad = np.flatnonzero(internal & off)
        if bad.size:
            i = int(bad[0])
            raise TreeFormatError(
                f"node {i}: children measures sum to {child_sum[i]!r}, "
                f"parent measure is {m[i]!r}"
            )

    # Queries

    @property
    def n_nodes(self) -> int:
        return int(self.parent.size)

    @property
    def n_leaves(self) -> int:
        return int(self.leaves.size)

    @property
    def max_depth(self) -> int:
        return len(self.levels) - 1

    @property
    def leaf_measures(self) -> np.ndarray:
        """Leaf measures in depth-first leaf order."""
        return self.measure[self.leaves]

    def max_leaf_measure(self) -> float:
        return float(self.leaf_measures.max())

    def parent_of(self, node: int) -> Optional[NodeId]:
        p = int(self.parent[node])
        return None if p < 0 else NodeId(p)

    def children(self, node: int) -> Tuple[NodeId, ...]:
        lo, hi = self.child_ptr[node], self.child_ptr[node + 1]
        return tuple(NodeId(int(c)) for c in self.child_idx[lo:hi])

    def is_leaf(self, node: int) -> bool:
        return bool(self.is_leaf_mask[node])

    def depth_of(self, node: int) -> int:
        return int(self.depth[node])

    def ancestors(self, node: int) -> List[NodeId]:
        """Ancestor chain from node itself up to the root."""
        chain = [NodeId(int(node))]
        p = int(self.parent[node])
        while p >= 0:
            chain.append(NodeId(p))
            p = int(self.parent[p])
        return chain

    def contains(self, outer: int, inner: int) -> bool:
        """True iff inner ⊆ outer (inner is outer or a descendant of it)."""
        return bool(
            self.span_start[outer] <= self.span_start[inner]
            and self.span_stop[inner] <= self.span_stop[outer]
        )

    def leaf_slice(self, node: int) -> slice:
        """Positions (in leaf order) of the leaves under node."""
        return slice(int(self.span_start[node]), int(self.span_stop[node]))

    def leaves_under(self, node: int) -> np.ndarray:
        return self.leaves[self.leaf_slice(node)]

    def subtree_nodes(self, node: int) -> np.ndarray:
        """All nodes contained in node, node included."""
        start, stop = self.span_start[node], self.span_stop[node]
        mask = (self.span_start >= start) & (self.span_stop <= stop)
        return np.flatnonzero(mask)

    def nodes_up_to_depth(self, depth: int) -> np.ndarray:
        if depth < 0:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(self.levels[: depth + 1])

    def structurally_equal(self, other: "MeasureTree") -> bool:
        return (
            self.n_nodes == other.n_nodes
            and bool(np.array_equal(self.parent, other.parent))
            and bool(np.array_equal(self.measure, other.measure))
        )

    def extends(self, coarse: "MeasureTree") -> bool:
        """True iff coarse's node table is a prefix of this tree's."""
        n = coarse.n_nodes
        return (
            self.n_nodes >= n
            and bool(np.array_equal(self.parent[:n], coarse.parent))
            and bool(np.array_equal(self.measure[:n], coarse.measure))
        )

    # Serialization

    def to_dict(self) -> dict:
        nodes = [
            {
                "id": i,
                "parent": None if self.parent[i] < 0 else int(self.parent[i]),
                "measure": float(self.measure[i]),
            }
            for i in range(self.n_nodes)
        ]
        return {"format_version": FORMAT_VERSION, "root": int(self.root), "nodes": nodes}

    @classmethod
    def from_dict(cls, data: Mapping, tau_meas: float = TAU_MEAS) -> "MeasureTree":
        if not isinstance(data, Mapping) or "nodes" not in data:
            raise TreeFormatError("tree document must be a mapping with a 'nodes' list")
        nodes = data["nodes"]
        if not isinstance(nodes, list) or not nodes:
            raise TreeFormatError("'nodes' must be a nonempty list")
        n = len(nodes)
        parent = np.full(n, -2, dtype=np.int64)
        measure = np.zeros(n, dtype=np.float64)
        for k, rec in enumerate(nodes):
            if not isinstance(rec, Mapping) or not {"id", "parent", "measure"} <= set(rec):
                raise TreeFormatError(f"node entry {k} must have id, parent and measure")
            try:
                i = int(rec["id"])
                p = -1 if rec["parent"] is None else int(rec["parent"])
                mu = float(rec["measure"])
            except (TypeError, ValueError) as e:
                raise TreeFormatError(f"node entry {k}: {e}") from e
            if not 0 <= i < n:
                raise TreeFormatError(f"node id {i} outside dense range 0..{n - 1}")
            if parent[i] != -2:
                raise TreeFormatError(f"node {i} is listed twice")
            if p < -1 or p >= n:
                raise TreeFormatError(f"node {i} has unknown parent {p}")
            parent[i] = p
            measure[i] = mu
        tree = cls(parent, measure, tau_meas=tau_meas)
        if "root" in data and data["root"] is not None and int(data["root"]) != tree.root:
            raise TreeFormatError(
                f"declared root {data['root']} does not match parentless node {int(tree.root)}"
            )
        return tree


# Builders


def _check_capacity(n: int) -> None:
    if n > MAX_NODES:
        raise CapacityError(f"requested tree needs {n} nodes, cap is {MAX_NODES}")


def build_uniform(arity: int, depth: int) -> MeasureTree:
    """Complete arity-regular tree; depth-k nodes have measure arity**-k."""
    if arity < 2:
        raise DomainError(f"arity must be at least 2, got {arity}")
    if depth < 1:
        raise DomainError(f"depth must be at least 1, got {depth}")
    n = (arity ** (depth + 1) - 1) // (arity - 1)
    _check_capacity(n)
    ids = np.arange(n, dtype=np.int64)
    parent = (ids - 1) // arity
    parent[0] = -1
    level_sizes = arity ** np.arange(depth + 1)
    node_depth = np.repeat(np.arange(depth + 1), level_sizes)
    measure = np.power(float(arity), -node_depth.astype(np.float64))
    return MeasureTree(parent, measure)


class _TableBuilder:
    """Append-only node table used by the builders."""

    def __init__(self):
        self.parent: List[int] = [-1]
        self.measure: List[float] = [1.0]

    def add(self, parent: int, measure: float) -> int:
        self.parent.append(parent)
        self.measure.append(measure)
        _check_capacity(len(self.parent))
        return len(self.parent) - 1

    def subdivide(self, node: int, arity: int, levels: int) -> None:
        frontier = [node]
        for _ in range(levels):
            nxt = []
            for v in frontier:
                m = self.measure[v] / arity
                nxt.extend(self.add(v, m) for _ in range(arity))
            frontier = nxt

    def build(self) -> MeasureTree:
        return MeasureTree(self.parent, self.measure)


def default_ring_levels(depth: int) -> int:
    """Ring subdivision depth for a chain with depth rings: ⌊log2 depth⌋ + 1.

    A level is added each time the chain depth doubles, so the largest ring
    leaf shrinks by the ring arity along K = 1, 2, 4, 8, ...
    """
    if depth < 1:
        raise DomainError(f"depth must be at least 1, got {depth}")
    return int(depth).bit_length()


def build_nested_chain(
    core_ratios: Sequence[float],
    ring_subdivision: int,
    ring_levels: Optional[int] = None,
) -> MeasureTree:
    """Nested chain I_0 ⊃ I_1 ⊃ ... ⊃ I_K with μ(I_{k+1}) = a_k μ(I_k).

    children(I_k) = (R_k, I_{k+1}), ring first. Each ring is a complete
    ring_subdivision-ary subtree ring_levels deep (default_ring_levels(K)
    when None); the core I_K is a leaf.

    With ring_levels fixed, the chain built from a prefix of core_ratios is
    a node-table prefix of the longer one.
    """
    ratios = [float(a) for a in core_ratios]
    if not ratios:
        raise DomainError("core_ratios must be nonempty")
    for k, a in enumerate(ratios):
        if not (0.0 < a < 1.0) or not math.isfinite(a):
            raise DomainError(f"core ratio a_{k} = {a} outside (0, 1)")
    if ring_subdivision < 2:
        raise DomainError(f"ring_subdivision must be at least 2, got {ring_subdivision}")
    if ring_levels is None:
        ring_levels = default_ring_levels(len(ratios))
    if ring_levels < 0:
        raise DomainError(f"ring_levels must be non-negative, got {ring_levels}")
    _check_capacity(1 + len(ratios) * (1 + sum(ring_subdivision ** j for j in range(ring_levels + 1))))

    b = _TableBuilder()
    core = 0
    for a in ratios:
        mu = b.measure[core]
        ring = b.add(core, (1.0 - a) * mu)
        nxt = b.add(core, a * mu)
        b.subdivide(ring, ring_subdivision, ring_levels)
        core = nxt
    return b.build()


def build_random(
    rng: np.random.Generator,
    max_depth: int,
    max_arity: int,
    stop_prob: float = 0.3,
) -> MeasureTree:
    """Random truncation: each non-root node stops with stop_prob.

    Child measures are Dirichlet shares mixed with a uniform floor, so no
    child is smaller than a tenth of its fair share.
    """
    if max_depth < 1 or max_arity < 2:
        raise DomainError("need max_depth >= 1 and max_arity >= 2")
    b = _TableBuilder()
    frontier = [0]
    for d in range(max_depth):
        nxt = []
        for v in frontier:
            if d > 0 and rng.random() < stop_prob:
                continue
            k = int(rng.integers(2, max_arity + 1))
            shares = 0.1 / k + 0.9 * rng.dirichlet(np.ones(k))
            shares /= shares.sum()
            nxt.extend(b.add(v, b.measure[v] * float(s)) for s in shares)
        frontier = nxt
    return b.build()


# Refinement


def refine_leaves(tree: MeasureTree, splits: Mapping[int, Sequence[float]]) -> MeasureTree:
    """Split several leaves at once; new nodes are appended in key order."""
    parent = list(tree.parent)
    measure = list(tree.measure)
    for leaf in sorted(splits):
        fractions = [float(x) for x in splits[leaf]]
        if not (0 <= leaf < tree.n_nodes) or not tree.is_leaf(leaf):
            raise UsageError(f"node {leaf} is not a leaf")
        if len(fractions) < 2:
            raise UsageError(f"leaf {leaf}: need at least two fractions")
        if any(not (x > 0) for x in fractions):
            raise UsageError(f"leaf {leaf}: fractions must be positive")
        if abs(math.fsum(fractions) - 1.0) > tree.tau_meas:
            raise UsageError(f"leaf {leaf}: fractions sum to {math.fsum(fractions)!r}, not 1")
        mu = float(tree.measure[leaf])
        for x in fractions:
            parent.append(int(leaf))
            measure.append(x * mu)
    _check_capacity(len(parent))
    return MeasureTree(parent, measure, tau_meas=tree.tau_meas)


def refine_leaf(tree: MeasureTree, leaf: int, fractions: Sequence[float]) -> MeasureTree:
    """Split one leaf into children of measures fraction_i·μ(leaf)."""
    return refine_leaves(tree, {int(leaf): fractions})


def select_subfamily(
    tree: MeasureTree, node: int, a: float
) -> Tuple[MeasureTree, FrozenSet[NodeId]]:
    """Disjoint strict descendants of node with total measure (1−a)μ(node).

    Leaves under node are taken greedily from the largest down (depth-first
    order breaks ties). If the target is not hit exactly, the smallest leaf
    left over is split once to supply the remainder.
    """
    if not (0 <= node < tree.n_nodes):
        raise UsageError(f"node {node} does not exist")
    if not (0.0 < a < 1.0):
        raise DomainError(f"a = {a} outside (0, 1)")
    mu = float(tree.measure[node])
    target = (1.0 - a) * mu
    tol = tree.tau_meas * mu

    if tree.is_leaf(node):
        refined = refine_leaf(tree, node, (1.0 - a, a))
        return refined, frozenset({refined.children(node)[0]})

    leaves = tree.leaves_under(node)
    pos = np.arange(leaves.size)
    order = np.lexsort((pos, -tree.measure[leaves]))
    taken: List[int] = []
    untaken: List[int] = []
    acc = 0.0
    for i in order:
        leaf = int(leaves[i])
        m = float(tree.measure[leaf])
        if acc + m <= target + tol:
            taken.append(leaf)
            acc += m
        else:
            untaken.append(leaf)

    rest = target - acc
    if rest <= tol:
        return tree, frozenset(NodeId(x) for x in taken)

    # every leftover leaf is larger than rest; split the smallest
    pick = min(untaken, key=lambda x: (tree.measure[x], tree.leaf_pos[x]))
    m = float(tree.measure[pick])
    if m - rest <= tol:
        taken.append(pick)
        return tree, frozenset(NodeId(x) for x in taken)
    refined = refine_leaf(tree, pick, (rest / m, 1.0 - rest / m))
    taken.append(int(refined.children(pick)[0]))
    logger.debug("select_subfamily split leaf %d to supply %.3g", pick, rest)
    return refined, frozenset(NodeId(x) for x in taken)


def common_refinement(first: MeasureTree, second: MeasureTree) -> MeasureTree:
    """The finer of two trees when one refines the other."""
    if second.extends(first):
        return second
    if first.extends(second):
        return first
    raise UsageError("trees have no common refinement (neither node table extends the other)")


# Nested-chain layout


@dataclass(frozen=True)
class ChainLayout:
    """Cores I_0..I_K and rings R_0..R_{K-1} of a nested-chain tree."""
    cores: Tuple[NodeId, ...]
    rings: Tuple[NodeId, ...]

    @property
    def depth(self) -> int:
        return len(self.rings)


def chain_layout(tree: MeasureTree) -> ChainLayout:
    """Recover the chain of a build_nested_chain tree (core is the last child)."""
    cores = [tree.root]
    rings = []
    node = tree.root
    while not tree.is_leaf(node):
        ch = tree.children(node)
        if len(ch) != 2:
            raise UsageError(f"node {node} has {len(ch)} children; not a nested chain")
        rings.append(ch[0])
        node = ch[1]
        cores.append(node)
    if not rings:
        raise UsageError("tree is a single node; not a nested chain")
    return ChainLayout(tuple(cores), tuple(rings))


# Files


def store_tree(tree: MeasureTree, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.safe_dump(tree.to_dict(), f, default_flow_style=None, sort_keys=False)
    logger.debug("Stored tree with %d nodes to %s", tree.n_nodes, path)
    return path


def load_tree(path: Path, tau_meas: float = TAU_MEAS) -> MeasureTree:
    """Load a tree document (YAML or JSON)."""
    path = Path(path)
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise TreeFormatError(f"{path}: not a valid document: {e}") from e
    logger.debug("Loaded tree document %s", path)
    return MeasureTree.from_dict(data, tau_meas=tau_meas)


__all__ = [
    "NodeId",
    "MAX_NODES",
    "MeasureTree",
    "build_uniform",
    "default_ring_levels",
    "build_nested_chain",
    "build_random",
    "refine_leaf",
    "refine_leaves",
    "select_subfamily",
    "common_refinement",
    "ChainLayout",
    "chain_layout",
    "store_tree",
    "load_tree",
]
