"""Nonnegative leaf-constant functions on a MeasureTree.

A StepFunction stores one value per leaf (in the tree's depth-first leaf
order). Node integrals and averages are aggregated bottom-up once at
construction, so every later read of Av_I(φ) is an array lookup.
"""

from __future__ import annotations
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union
import logging
import math

import numpy as np
import yaml

from .config import TAU_NUM
from .errors import DomainError, TreeFormatError, UsageError
from .measure_tree import MeasureTree, common_refinement, load_tree, store_tree
from .version import FORMAT_VERSION

logger = logging.getLogger(__name__)

LeafSet = Union[None, np.ndarray, Iterable[int]]


@dataclass(frozen=True, eq=False)
class StepFunction:
    """φ ≥ 0, constant on each leaf.

    Attributes:
        tree: The tree the function lives on
        values: Per-leaf values in tree.leaves order
    """
    tree: MeasureTree
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).ravel()
        if values.size != self.tree.n_leaves:
            raise UsageError(
                f"got {values.size} values for a tree with {self.tree.n_leaves} leaves"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("step function values must be finite")
        if np.any(values < 0):
            pos = int(np.flatnonzero(values < 0)[0])
            raise DomainError(
                f"step function is negative on leaf {int(self.tree.leaves[pos])}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

        tree = self.tree
        integral = np.zeros(tree.n_nodes)
        integral[tree.leaves] = values * tree.leaf_measures
        for level in reversed(tree.levels[1:]):
            internal_parents = tree.parent[level]
            np.add.at(integral, internal_parents, integral[level])
        integral[tree.root] = math.fsum(values * tree.leaf_measures)
        averages = integral / tree.measure
        integral.setflags(write=False)
        averages.setflags(write=False)
        object.__setattr__(self, "integrals", integral)
        object.__setattr__(self, "averages", averages)

    @classmethod
    def constant(cls, tree: MeasureTree, c: float) -> "StepFunction":
        return cls(tree, np.full(tree.n_leaves, float(c)))

    @classmethod
    def from_leaf_map(cls, tree: MeasureTree, values: Mapping[int, float]) -> "StepFunction":
        """Build from {leaf_id: value}; every leaf must be present."""
        arr = np.full(tree.n_leaves, np.nan)
        for leaf, v in values.items():
            leaf = int(leaf)
            if not (0 <= leaf < tree.n_nodes) or not tree.is_leaf(leaf):
                raise TreeFormatError(f"node {leaf} is not a leaf of the tree")
            arr[tree.leaf_pos[leaf]] = float(v)
        missing = np.flatnonzero(np.isnan(arr))
        if missing.size:
            raise TreeFormatError(f"no value given for leaf {int(tree.leaves[missing[0]])}")
        return cls(tree, arr)

    def value_at(self, leaf: int) -> float:
        pos = self.tree.leaf_pos[leaf]
        if pos < 0:
            raise UsageError(f"node {leaf} is not a leaf")
        return float(self.values[pos])

    def leaf_map(self) -> dict:
        return {int(l): float(v) for l, v in zip(self.tree.leaves, self.values)}

    @property
    def is_zero(self) -> bool:
        return not bool(np.any(self.values > 0))

    def integral(self, node: int) -> float:
        return float(self.integrals[node])

    def average(self, node: int) -> float:
        return float(self.averages[node])

    def scaled(self, t: float) -> "StepFunction":
        return StepFunction(self.tree, self.values * float(t))


@dataclass(frozen=True)
class Moments:
    """(p, f, F) of a function, with Hölder's f^p ≤ F checked."""
    p: float
    f: float
    F: float
    tau_num: float = TAU_NUM

    def __post_init__(self):
        if not (self.p > 1):
            raise DomainError(f"p must exceed 1, got {self.p}")
        if not (self.f > 0):
            raise DomainError(f"f must be positive, got {self.f}")
        if self.f ** self.p > self.F * (1.0 + self.tau_num):
            raise DomainError(
                f"Hölder violated: f^p = {self.f ** self.p!r} > F = {self.F!r}"
            )

    @property
    def ratio(self) -> float:
        """f^p / F, clipped into [0, 1]."""
        return min(1.0, self.f ** self.p / self.F)


def average(phi: StepFunction, node: int) -> float:
    """Av_I(φ) = (1/μ(I)) ∫_I φ dμ."""
    return phi.average(node)


def _leaf_mask(phi: StepFunction, leaves: LeafSet) -> Optional[np.ndarray]:
    if leaves is None:
        return None
    if isinstance(leaves, np.ndarray) and leaves.dtype == bool:
        if leaves.size != phi.tree.n_leaves:
            raise UsageError("leaf mask length does not match the leaf count")
        return leaves
    mask = np.zeros(phi.tree.n_leaves, dtype=bool)
    for leaf in leaves:
        pos = phi.tree.leaf_pos[int(leaf)]
        if pos < 0:
            raise UsageError(f"node {int(leaf)} is not a leaf")
        mask[pos] = True
    return mask


def p_integral(phi: StepFunction, p: float, leaves: LeafSet = None) -> float:
    """Σ value(L)^p μ(L) over the given leaves (all leaves when None)."""
    terms = phi.values ** p * phi.tree.leaf_measures
    mask = _leaf_mask(phi, leaves)
    if mask is not None:
        terms = terms[mask]
    return math.fsum(terms)


def l1_integral(phi: StepFunction, leaves: LeafSet = None) -> float:
    terms = phi.values * phi.tree.leaf_measures
    mask = _leaf_mask(phi, leaves)
    if mask is not None:
        terms = terms[mask]
    return math.fsum(terms)


def p_average(phi: StepFunction, p: float, node: int) -> float:
    """(1/μ(I)) ∫_I φ^p dμ."""
    sl = phi.tree.leaf_slice(node)
    terms = phi.values[sl] ** p * phi.tree.leaf_measures[sl]
    return math.fsum(terms) / float(phi.tree.measure[node])


def moments(phi: StepFunction, p: float, tau_num: float = TAU_NUM) -> Moments:
    """(p, ∫φ, ∫φ^p); the zero function has no moments."""
    if phi.is_zero:
        raise DomainError("moments of the zero function are undefined (f must be positive)")
    f = l1_integral(phi)
    F = p_integral(phi, p)
    # Hölder holds exactly for the true values; clamp rounding so F >= f^p
    F = max(F, f ** p)
    return Moments(p, f, F, tau_num)


def transfer(phi: StepFunction, finer: MeasureTree) -> StepFunction:
    """The same function on a refinement of its tree."""
    if finer is phi.tree:
        return phi
    if not finer.extends(phi.tree):
        raise UsageError("target tree does not refine the function's tree")
    n_old = phi.tree.n_nodes
    anc = np.array(finer.leaves, dtype=np.int64)
    new = anc >= n_old
    while new.any():
        anc[new] = finer.parent[anc[new]]
        new = anc >= n_old
    return StepFunction(finer, phi.values[phi.tree.leaf_pos[anc]])


def lp_distance(phi: StepFunction, psi: StepFunction, p: float) -> float:
    """∫|φ − ψ|^p dμ on the common refinement of the two trees."""
    tree = common_refinement(phi.tree, psi.tree)
    a = transfer(phi, tree).values
    b = transfer(psi, tree).values
    return math.fsum(np.abs(a - b) ** p * tree.leaf_measures)


def random_step_function(
    rng: np.random.Generator,
    tree: MeasureTree,
    zero_prob: float = 0.2,
) -> StepFunction:
    """Lognormal leaf values with random zeros; never identically zero."""
    values = rng.lognormal(mean=0.0, sigma=1.0, size=tree.n_leaves)
    zeros = rng.random(tree.n_leaves) < zero_prob
    values[zeros] = 0.0
    if not np.any(values > 0):
        values[int(rng.integers(tree.n_leaves))] = 1.0
    return StepFunction(tree, values)


# Files


def store_function(phi: StepFunction, path: Path, tree_path: Optional[Path] = None) -> Path:
    """Write a function document; the tree goes inline unless tree_path is given."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if tree_path is None:
        tree_field = phi.tree.to_dict()
    else:
        tree_path = Path(tree_path)
        store_tree(phi.tree, tree_path)
        try:
            tree_field = str(tree_path.resolve().relative_to(path.parent.resolve()))
        except ValueError:
            tree_field = str(tree_path.resolve())
    doc = {
        "format_version": FORMAT_VERSION,
        "tree": tree_field,
        "leaf_values": [{"leaf_id": l, "value": v} for l, v in phi.leaf_map().items()],
    }
    with open(path, "w") as f:
        yaml.safe_dump(doc, f, default_flow_style=None, sort_keys=False)
    logger.debug("Stored function on %d leaves to %s", phi.tree.n_leaves, path)
    return path


def load_function(path: Path) -> StepFunction:
    """Load a function document (YAML or JSON)."""
    path = Path(path)
    try:
        with open(path) as f:
            doc = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise TreeFormatError(f"{path}: not a valid document: {e}") from e
    if not isinstance(doc, Mapping) or "tree" not in doc or "leaf_values" not in doc:
        raise TreeFormatError(f"{path}: function document needs 'tree' and 'leaf_values'")

    tree_field = doc["tree"]
    if isinstance(tree_field, str):
        tree_file = Path(tree_field)
        if not tree_file.is_absolute():
            tree_file = path.parent / tree_file
        tree = load_tree(tree_file)
    else:
        tree = MeasureTree.from_dict(tree_field)

    values = {}
    for k, rec in enumerate(doc["leaf_values"] or []):
        if not isinstance(rec, Mapping) or "leaf_id" not in rec or "value" not in rec:
            raise TreeFormatError(f"{path}: leaf_values entry {k} needs leaf_id and value")
        values[int(rec["leaf_id"])] = float(rec["value"])
    logger.debug("Loaded function document %s", path)
    return StepFunction.from_leaf_map(tree, values)


__all__ = [
    "StepFunction",
    "Moments",
    "average",
    "p_integral",
    "l1_integral",
    "p_average",
    "moments",
    "transfer",
    "lp_distance",
    "random_step_function",
    "store_function",
    "load_function",
]
