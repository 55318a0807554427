"""Two-valued redistribution g_φ of a step function.

Inside each A(φ,I), g_φ takes a single positive value c_I on an occupied
part of measure γ_I and vanishes elsewhere, with ∫ g = ∫ φ on every tree
node that contains a member of S_φ and ∫_{A(φ,I)} g^p = ∫_{A(φ,I)} φ^p.

Construction per member I:

1. Blocks are the maximal tree nodes all of whose leaves lie in A(φ,I).
2. Stage 1 gives each block B its own value c_B = (P_B/m_B)^{1/(p−1)} on
   measure m_B/c_B (m_B = ∫_B φ, P_B = ∫_B φ^p).
3. Stage 2 merges to the common c_I = (P_I/m_I)^{1/(p−1)}, occupying
   m_B/c_I inside each block. This needs m_B/c_I ≤ μ(B) for every block;
   when some block cannot hold its share, stage-1 values are kept and the
   member is flagged.

Occupied parts are packed from whole leaves (positive-φ leaves first,
largest first), splitting at most one leaf per block.
"""

from __future__ import annotations
from dataclasses import dataclass
from types import MappingProxyType
from typing import Dict, List, Mapping, Optional, Tuple
import logging
import math

import numpy as np

from .bellman_fn import BellmanParams, check_p
from .config import TAU_MEAS, TAU_NUM
from .errors import DomainError
from .linearization import Linearization
from .maximal_op import maximal_function
from .measure_tree import MeasureTree, NodeId, refine_leaves
from .stepfn import StepFunction, moments, transfer

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GRecord:
    """Construction record for one member I of S_φ.

    Attributes:
        node: I
        blocks: Maximal nodes inside A(φ,I)
        block_values: B -> value of g on B's occupied part
        block_gamma: B -> occupied measure inside B
        c_I: Common value (the stage-2 value even when infeasible)
        gamma_I: Total occupied measure
        a_I: μ(A(φ,I))
        occupied: Refined leaves where g > 0
        stage2_feasible: Whether the common value fits every block
    """
    node: NodeId
    blocks: Tuple[NodeId, ...]
    block_values: Mapping[NodeId, float]
    block_gamma: Mapping[NodeId, float]
    c_I: float
    gamma_I: float
    a_I: float
    occupied: Tuple[NodeId, ...]
    stage2_feasible: bool


@dataclass(frozen=True, eq=False)
class GPhi:
    """g_φ with its refined tree and per-member records."""
    phi: StepFunction
    lin: Linearization
    p: float
    refined_tree: MeasureTree
    records: Mapping[NodeId, GRecord]
    g: StepFunction

    @property
    def all_feasible(self) -> bool:
        return all(r.stage2_feasible for r in self.records.values())

    def refined_owner(self) -> np.ndarray:
        """Owner in S_φ of each refined leaf (leaf order)."""
        base = self.phi.tree
        anc = np.array(self.refined_tree.leaves, dtype=np.int64)
        new = anc >= base.n_nodes
        while new.any():
            anc[new] = self.refined_tree.parent[anc[new]]
            new = anc >= base.n_nodes
        return self.lin.leaf_owner[base.leaf_pos[anc]]


def _node_p_integrals(phi: StepFunction, p: float) -> np.ndarray:
    tree = phi.tree
    out = np.zeros(tree.n_nodes)
    out[tree.leaves] = phi.values ** p * tree.leaf_measures
    for level in reversed(tree.levels[1:]):
        np.add.at(out, tree.parent[level], out[level])
    return out


def _blocks(lin: Linearization) -> Dict[int, List[int]]:
    """Member -> maximal nodes whose leaves it owns entirely."""
    tree = lin.tree
    lo = np.full(tree.n_nodes, np.iinfo(np.int64).max)
    hi = np.full(tree.n_nodes, -1, dtype=np.int64)
    lo[tree.leaves] = lin.leaf_owner
    hi[tree.leaves] = lin.leaf_owner
    for level in reversed(tree.levels[1:]):
        par = tree.parent[level]
        np.minimum.at(lo, par, lo[level])
        np.maximum.at(hi, par, hi[level])
    uniform = lo == hi
    parent_same = np.zeros(tree.n_nodes, dtype=bool)
    non_root = np.flatnonzero(tree.parent >= 0)
    par = tree.parent[non_root]
    parent_same[non_root] = uniform[par] & (lo[par] == lo[non_root])
    heads = np.flatnonzero(uniform & ~parent_same)
    out: Dict[int, List[int]] = {}
    for b in heads[np.argsort(tree.span_start[heads], kind="stable")]:
        out.setdefault(int(lo[b]), []).append(int(b))
    return out


def _pack(tree: MeasureTree, phi: StepFunction, block: int, gamma: float,
          tau_meas: float) -> Tuple[List[int], Optional[Tuple[int, float]]]:
    """Leaves to occupy in block and an optional (leaf, share) split."""
    leaves = tree.leaves_under(block)
    sl = tree.leaf_slice(block)
    vals = phi.values[sl]
    mus = tree.measure[leaves]
    order = np.lexsort((np.arange(leaves.size), -mus, vals <= 0))
    tol = tau_meas * float(tree.measure[block])
    taken: List[int] = []
    untaken: List[int] = []
    acc = 0.0
    for i in order:
        m = float(mus[i])
        if acc + m <= gamma + tol:
            taken.append(int(leaves[i]))
            acc += m
        else:
            untaken.append(int(leaves[i]))
    rest = gamma - acc
    if rest <= tol or not untaken:
        return taken, None
    pick = untaken[0]
    m = float(tree.measure[pick])
    if m - rest <= tol:
        taken.append(pick)
        return taken, None
    return taken, (pick, rest / m)


def build_g(phi: StepFunction, p: float, lin: Linearization,
            tau_num: float = TAU_NUM, tau_meas: float = TAU_MEAS) -> GPhi:
    """Construct g_φ (see module docstring)."""
    p = check_p(p)
    tree = phi.tree
    m_node = phi.integrals
    P_node = _node_p_integrals(phi, p)
    blocks_of = _blocks(lin)

    plans = {}
    splits: Dict[int, Tuple[float, float]] = {}
    for node in lin.s_phi:
        blocks = blocks_of.get(int(node), [])
        m_I = math.fsum(float(m_node[b]) for b in blocks)
        P_I = math.fsum(float(P_node[b]) for b in blocks)
        if m_I <= 0:
            plans[node] = (blocks, {b: 0.0 for b in blocks}, {b: 0.0 for b in blocks}, 0.0, True, {})
            continue
        c_I = (P_I / m_I) ** (1.0 / (p - 1.0))
        feasible = all(
            float(m_node[b]) / c_I <= float(tree.measure[b]) * (1.0 + tau_num) for b in blocks
        )
        values, gammas, packs = {}, {}, {}
        for b in blocks:
            mb, Pb, mub = float(m_node[b]), float(P_node[b]), float(tree.measure[b])
            if mb <= 0:
                values[b], gammas[b] = 0.0, 0.0
                continue
            v = c_I if feasible else (Pb / mb) ** (1.0 / (p - 1.0))
            gam = min(mb / v, mub)
            values[b], gammas[b] = v, gam
            taken, split = _pack(tree, phi, b, gam, tau_meas)
            packs[b] = (taken, split)
            if split is not None:
                leaf, share = split
                splits[leaf] = (share, 1.0 - share)
        if not feasible:
            logger.info("stage 2 infeasible at member %d; keeping per-block values", node)
        plans[node] = (blocks, values, gammas, c_I, feasible, packs)

    refined = refine_leaves(tree, splits) if splits else tree

    g_map = {int(l): 0.0 for l in refined.leaves}
    records: Dict[NodeId, GRecord] = {}
    for node, (blocks, values, gammas, c_I, feasible, packs) in plans.items():
        occupied: List[int] = []
        for b, (taken, split) in packs.items():
            cells = list(taken)
            if split is not None:
                cells.append(int(refined.children(split[0])[0]))
            for leaf in cells:
                g_map[leaf] = values[b]
            occupied.extend(cells)
        records[NodeId(int(node))] = GRecord(
            node=NodeId(int(node)),
            blocks=tuple(NodeId(b) for b in blocks),
            block_values=MappingProxyType({NodeId(b): v for b, v in values.items()}),
            block_gamma=MappingProxyType({NodeId(b): v for b, v in gammas.items()}),
            c_I=float(c_I),
            gamma_I=math.fsum(gammas.values()),
            a_I=lin.a_I[node],
            occupied=tuple(NodeId(x) for x in sorted(occupied)),
            stage2_feasible=bool(feasible),
        )
    g = StepFunction.from_leaf_map(refined, g_map)
    logger.debug("built g_phi: %d members, %d leaves split", len(records), len(splits))
    return GPhi(phi, lin, p, refined, MappingProxyType(records), g)


@dataclass(frozen=True)
class GReport:
    """Checks on g_φ.

    Attributes:
        part_a: ∫_I g = ∫_I φ on nodes containing a member of S_φ
        part_b: ∫_{A(φ,I)} g^p = ∫_{A(φ,I)} φ^p per member
        part_c: μ({φ=0} ∩ A(φ,I)) ≤ μ({g=0} ∩ A(φ,I)) per member
        part_d: ∫g = f and ∫g^p = F
        worst: Largest absolute deviation seen across a, b and d
    """
    part_a: bool
    part_b: bool
    part_c: bool
    part_d: bool
    worst: float = 0.0

    @property
    def holds(self) -> bool:
        return self.part_a and self.part_b and self.part_c and self.part_d


def _close(a: float, b: float, tau: float) -> bool:
    return abs(a - b) <= tau * max(1.0, abs(b))


def verify_g(phi: StepFunction, p: float, gphi: GPhi, tau_num: float = TAU_NUM) -> GReport:
    tree = phi.tree
    lin = gphi.lin
    g = gphi.g
    worst = 0.0

    has_s = np.array(lin.in_s)
    for level in reversed(tree.levels[1:]):
        np.logical_or.at(has_s, tree.parent[level], has_s[level])
    nodes = np.flatnonzero(has_s)
    dev_a = np.abs(g.integrals[nodes] - phi.integrals[nodes])
    scale_a = np.maximum(1.0, np.abs(phi.integrals[nodes]))
    part_a = bool(np.all(dev_a <= tau_num * scale_a))
    worst = max(worst, float(dev_a.max(initial=0.0)))

    owner_r = gphi.refined_owner()
    mu_r = gphi.refined_tree.leaf_measures
    phi_r = transfer(phi, gphi.refined_tree).values
    part_b = part_c = True
    for node in lin.s_phi:
        mask = owner_r == node
        gp = math.fsum(g.values[mask] ** p * mu_r[mask])
        target = lin.p_integral_on_a[node]
        worst = max(worst, abs(gp - target))
        part_b &= _close(gp, target, tau_num)
        zero_phi = math.fsum(mu_r[mask & (phi_r <= 0)])
        zero_g = math.fsum(mu_r[mask & (g.values <= 0)])
        part_c &= zero_phi <= zero_g + tau_num * max(1.0, zero_g)

    m_phi, m_g = moments(phi, p), moments(g, p)
    worst = max(worst, abs(m_g.f - m_phi.f), abs(m_g.F - m_phi.F))
    part_d = _close(m_g.f, m_phi.f, tau_num) and _close(m_g.F, m_phi.F, tau_num)
    return GReport(part_a, bool(part_b), bool(part_c), part_d, worst)


def g_prime(gphi: GPhi) -> StepFunction:
    """c_I on all of A(φ,I), ignoring the zero part."""
    owner_r = gphi.refined_owner()
    c = np.zeros(gphi.phi.tree.n_nodes)
    for node, rec in gphi.records.items():
        c[node] = rec.c_I
    return StepFunction(gphi.refined_tree, c[owner_r])


def zero_measure_of_g(gphi: GPhi) -> float:
    """μ({g = 0})."""
    mask = gphi.g.values <= 0
    return math.fsum(gphi.refined_tree.leaf_measures[mask])


def residual_split(gphi: GPhi, p: float, c: Optional[float] = None) -> Tuple[float, float]:
    """∫|Mg − cg|^p split over Δ = {Mg > cg} and its complement."""
    p = check_p(p)
    if c is None:
        m = moments(gphi.phi, p)
        c = BellmanParams.from_moments(p, m.f, m.F).c
    if not (c > 0):
        raise DomainError(f"c must be positive, got {c}")
    g = gphi.g
    mg = maximal_function(g).mphi.values
    cg = c * g.values
    terms = np.abs(mg - cg) ** p * gphi.refined_tree.leaf_measures
    delta = mg > cg
    return math.fsum(terms[delta]), math.fsum(terms[~delta])


@dataclass(frozen=True)
class YoungDiagnostics:
    """Quantities on the set {g′ ≤ φ}.

    Attributes:
        t_phi: (∫ φ^p)^{1/p}
        s_phi: (∫ (g′)^p)^{1/p}
        cross: ∫ φ·(g′)^{p−1}
        young_slack: t^p/p + s^p/q − cross (≥ 0 by Young)
        holder_gap: t·s^{p−1} − cross (≥ 0 by Hölder)
    """
    t_phi: float
    s_phi: float
    cross: float
    young_slack: float
    holder_gap: float


def young_diagnostics(phi: StepFunction, p: float, gphi: GPhi) -> YoungDiagnostics:
    p = check_p(p)
    q = p / (p - 1.0)
    gp = g_prime(gphi)
    v = transfer(phi, gphi.refined_tree).values
    mu = gphi.refined_tree.leaf_measures
    S = gp.values <= v
    tp = math.fsum(v[S] ** p * mu[S])
    sp = math.fsum(gp.values[S] ** p * mu[S])
    cross = math.fsum(v[S] * gp.values[S] ** (p - 1.0) * mu[S])
    t, s = tp ** (1.0 / p), sp ** (1.0 / p)
    return YoungDiagnostics(
        t_phi=t,
        s_phi=s,
        cross=cross,
        young_slack=tp / p + sp / q - cross,
        holder_gap=t * s ** (p - 1.0) - cross,
    )


def sigma_phi(gphi: GPhi, p_map: Mapping[int, float]) -> float:
    """Σ γ_I·P_I over S_φ, with P_I from the zero-mass diagnostics."""
    return math.fsum(rec.gamma_I * p_map.get(node, 0.0) for node, rec in gphi.records.items())


__all__ = [
    "GRecord",
    "GPhi",
    "build_g",
    "GReport",
    "verify_g",
    "g_prime",
    "zero_measure_of_g",
    "residual_split",
    "YoungDiagnostics",
    "young_diagnostics",
    "sigma_phi",
]
