"""Sharp integral inequalities as slack functionals.

Each verifier returns LHS − RHS of an inequality that holds for every
β > 0, so a correct implementation only ever sees slacks ≥ −τ_num. The
inequality over a disjoint family splits into an inside part (verify_thm32)
and an outside part (verify_cor31) that add up to the whole-space relation
(verify_310) exactly.
"""

from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from types import MappingProxyType
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple
import logging
import math

import numpy as np

from .bellman_fn import BellmanParams, check_p
from .errors import DomainError, UsageError
from .hashing import make_rng
from .linearization import Linearization, linearize
from .measure_tree import NodeId
from .stepfn import StepFunction, moments

logger = logging.getLogger(__name__)

SWEEP_BETAS = (0.1, 1.0, 10.0)


class FamilyKind(str, Enum):
    MAXIMAL = "maximal"
    PLAIN = "plain"


@dataclass(frozen=True)
class FamilySelection:
    """Pairwise disjoint members of S_φ.

    Invariants:
        - members ⊆ S_φ, no member contains another
        - kind is MAXIMAL iff every member of S_φ meets the union
    """
    members: Tuple[NodeId, ...]
    kind: FamilyKind

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(sorted(int(m) for m in self.members)))
        object.__setattr__(self, "kind", FamilyKind(self.kind))


@dataclass(frozen=True)
class IneqTerms:
    """Per-member and per-node quantities entering the inequalities.

    Attributes:
        member_y: I_j -> y_{I_j}
        member_mu: I_j -> μ(I_j)
        rho: I -> a_I/μ(I) over S_φ
        tau: I -> (β+1) − βρ_I over S_φ
    """
    member_y: Mapping[NodeId, float]
    member_mu: Mapping[NodeId, float]
    rho: Mapping[NodeId, float]
    tau: Mapping[NodeId, float]


def _check_family(lin: Linearization, members: Iterable[int]) -> np.ndarray:
    tree = lin.tree
    m = np.array(sorted({int(x) for x in members}), dtype=np.int64)
    for node in m:
        if not (0 <= node < tree.n_nodes) or not lin.in_s[node]:
            raise UsageError(f"node {int(node)} is not a member of S_phi")
    # nested pairs share leaf positions; disjoint spans never overlap
    if m.size > 1:
        order = np.argsort(tree.span_start[m], kind="stable")
        starts = tree.span_start[m][order]
        stops = tree.span_stop[m][order]
        overlap = np.flatnonzero(starts[1:] < stops[:-1])
        if overlap.size:
            a, b = m[order][overlap[0]], m[order][overlap[0] + 1]
            raise UsageError(f"family members {int(a)} and {int(b)} are nested")
    return m


def _union_mask(lin: Linearization, members: np.ndarray) -> np.ndarray:
    tree = lin.tree
    mask = np.zeros(tree.n_leaves, dtype=bool)
    for node in members:
        mask[tree.leaf_slice(node)] = True
    return mask


def is_maximal_family(lin: Linearization, members: Iterable[int]) -> bool:
    """Every member of S_φ is an ancestor or descendant-or-equal of a member."""
    m = _check_family(lin, members)
    if m.size == 0:
        return False
    tree = lin.tree
    cs = np.concatenate([[0], np.cumsum(_union_mask(lin, m))])
    s = np.array(lin.s_phi, dtype=np.int64)
    hits = cs[tree.span_stop[s]] - cs[tree.span_start[s]]
    return bool(np.all(hits > 0))


def make_family(lin: Linearization, members: Iterable[int]) -> FamilySelection:
    m = _check_family(lin, members)
    kind = FamilyKind.MAXIMAL if is_maximal_family(lin, m) else FamilyKind.PLAIN
    return FamilySelection(tuple(NodeId(int(x)) for x in m), kind)


def inequality_terms(lin: Linearization, members: Iterable[int], beta: float) -> IneqTerms:
    m = _check_family(lin, members)
    tree = lin.tree
    rho = {i: lin.a_I[i] / float(tree.measure[i]) for i in lin.s_phi}
    tau = {i: (beta + 1.0) - beta * r for i, r in rho.items()}
    return IneqTerms(
        member_y=MappingProxyType({NodeId(int(j)): lin.y_I[int(j)] for j in m}),
        member_mu=MappingProxyType({NodeId(int(j)): float(tree.measure[j]) for j in m}),
        rho=MappingProxyType(rho),
        tau=MappingProxyType(tau),
    )


@dataclass(frozen=True)
class _Parts:
    f: float
    F: float
    h: float            # Σ μ(I_j) y_j^p
    phi_in: float       # ∫_{∪I_j} φ^p
    phi_out: float
    m_in: float         # ∫_{∪I_j} (Mφ)^p
    m_out: float


def _parts(phi: StepFunction, p: float, lin: Linearization, members: np.ndarray) -> _Parts:
    mom = moments(phi, p)
    mask = _union_mask(lin, members)
    mu = phi.tree.leaf_measures
    phi_p = phi.values ** p * mu
    m_p = lin.maximal.mphi.values ** p * mu
    h = math.fsum(float(phi.tree.measure[j]) * lin.y_I[int(j)] ** p for j in members)
    return _Parts(
        f=mom.f,
        F=mom.F,
        h=h,
        phi_in=math.fsum(phi_p[mask]),
        phi_out=math.fsum(phi_p[~mask]),
        m_in=math.fsum(m_p[mask]),
        m_out=math.fsum(m_p[~mask]),
    )


def _coeffs(p: float, beta: float) -> Tuple[float, float]:
    """(1/(β+1)^{p−1}, (p−1)β/(β+1)^p)."""
    b1 = beta + 1.0
    return 1.0 / b1 ** (p - 1.0), (p - 1.0) * beta / b1 ** p


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not (beta > 0) or not math.isfinite(beta):
        raise DomainError(f"beta must be positive and finite, got {beta}")
    return beta


def _outside_slack(parts: _Parts, p: float, beta: float) -> float:
    w, k = _coeffs(p, beta)
    return parts.phi_out - ((parts.f ** p - parts.h) * w + k * parts.m_out)


def _inside_slack(parts: _Parts, p: float, beta: float) -> float:
    w, k = _coeffs(p, beta)
    return parts.phi_in - (parts.h * w + k * parts.m_in)


def _whole_slack(phi: StepFunction, p: float, beta: float, mphi_p: float) -> float:
    mom = moments(phi, p)
    w, k = _coeffs(p, beta)
    return mom.F - mom.f ** p * w - k * mphi_p


def verify_thm31(phi: StepFunction, p: float, lin: Linearization,
                 members: Iterable[int], beta: float) -> float:
    """Outside-the-family inequality for a maximal disjoint family."""
    p, beta = check_p(p), _check_beta(beta)
    m = _check_family(lin, members)
    if not is_maximal_family(lin, m):
        raise UsageError("family is not maximal on S_phi")
    return _outside_slack(_parts(phi, p, lin, m), p, beta)


def verify_cor31(phi: StepFunction, p: float, lin: Linearization,
                 members: Iterable[int], beta: float) -> float:
    """verify_thm31's inequality for any disjoint family."""
    p, beta = check_p(p), _check_beta(beta)
    m = _check_family(lin, members)
    return _outside_slack(_parts(phi, p, lin, m), p, beta)


def verify_thm32(phi: StepFunction, p: float, lin: Linearization,
                 members: Iterable[int], beta: float) -> float:
    """Inside-the-family inequality for any disjoint family."""
    p, beta = check_p(p), _check_beta(beta)
    m = _check_family(lin, members)
    return _inside_slack(_parts(phi, p, lin, m), p, beta)


def verify_310(phi: StepFunction, p: float, beta: float,
               lin: Optional[Linearization] = None) -> float:
    """F − f^p/(β+1)^{p−1} − ((p−1)β/(β+1)^p)·∫(Mφ)^p."""
    p, beta = check_p(p), _check_beta(beta)
    lin = lin or linearize(phi, p)
    return _whole_slack(phi, p, beta, lin.maximal.integral_p(p))


def gap_at_beta_star(phi: StepFunction, p: float,
                     lin: Optional[Linearization] = None) -> float:
    """The whole-space slack at β* = ω_p(f^p/F) − 1 (zero for constants)."""
    p = check_p(p)
    mom = moments(phi, p)
    params = BellmanParams.from_moments(p, mom.f, mom.F)
    lin = lin or linearize(phi, p)
    return _whole_slack(phi, p, params.beta_star, lin.maximal.integral_p(p))


# Family sampling


def complete_to_maximal(lin: Linearization, members: Iterable[int]) -> Tuple[NodeId, ...]:
    """Add the minimal members of S_φ that miss the family's union."""
    m = _check_family(lin, members)
    tree = lin.tree
    cs = np.concatenate([[0], np.cumsum(_union_mask(lin, m))])
    s = np.array(lin.s_phi, dtype=np.int64)
    missed = s[(cs[tree.span_stop[s]] - cs[tree.span_start[s]]) == 0]
    if missed.size == 0:
        return tuple(NodeId(int(x)) for x in m)
    in_missed = np.zeros(tree.n_nodes, dtype=bool)
    in_missed[missed] = True
    # nearest missed node strictly above each node
    above = np.full(tree.n_nodes, -1, dtype=np.int64)
    for level in tree.levels[1:]:
        par = tree.parent[level]
        above[level] = np.where(in_missed[par], par, above[par])
    not_minimal = set(int(above[j]) for j in missed if above[j] >= 0)
    added = [int(j) for j in missed if int(j) not in not_minimal]
    return tuple(NodeId(int(x)) for x in sorted(set(m.tolist()) | set(added)))


def sample_family(lin: Linearization, rng: np.random.Generator,
                  maximal: bool = False, keep_prob: float = 0.5) -> FamilySelection:
    """Random antichain walk over S_φ, optionally completed to maximal."""
    tree = lin.tree
    chosen: List[int] = []
    for node in rng.permutation(np.array(lin.s_phi, dtype=np.int64)):
        if rng.random() >= keep_prob:
            continue
        node = int(node)
        if any(tree.contains(c, node) or tree.contains(node, c) for c in chosen):
            continue
        chosen.append(node)
    if maximal:
        chosen = list(complete_to_maximal(lin, chosen))
    return make_family(lin, chosen)


# Randomized sweep


@dataclass(frozen=True)
class SlackRecord:
    """One (instance, inequality, β) evaluation."""
    instance: int
    inequality: str
    beta: float
    slack: float
    family_size: int

    COLUMNS = ("instance", "inequality", "beta", "slack", "family_size")

    def to_row(self) -> tuple:
        return (self.instance, self.inequality, self.beta, self.slack, self.family_size)


def instance_records(index: int, phi: StepFunction, p: float, seed: int,
                     betas: Sequence[float] = SWEEP_BETAS) -> List[SlackRecord]:
    """All inequality slacks for one seeded instance.

    The β set is the given betas plus β* when β* > 0. The "additivity" row
    records thm32 + cor31 − 310 for the plain family.
    """
    rng = make_rng(seed, "family", index)
    lin = linearize(phi, p)
    maximal = sample_family(lin, rng, maximal=True)
    plain = sample_family(lin, rng, maximal=False)
    mom = moments(phi, p)
    beta_star = BellmanParams.from_moments(p, mom.f, mom.F).beta_star
    all_betas = list(betas) + ([beta_star] if beta_star > 0 else [])
    m_max = np.array(maximal.members, dtype=np.int64)
    m_plain = np.array(plain.members, dtype=np.int64)
    parts_max = _parts(phi, p, lin, m_max)
    parts_plain = _parts(phi, p, lin, m_plain)
    mphi_p = lin.maximal.integral_p(p)

    records = []
    for beta in all_betas:
        s31 = _outside_slack(parts_max, p, beta)
        s32 = _inside_slack(parts_plain, p, beta)
        c31 = _outside_slack(parts_plain, p, beta)
        s310 = _whole_slack(phi, p, beta, mphi_p)
        records.extend([
            SlackRecord(index, "thm31", beta, s31, len(m_max)),
            SlackRecord(index, "thm32", beta, s32, len(m_plain)),
            SlackRecord(index, "cor31", beta, c31, len(m_plain)),
            SlackRecord(index, "310", beta, s310, 0),
            SlackRecord(index, "additivity", beta, s32 + c31 - s310, len(m_plain)),
        ])
    return records


def sweep_inequalities(instances: Sequence[Tuple[StepFunction, float]], seed: int,
                       threads: int = 1,
                       betas: Sequence[float] = SWEEP_BETAS) -> List[SlackRecord]:
    """Evaluate every instance; rows come back in instance order."""
    def work(item):
        i, (phi, p) = item
        return instance_records(i, phi, p, seed, betas)

    items = list(enumerate(instances))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(work, items))
    else:
        chunks = [work(it) for it in items]
    records = [r for chunk in chunks for r in chunk]
    logger.debug("inequality sweep: %d instances, %d records", len(items), len(records))
    return records


def min_slacks(records: Iterable[SlackRecord]) -> Dict[str, float]:
    """Minimum slack per inequality (additivity uses the absolute value)."""
    out: Dict[str, float] = {}
    for r in records:
        v = -abs(r.slack) if r.inequality == "additivity" else r.slack
        out[r.inequality] = min(out.get(r.inequality, math.inf), v)
    return out


__all__ = [
    "FamilyKind",
    "FamilySelection",
    "IneqTerms",
    "is_maximal_family",
    "make_family",
    "inequality_terms",
    "verify_thm31",
    "verify_thm32",
    "verify_cor31",
    "verify_310",
    "gap_at_beta_star",
    "complete_to_maximal",
    "sample_family",
    "SlackRecord",
    "instance_records",
    "sweep_inequalities",
    "min_slacks",
    "SWEEP_BETAS",
]
