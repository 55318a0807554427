"""Search for near-extremal functions and the diagnostics that judge them.

Candidates live on nested-chain trees. Two sources:

- geometric_family: the self-similar profile t·γ^k on ring k, an exact
  eigenfunction of M with the eigenvalue c′ = (1−a)/(1−aγ), which is not
  the Bellman eigenvalue. It is the negative control.
- optimize: projected gradient ascent of ∫(Mφ)^p over functions with fixed
  ∫φ = f and ∫φ^p = F, multi-start, returning the best candidate.

The moment constraints are restored after each step by φ ← s·u^r, with r
found by a one-dimensional root-find on the scale-free ratio
∫u^{rp}/(∫u^r)^p and s then fixed by ∫φ = f.
"""

from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from types import MappingProxyType
from typing import List, Literal, Mapping, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from pydantic import BaseModel, field_validator, model_validator
from scipy.optimize import brentq

from .bellman_fn import BellmanParams, bellman_value, check_p
from .errors import CapacityError, DomainError, InvariantViolationError
from .hashing import make_rng
from .linearization import Linearization, linearize
from .maximal_op import maximal_function
from .measure_tree import MeasureTree, build_nested_chain, chain_layout, default_ring_levels
from .sharp_inequalities import _check_family, _union_mask, gap_at_beta_star
from .stepfn import StepFunction, moments, p_average, transfer

logger = logging.getLogger(__name__)

BELLMAN_CAP_RTOL = 1e-9
ZERO_ZETA = 1e-12
FULL_LEAF_MAX_DEPTH = 6
MAX_SHARE_EXPONENT = 8.0
CHAIN_TAIL = 4.0
ORACLE_MAX_TUPLES = 10**8


# Candidate shapes


@dataclass(frozen=True)
class RingProfile:
    """Ring values v_0..v_{K−1} and core value v_K on a nested chain."""
    ring_values: Tuple[float, ...]
    core_value: float

    def __post_init__(self):
        object.__setattr__(self, "ring_values", tuple(float(v) for v in self.ring_values))
        object.__setattr__(self, "core_value", float(self.core_value))
        if any(v < 0 for v in self.ring_values) or self.core_value < 0:
            raise DomainError("ring profile values must be non-negative")

    @property
    def depth(self) -> int:
        return len(self.ring_values)

    def as_array(self) -> np.ndarray:
        return np.array(self.ring_values + (self.core_value,))

    def to_function(self, tree: MeasureTree) -> StepFunction:
        groups = ring_groups(tree)
        if groups.max() + 1 != self.depth + 1:
            raise DomainError(
                f"profile has depth {self.depth} but the chain has depth {int(groups.max())}"
            )
        return StepFunction(tree, self.as_array()[groups])

    @classmethod
    def from_function(cls, phi: StepFunction) -> "RingProfile":
        """Ring averages of φ (exact when φ is constant on rings)."""
        layout = chain_layout(phi.tree)
        rings = tuple(phi.average(r) for r in layout.rings)
        return cls(rings, phi.average(layout.cores[-1]))


def ring_groups(tree: MeasureTree) -> np.ndarray:
    """Per leaf (leaf order): ring index k, or K for the core."""
    layout = chain_layout(tree)
    groups = np.empty(tree.n_leaves, dtype=np.int64)
    for k, ring in enumerate(layout.rings):
        groups[tree.leaf_slice(ring)] = k
    groups[tree.leaf_pos[layout.cores[-1]]] = layout.depth
    return groups


def extremal_chain_ratios(p: float, f: float, F: float, depth: int,
                          horizon: Optional[int] = None) -> List[float]:
    """Chain ratios for a chain laid out to horizon rings (depth when None).

    Under the continuum extremal profile s^{−(1−1/c)}, c = ω_p(f^p/F), the
    share of ∫φ^p inside I_k is u_k = (1 − k/(horizon + CHAIN_TAIL))^2, so
    each ring holds a share proportional to √u_k. The ratios depend on the
    horizon only: chains of every depth up to it are prefixes of one another.
    """
    if depth < 1:
        raise DomainError(f"depth must be at least 1, got {depth}")
    horizon = depth if horizon is None else int(horizon)
    if horizon < depth:
        raise DomainError(f"horizon {horizon} is below depth {depth}")
    c = BellmanParams.from_moments(p, f, F).c
    # u = t^den; den vanishes as c reaches p/(p−1)
    den = 1.0 - p + p / c
    q = MAX_SHARE_EXPONENT if den * MAX_SHARE_EXPONENT <= 1.0 else 1.0 / den
    u = 1.0 - np.arange(horizon + 1) / (horizon + CHAIN_TAIL)
    t = u ** (2.0 * q)
    return [float(t[k + 1] / t[k]) for k in range(depth)]


def power_profile(p: float, f: float, F: float, tree: MeasureTree) -> np.ndarray:
    """Ring averages of s^{−(1−1/c)} laid out by chain position, per group."""
    layout = chain_layout(tree)
    c = BellmanParams.from_moments(p, f, F).c
    alpha = min(1.0 - 1.0 / c, (1.0 - 1e-9) / p)
    tops = np.array([float(tree.measure[i]) for i in layout.cores])
    e = 1.0 - alpha
    vals = np.empty(layout.depth + 1)
    for k in range(layout.depth):
        hi, lo = tops[k], tops[k + 1]
        vals[k] = (hi ** e - lo ** e) / (e * (hi - lo))
    vals[-1] = tops[-1] ** (-alpha) / e
    return vals


def geometric_family(p: float, a: float, gamma: float, t: float, depth: int,
                     ring_subdivision: int = 2) -> StepFunction:
    """t·γ^k on ring R_k; the core carries the untruncated tail average."""
    p = check_p(p)
    if not (0.0 < a < 1.0):
        raise DomainError(f"a = {a} outside (0, 1)")
    if not (gamma > 1.0) or not (t > 0):
        raise DomainError("need gamma > 1 and t > 0")
    if a * gamma ** p >= 1.0:
        raise DomainError(f"a·γ^p = {a * gamma ** p} must be below 1")
    if depth < 2:
        raise DomainError(f"depth must be at least 2, got {depth}")
    tree = build_nested_chain([a] * depth, ring_subdivision)
    rings = tuple(t * gamma ** k for k in range(depth))
    core = t * gamma ** depth * (1.0 - a) / (1.0 - a * gamma)
    return RingProfile(rings, core).to_function(tree)


@dataclass(frozen=True)
class GeometricFit:
    gamma: float
    t: float
    c_prime: float
    feasible: bool


def _geometric_log_ratio(p: float, a: float, gamma: float) -> float:
    """log of F/f^p for the untruncated family."""
    return (p * math.log(1.0 - a * gamma) - (p - 1.0) * math.log(1.0 - a)
            - math.log(1.0 - a * gamma ** p))


def fit_geometric(p: float, f: float, F: float, a: float) -> GeometricFit:
    """Solve the untruncated moment equations for (γ, t) at ratio a."""
    p = check_p(p)
    if not (0.0 < a < 1.0):
        raise DomainError(f"a = {a} outside (0, 1)")
    if not (f > 0) or not (f ** p < F):
        return GeometricFit(1.0, float(f), 1.0, False)
    target = math.log(F / f ** p)
    lo = 1.0 + 1e-12
    hi = a ** (-1.0 / p) * (1.0 - 1e-12)
    g = lambda x: _geometric_log_ratio(p, a, x) - target
    try:
        if g(lo) > 0 or g(hi) < 0:
            return GeometricFit(1.0, float(f), 1.0, False)
        gamma = brentq(g, lo, hi, xtol=1e-15, maxiter=500)
    except (ValueError, RuntimeError) as e:
        logger.debug("fit_geometric failed: %s", e)
        return GeometricFit(1.0, float(f), 1.0, False)
    t = f * (1.0 - a * gamma) / (1.0 - a)
    return GeometricFit(gamma, t, (1.0 - a) / (1.0 - a * gamma), True)


# Residuals and diagnostics


def own_residual(phi: StepFunction, p: float, c: float) -> float:
    """∫|Mφ − cφ|^p dμ for a given c."""
    mphi = maximal_function(phi).mphi.values
    return math.fsum(np.abs(mphi - c * phi.values) ** p * phi.tree.leaf_measures)


def eigen_residual(phi: StepFunction, p: float) -> float:
    """∫|Mφ − cφ|^p dμ with c = ω_p(f^p/F) from φ's own moments."""
    m = moments(phi, p)
    c = BellmanParams.from_moments(p, m.f, m.F).c
    return own_residual(phi, p, c)


@dataclass(frozen=True)
class FamilyRatios:
    """Ratios over the union of a disjoint family.

    ratio_lhs = ∫(Mφ)^p / ∫φ^p over the union, ratio_rhs = ω_p(f^p/F)^p;
    h_ratio = h/∫φ^p against fp_over_F = f^p/F.
    """
    h: float
    int_m: float
    int_phi_p: float
    ratio_lhs: float
    ratio_rhs: float
    h_ratio: float
    fp_over_F: float


def family_ratios(phi: StepFunction, p: float, lin: Linearization,
                  members: Sequence[int]) -> FamilyRatios:
    m = _check_family(lin, members)
    mask = _union_mask(lin, m)
    mu = phi.tree.leaf_measures
    h = math.fsum(float(phi.tree.measure[j]) * lin.y_I[int(j)] ** p for j in m)
    int_m = math.fsum(lin.maximal.mphi.values[mask] ** p * mu[mask])
    int_phi = math.fsum(phi.values[mask] ** p * mu[mask])
    mom = moments(phi, p)
    params = BellmanParams.from_moments(p, mom.f, mom.F)
    return FamilyRatios(
        h=h,
        int_m=int_m,
        int_phi_p=int_phi,
        ratio_lhs=int_m / int_phi if int_phi > 0 else 0.0,
        ratio_rhs=params.c ** p,
        h_ratio=h / int_phi if int_phi > 0 else 0.0,
        fp_over_F=params.ratio,
    )


@dataclass(frozen=True)
class ZeroMassDiagnostics:
    """μ{φ = 0}, the per-member p-averages P_I and the mass of S_{φ,R}."""
    mu_zero: float
    p_map: Mapping[int, float]
    s_phi_r_mass: float


def zero_mass_diagnostics(phi: StepFunction, p: float, lin: Linearization,
                          R: float, zeta: float = ZERO_ZETA) -> ZeroMassDiagnostics:
    if not (R > 0):
        raise DomainError(f"R must be positive, got {R}")
    f = moments(phi, p).f
    zero = phi.values <= zeta * f
    mu_zero = math.fsum(phi.tree.leaf_measures[zero])
    p_map = {
        int(i): (lin.p_integral_on_a[i] / lin.a_I[i] if lin.a_I[i] > 0 else 0.0)
        for i in lin.s_phi
    }
    mass = math.fsum(lin.a_I[i] for i in lin.s_phi if p_map[int(i)] < R)
    return ZeroMassDiagnostics(mu_zero, MappingProxyType(p_map), mass)


def localized_deviation(phi: StepFunction, p: float, f: float, F: float,
                        max_depth: int = 2) -> Tuple[float, float]:
    """max |Av_I(φ) − f| and max |p-average_I(φ) − F| over shallow nodes."""
    nodes = phi.tree.nodes_up_to_depth(max_depth)
    dev_f = max(abs(phi.average(i) - f) for i in nodes)
    dev_F = max(abs(p_average(phi, p, i) - F) for i in nodes)
    return float(dev_f), float(dev_F)


# Optimizer


class OptimizeConfig(BaseModel):
    """Settings for one optimize call.

    chain_ratio None selects extremal_chain_ratios laid out to horizon
    rings; a number gives a chain with that constant ratio. Trees sharing
    horizon (or chain_ratio) and ring_levels are nested across depths, so
    coarser solutions embed into finer trees.
    """
    depth: int
    restarts: int = 8
    max_steps: int = 300
    step_size: float = 0.1
    step_growth: float = 1.5
    step_shrink: float = 0.5
    min_step: float = 1e-10
    seed: int = 7
    mode: Literal["ring", "full_leaf"] = "ring"
    tolerance: float = 1e-13
    chain_ratio: Optional[float] = None
    horizon: Optional[int] = None
    ring_subdivision: int = 2
    ring_levels: Optional[int] = None
    threads: int = 1

    @field_validator("depth", "restarts", "max_steps", "threads")
    def validate_positive(cls, v):
        if v < 1:
            raise ValueError("must be at least 1")
        return v

    @field_validator("ring_levels")
    def validate_levels(cls, v):
        if v is not None and v < 0:
            raise ValueError("ring_levels must be non-negative")
        return v

    @model_validator(mode="after")
    def validate_horizon(self):
        if self.horizon is not None and self.horizon < self.depth:
            raise ValueError(f"horizon {self.horizon} is below depth {self.depth}")
        return self

    @field_validator("chain_ratio")
    def validate_ratio(cls, v):
        if v is not None and not (0.0 < v < 1.0):
            raise ValueError("chain_ratio must lie in (0, 1)")
        return v

    @field_validator("step_size", "min_step")
    def validate_step(cls, v):
        if not (v > 0):
            raise ValueError("step sizes must be positive")
        return v


def chain_tree(p: float, f: float, F: float, config: OptimizeConfig) -> MeasureTree:
    """The search tree of config.depth rings.

    Ring levels default to those of the horizon, so every depth up to the
    horizon yields a node-table prefix of the deepest tree.
    """
    horizon = config.horizon or config.depth
    if config.chain_ratio is not None:
        ratios = [config.chain_ratio] * config.depth
    else:
        ratios = extremal_chain_ratios(p, f, F, config.depth, horizon)
    levels = config.ring_levels
    if levels is None:
        levels = default_ring_levels(horizon)
    return build_nested_chain(ratios, config.ring_subdivision, levels)


def retract_moments(u: np.ndarray, w: np.ndarray, p: float, f: float, F: float,
                    floor: float = 1e-3) -> Optional[np.ndarray]:
    """s·u^r with ∫ = f and ∫^p = F (weights w), or None if unreachable.

    When the support of u is too small to reach F/f^p from below, a floor
    of floor·max(u) is added once and the solve retried.
    """
    target = F / f ** p
    if target <= 1.0 + 1e-15:
        return np.full(u.shape, float(f))
    u = np.maximum(u, 0.0)
    if not np.any(u > 0):
        return None
    log_target = math.log(target)
    for _ in range(2):
        x = u / u.max()

        def g(r: float) -> float:
            xr = x ** r
            return math.log(float(w @ xr ** p)) - p * math.log(float(w @ xr)) - log_target

        lo, hi = 1e-6, 1.0
        if g(lo) > 0:
            u = u + floor * u.max()
            continue
        while g(hi) < 0 and hi < 1e4:
            hi *= 2.0
        if g(hi) < 0:
            return None
        r = brentq(g, lo, hi, xtol=1e-15, maxiter=500)
        xr = x ** r
        return (f / float(w @ xr)) * xr
    return None


@dataclass
class _Problem:
    """Group structure of the search space on a fixed tree."""
    tree: MeasureTree
    p: float
    f: float
    F: float
    groups: np.ndarray      # per leaf -> group index
    weights: np.ndarray     # per group measure

    def function(self, u: np.ndarray) -> StepFunction:
        return StepFunction(self.tree, u[self.groups])

    def objective(self, u: np.ndarray) -> Tuple[float, StepFunction, object]:
        phi = self.function(u)
        res = maximal_function(phi)
        value = res.integral_p(self.p)
        mom = moments(phi, self.p)
        cap = bellman_value(self.p, mom.f, mom.F) * (1.0 + BELLMAN_CAP_RTOL)
        if value > cap:
            raise InvariantViolationError(
                f"candidate exceeds the Bellman bound: {value!r} > {cap!r}"
            )
        return value, phi, res

    def gradient(self, phi: StepFunction, res) -> np.ndarray:
        """Fixed-pattern function-space gradient, averaged per group."""
        tree, p = self.tree, self.p
        owner = res.argmax_node
        mu = tree.leaf_measures
        a = np.bincount(owner, weights=mu, minlength=tree.n_nodes)
        y = phi.averages
        node_w = p * a * np.power(y, p - 1.0) / tree.measure
        cum = np.empty(tree.n_nodes)
        cum[tree.root] = node_w[tree.root]
        for level in tree.levels[1:]:
            cum[level] = cum[tree.parent[level]] + node_w[level]
        G = cum[tree.leaves]
        return np.bincount(self.groups, weights=G * mu) / self.weights

    def project(self, u: np.ndarray, G: np.ndarray) -> np.ndarray:
        """Remove the components normal to both moment constraints."""
        w = self.weights
        n1 = np.ones_like(u)
        n2 = self.p * np.power(u, self.p - 1.0)
        N = np.stack([n1, n2])
        gram = (N * w) @ N.T
        rhs = (N * w) @ G
        lam = np.linalg.lstsq(gram, rhs, rcond=None)[0]
        return G - lam @ N

    def retract(self, u: np.ndarray) -> Optional[np.ndarray]:
        return retract_moments(u, self.weights, self.p, self.f, self.F)

    def on_constraints(self, u: np.ndarray, rtol: float = 1e-12) -> bool:
        w = self.weights
        f1 = float(w @ u)
        Fp = float(w @ u ** self.p)
        return abs(f1 - self.f) <= rtol * self.f and abs(Fp - self.F) <= rtol * self.F


def _make_problem(p: float, f: float, F: float, tree: MeasureTree, mode: str) -> _Problem:
    if mode == "ring":
        groups = ring_groups(tree)
    else:
        groups = np.arange(tree.n_leaves)
    weights = np.bincount(groups, weights=tree.leaf_measures)
    return _Problem(tree, p, f, F, groups, weights)


def _ascend(problem: _Problem, u0: np.ndarray, config: OptimizeConfig) -> Tuple[float, np.ndarray]:
    """Backtracking projected ascent; accepted steps strictly improve."""
    u = u0 if problem.on_constraints(u0) else problem.retract(u0)
    if u is None:
        return -math.inf, u0
    value, phi, res = problem.objective(u)
    scale = math.sqrt(problem.F)
    step = config.step_size
    w = problem.weights
    for _ in range(config.max_steps):
        d = problem.project(u, problem.gradient(phi, res))
        norm = math.sqrt(float(w @ d ** 2))
        if norm <= 1e-14 * scale:
            break
        moved = False
        while step >= config.min_step:
            cand = problem.retract(u + (step * scale / norm) * d)
            if cand is not None:
                cval, cphi, cres = problem.objective(cand)
                if cval > value * (1.0 + config.tolerance):
                    u, value, phi, res = cand, cval, cphi, cres
                    step = min(step * config.step_growth, 1.0)
                    moved = True
                    break
            step *= config.step_shrink
        if not moved:
            break
    return value, u


def _initial_points(problem: _Problem, config: OptimizeConfig, n: int,
                    warm: Optional[np.ndarray]) -> List[np.ndarray]:
    p, f, F = problem.p, problem.f, problem.F
    tree = problem.tree
    base = power_profile(p, f, F, tree)
    ring_of_group = (
        np.arange(base.size) if config.mode == "ring"
        else ring_groups(tree)
    )
    shaped = base[ring_of_group]
    starts: List[np.ndarray] = []
    for i in range(n):
        if i == 0:
            starts.append(warm if warm is not None else shaped.copy())
            continue
        rng = make_rng(config.seed, f"restart:{config.mode}:{config.depth}", i)
        if i == 1:
            mean_ratio = float(np.mean([tree.measure[c] / tree.measure[tree.parent[c]]
                                        for c in chain_layout(tree).cores[1:]]))
            fit = fit_geometric(p, f, F, mean_ratio)
            if fit.feasible:
                K = chain_layout(tree).depth
                prof = np.array([fit.gamma ** k for k in range(K)]
                                + [fit.gamma ** K * fit.c_prime])
                starts.append(prof[ring_of_group])
                continue
        if i % 2:
            starts.append(shaped * rng.lognormal(0.0, 0.5, size=shaped.size))
        else:
            starts.append(rng.exponential(1.0, size=shaped.size))
    return starts


@dataclass(frozen=True)
class OptimizeResult:
    """Best candidate with per-restart attained values."""
    phi: StepFunction
    attained: float
    bound: float
    restart_values: Tuple[float, ...]
    best_restart: int


def search(p: float, f: float, F: float, config: OptimizeConfig,
           warm_start: Optional[StepFunction] = None) -> OptimizeResult:
    """Multi-start ascent; see optimize."""
    p = check_p(p)
    if not (f > 0) or f ** p > F * (1.0 + 1e-9):
        raise DomainError(f"infeasible moments (f={f}, F={F}) for p={p}")
    if config.mode == "full_leaf" and config.depth > FULL_LEAF_MAX_DEPTH:
        raise CapacityError(
            f"full_leaf mode is limited to depth {FULL_LEAF_MAX_DEPTH}, got {config.depth}"
        )
    bound = bellman_value(p, f, F)

    if warm_start is not None:
        tree = warm_start.tree
    else:
        tree = chain_tree(p, f, F, config)

    if F <= f ** p:
        phi = StepFunction.constant(tree, f)
        value = maximal_function(phi).integral_p(p)
        return OptimizeResult(phi, value, bound, (value,), 0)

    problem = _make_problem(p, f, F, tree, config.mode)
    warm = None
    if warm_start is not None:
        # group values of the warm start (group-constant by construction)
        warm = np.bincount(problem.groups, weights=warm_start.values * tree.leaf_measures) / problem.weights

    starts = _initial_points(problem, config, config.restarts, warm)

    def run(i: int):
        value, u = _ascend(problem, starts[i], config)
        logger.debug("restart %d (depth %d): attained %.12g", i, config.depth, value)
        return value, u

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            outcomes = list(pool.map(run, range(len(starts))))
    else:
        outcomes = [run(i) for i in range(len(starts))]

    values = tuple(v for v, _ in outcomes)
    best = max(range(len(outcomes)), key=lambda i: (values[i], -i))
    if not math.isfinite(values[best]):
        raise InvariantViolationError("no restart reached the moment constraints")
    phi = problem.function(outcomes[best][1])
    logger.info("depth %d: best restart %d attained %.12g (bound %.12g)",
                config.depth, best, values[best], bound)
    return OptimizeResult(phi, values[best], bound, values, best)


def optimize(p: float, f: float, F: float, config: OptimizeConfig,
             warm_start: Optional[StepFunction] = None) -> StepFunction:
    """Best candidate for sup ∫(Mφ)^p at moments (f, F)."""
    return search(p, f, F, config, warm_start).phi


def embed_profile(phi: StepFunction, finer: MeasureTree) -> StepFunction:
    """A coarser candidate carried onto a deeper chain that refines its tree."""
    return transfer(phi, finer)


# Oracle


def brute_force_oracle(p: float, f: float, F: float, depth: int,
                       grid_max: float = 4.0, grid_step: float = 0.05,
                       chain_ratio: Optional[float] = None,
                       ring_subdivision: int = 2,
                       ring_levels: int = 1,
                       moment_rtol: float = 0.02,
                       top_k: int = 200) -> float:
    """Exhaustive grid search over leaf values of a small chain.

    All leaves but the core range over the grid; the core takes the value
    that makes ∫φ = f. Tuples within moment_rtol of F are projected onto
    the exact constraints and the best ∫(Mφ)^p is returned.
    """
    p = check_p(p)
    if depth > 2:
        raise CapacityError(f"oracle is limited to depth 2, got {depth}")
    config = OptimizeConfig(depth=depth, chain_ratio=chain_ratio,
                            ring_subdivision=ring_subdivision, ring_levels=ring_levels)
    tree = chain_tree(p, f, F, config)
    if F <= f ** p:
        return maximal_function(StepFunction.constant(tree, f)).integral_p(p)

    grid = np.arange(0.0, grid_max + 0.5 * grid_step, grid_step)
    n = tree.n_leaves
    if grid.size ** (n - 1) > ORACLE_MAX_TUPLES:
        raise CapacityError(f"{grid.size}^{n - 1} tuples exceed the oracle cap")

    mu = tree.leaf_measures
    core_pos = int(tree.leaf_pos[chain_layout(tree).cores[-1]])
    free = [i for i in range(n) if i != core_pos]

    # node averages as a linear map of leaf values
    W = np.zeros((n, tree.n_nodes))
    for node in range(tree.n_nodes):
        sl = tree.leaf_slice(node)
        W[sl, node] = mu[sl] / tree.measure[node]
    anc = [np.array(tree.ancestors(int(leaf))) for leaf in tree.leaves]

    def batch_objective(V: np.ndarray) -> np.ndarray:
        A = V @ W
        M = np.stack([A[:, a].max(axis=1) for a in anc], axis=1)
        return (M ** p) @ mu

    # leading free coordinate outer, the rest vectorized
    inner = np.array(list(product(grid, repeat=len(free) - 1)))
    pool: List[Tuple[float, np.ndarray]] = []
    for lead in grid:
        V = np.zeros((inner.shape[0], n))
        V[:, free[0]] = lead
        V[:, free[1:]] = inner
        V[:, core_pos] = (f - V @ mu) / mu[core_pos]
        ok = V[:, core_pos] >= 0
        Fv = (V ** p) @ mu
        ok &= np.abs(Fv - F) <= moment_rtol * F
        if not ok.any():
            continue
        Vok = V[ok]
        vals = batch_objective(Vok)
        keep = np.argsort(-vals, kind="stable")[:top_k]
        pool.extend((float(vals[k]), Vok[k]) for k in keep)
        pool.sort(key=lambda t: -t[0])
        del pool[top_k:]

    best = -math.inf
    for _, v in pool:
        u = retract_moments(v, mu, p, f, F)
        if u is None:
            continue
        best = max(best, maximal_function(StepFunction(tree, u)).integral_p(p))
    if not math.isfinite(best):
        raise DomainError("no grid tuple lies near the moment constraints")
    return best


# Depth sweep


@dataclass(frozen=True)
class SweepRow:
    """One depth of a sweep; attained ≤ bound + τ_num."""
    depth: int
    attained: float
    bound: float
    gap: float
    residual: float
    mu_zero: float
    gap_beta_star: float
    loc_dev_f: float
    loc_dev_F: float

    COLUMNS = ("depth", "attained", "bound", "gap", "residual", "mu_zero",
               "gap_beta_star", "loc_dev_f", "loc_dev_F")

    def to_row(self) -> tuple:
        return tuple(getattr(self, c) for c in self.COLUMNS)


def sweep_row(phi: StepFunction, p: float, f: float, F: float, depth: int) -> SweepRow:
    """Diagnostics of one candidate at its target moments."""
    lin = linearize(phi, p)
    attained = lin.maximal.integral_p(p)
    bound = bellman_value(p, f, F)
    zero = zero_mass_diagnostics(phi, p, lin, R=1.0)
    dev_f, dev_F = localized_deviation(phi, p, f, F)
    return SweepRow(
        depth=depth,
        attained=attained,
        bound=bound,
        gap=bound - attained,
        residual=eigen_residual(phi, p),
        mu_zero=zero.mu_zero,
        gap_beta_star=gap_at_beta_star(phi, p, lin),
        loc_dev_f=dev_f,
        loc_dev_F=dev_F,
    )


def depth_sweep(p: float, f: float, F: float, depths: Sequence[int],
                config: OptimizeConfig) -> List[SweepRow]:
    """optimize at each depth, warm-started from the previous depth.

    Every tree is laid out to the deepest depth of the sweep, so each one is
    a node-table prefix of the next and the previous optimum embeds into it
    with the same ∫(Mφ)^p. Along increasing depths the attained value is
    therefore nondecreasing.
    """
    depths = [int(d) for d in depths]
    if not depths:
        return []
    horizon = max(max(depths), config.horizon or 0)
    levels = config.ring_levels
    if levels is None:
        levels = default_ring_levels(horizon)
    rows: List[SweepRow] = []
    previous: Optional[StepFunction] = None
    for d in depths:
        cfg = config.model_copy(update={"depth": d, "horizon": horizon, "ring_levels": levels})
        tree = chain_tree(p, f, F, cfg)
        warm = None
        if previous is not None and tree.extends(previous.tree):
            warm = embed_profile(previous, tree)
        result = search(p, f, F, cfg, warm_start=warm)
        previous = result.phi
        rows.append(sweep_row(result.phi, p, f, F, d))
        logger.debug("sweep depth %d: gap %.3g residual %.3g (warm start %s)",
                     d, rows[-1].gap, rows[-1].residual, warm is not None)
    return rows


__all__ = [
    "RingProfile",
    "ring_groups",
    "extremal_chain_ratios",
    "power_profile",
    "geometric_family",
    "GeometricFit",
    "fit_geometric",
    "own_residual",
    "eigen_residual",
    "FamilyRatios",
    "family_ratios",
    "ZeroMassDiagnostics",
    "zero_mass_diagnostics",
    "localized_deviation",
    "OptimizeConfig",
    "chain_tree",
    "retract_moments",
    "OptimizeResult",
    "search",
    "optimize",
    "embed_profile",
    "brute_force_oracle",
    "SweepRow",
    "sweep_row",
    "depth_sweep",
]
