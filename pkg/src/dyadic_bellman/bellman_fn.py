"""Special functions of the Bellman bound.

H_p(z) = −(p−1)z^p + p·z^{p−1} decreases from 1 to 0 on [1, p/(p−1)];
ω_p is its inverse. The Bellman value of the moment pair (f, F) is
F·ω_p(f^p/F)^p, and the scalar inequalities used in the sharp-inequality
chain are exposed here as slack functions.
"""

from __future__ import annotations
from dataclasses import dataclass
from typing import Sequence
import logging
import math

import numpy as np

from .config import TAU_NUM, TAU_ROOT
from .errors import DomainError, UsageError

logger = logging.getLogger(__name__)

P_MAX = 64.0
BISECT_WIDTH = 1e-6
MAX_ITER = 200

# Relative slack for z-domain membership of rounded endpoints
_DOMAIN_SLACK = 1e-12


def check_p(p: float) -> float:
    p = float(p)
    if not (1.0 < p <= P_MAX):
        raise DomainError(f"p = {p} outside (1, {P_MAX:g}]")
    return p


def conjugate(p: float) -> float:
    """q with 1/p + 1/q = 1."""
    p = check_p(p)
    return p / (p - 1.0)


def h_p(p: float, z: float) -> float:
    """H_p(z) on [1, p/(p−1)]."""
    p = check_p(p)
    zmax = p / (p - 1.0)
    if not (1.0 - _DOMAIN_SLACK <= z <= zmax * (1.0 + _DOMAIN_SLACK)):
        raise DomainError(f"z = {z} outside [1, {zmax}] for p = {p}")
    return z ** (p - 1.0) * (p - (p - 1.0) * z)


def h_p_prime(p: float, z: float) -> float:
    """H_p'(z) = p(p−1)z^{p−2}(1−z), negative for z > 1."""
    p = check_p(p)
    return p * (p - 1.0) * z ** (p - 2.0) * (1.0 - z)


def omega_p(p: float, x: float, tau_root: float = TAU_ROOT) -> float:
    """Inverse of H_p: the z in [1, p/(p−1)] with H_p(z) = x.

    Bisection down to a bracket of width 1e-6, then Newton steps that fall
    back to bisection whenever they leave the bracket.
    """
    p = check_p(p)
    x = float(x)
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"x = {x} outside [0, 1]")
    zmax = p / (p - 1.0)
    if x == 1.0:
        return 1.0
    if x == 0.0:
        return zmax

    # H decreasing: H(lo) >= x >= H(hi)
    lo, hi = 1.0, zmax
    n = 0
    while hi - lo > BISECT_WIDTH and n < MAX_ITER:
        mid = 0.5 * (lo + hi)
        if h_p(p, mid) > x:
            lo = mid
        else:
            hi = mid
        n += 1

    z = 0.5 * (lo + hi)
    best_z, best_r = z, math.inf
    for _ in range(MAX_ITER - n):
        r = h_p(p, z) - x
        if abs(r) < best_r:
            best_z, best_r = z, abs(r)
        if abs(r) <= tau_root:
            return z
        if r > 0:
            lo = z
        else:
            hi = z
        d = h_p_prime(p, z)
        step = z - r / d if d != 0.0 else math.nan
        if not (lo < step < hi):
            step = 0.5 * (lo + hi)
        if step == z:
            break
        z = step

    if best_r > tau_root:
        logger.debug("omega_p(p=%g, x=%r) stopped at residual %.3g", p, x, best_r)
    return best_z


def bellman_value(p: float, f: float, F: float, tau_num: float = TAU_NUM) -> float:
    """F·ω_p(f^p/F)^p, the supremum of ∫(Mφ)^p at moments (f, F)."""
    p = check_p(p)
    if not (f > 0):
        raise DomainError(f"f must be positive, got {f}")
    if f ** p > F * (1.0 + tau_num):
        raise DomainError(f"Hölder violated: f^p = {f ** p!r} > F = {F!r}")
    x = min(1.0, f ** p / F)
    return F * omega_p(p, x) ** p


@dataclass(frozen=True)
class BellmanParams:
    """Moment pair with its derived eigenvalue c = ω_p(f^p/F).

    Attributes:
        p, f, F: The moment problem
        c: ω_p(f^p/F), in [1, p/(p−1)]
        beta_star: c − 1
        q: Conjugate exponent
    """
    p: float
    f: float
    F: float
    c: float
    beta_star: float
    q: float

    def __post_init__(self):
        zmax = self.p / (self.p - 1.0)
        if not (1.0 <= self.c <= zmax * (1.0 + _DOMAIN_SLACK)):
            raise DomainError(f"c = {self.c} outside [1, {zmax}]")
        if self.beta_star < 0:
            raise DomainError(f"beta_star = {self.beta_star} is negative")

    @classmethod
    def from_moments(cls, p: float, f: float, F: float, tau_num: float = TAU_NUM) -> "BellmanParams":
        p = check_p(p)
        if not (f > 0):
            raise DomainError(f"f must be positive, got {f}")
        if f ** p > F * (1.0 + tau_num):
            raise DomainError(f"Hölder violated: f^p = {f ** p!r} > F = {F!r}")
        c = omega_p(p, min(1.0, f ** p / F))
        return cls(p=p, f=float(f), F=float(F), c=c, beta_star=c - 1.0, q=p / (p - 1.0))

    @property
    def ratio(self) -> float:
        return min(1.0, self.f ** self.p / self.F)

    @property
    def bound(self) -> float:
        return self.F * self.c ** self.p


def ineq_36_slack(p: float, beta: float, x: float) -> float:
    """1/(β+1−βx)^{p−1} − 1/(β+1)^{p−1} − (p−1)βx/(β+1)^p, nonnegative."""
    p = check_p(p)
    if not (beta > 0):
        raise DomainError(f"beta must be positive, got {beta}")
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"x = {x} outside [0, 1]")
    b1 = beta + 1.0
    return (
        1.0 / (b1 - beta * x) ** (p - 1.0)
        - 1.0 / b1 ** (p - 1.0)
        - (p - 1.0) * beta * x / b1 ** p
    )


def young_gap(p: float, t: float) -> float:
    """t^p/p + 1/q − t, zero only at t = 1."""
    p = check_p(p)
    if t < 0:
        raise DomainError(f"t must be non-negative, got {t}")
    q = p / (p - 1.0)
    return t ** p / p + 1.0 / q - t


def holder_split_slack(p: float, lams: Sequence[float], sigmas: Sequence[float]) -> float:
    """Σλ_i^p/σ_i^{p−1} − (Σλ_i)^p/(Σσ_i)^{p−1}."""
    p = check_p(p)
    lams = [float(v) for v in lams]
    sigmas = [float(v) for v in sigmas]
    if len(lams) != len(sigmas) or not lams:
        raise UsageError(
            f"need equal nonzero lengths, got {len(lams)} and {len(sigmas)}"
        )
    if any(v < 0 for v in lams) or any(not (s > 0) for s in sigmas):
        raise DomainError("lambdas must be >= 0 and sigmas > 0")
    parts = math.fsum(l ** p / s ** (p - 1.0) for l, s in zip(lams, sigmas))
    whole = math.fsum(lams) ** p / math.fsum(sigmas) ** (p - 1.0)
    return parts - whole


def beta_log_grid(n: int = 25, lo: float = 1e-3, hi: float = 1e3) -> np.ndarray:
    """n log-spaced β values in [lo, hi]."""
    if n < 2 or not (0 < lo < hi):
        raise DomainError("need n >= 2 and 0 < lo < hi")
    return np.geomspace(lo, hi, n)


def ineq_311_rhs(p: float, beta: float, int_phi_p: float, h: float) -> float:
    """(1 + 1/β)·((β+1)^{p−1}·∫φ^p − h)/(p − 1), an upper bound for ∫(Mφ)^p
    over a union of disjoint S_φ members with h = Σ μ(I)y_I^p."""
    p = check_p(p)
    if not (beta > 0):
        raise DomainError(f"beta must be positive, got {beta}")
    return (1.0 + 1.0 / beta) * ((beta + 1.0) ** (p - 1.0) * int_phi_p - h) / (p - 1.0)


def beta_minimizer(p: float, h: float, int_phi_p: float) -> float:
    """β minimizing ineq_311_rhs: ω_p(h/∫φ^p) − 1."""
    if not (int_phi_p > 0):
        raise DomainError("the p-integral must be positive")
    x = min(1.0, max(0.0, h / int_phi_p))
    return omega_p(p, x) - 1.0


__all__ = [
    "P_MAX",
    "check_p",
    "conjugate",
    "h_p",
    "h_p_prime",
    "omega_p",
    "bellman_value",
    "BellmanParams",
    "ineq_36_slack",
    "young_gap",
    "holder_split_slack",
    "beta_log_grid",
    "ineq_311_rhs",
    "beta_minimizer",
]
