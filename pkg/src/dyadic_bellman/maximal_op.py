"""The tree maximal operator and its classical bounds.

M_T φ(x) is the largest average of φ over tree nodes containing x. On a
finite truncation the sup runs over the ancestor chain of x's leaf, so one
top-down pass carrying the running maximum evaluates it exactly.

Ties go to the largest node: a descendant displaces the running maximum
only when its average exceeds it by more than TIE_RTOL (relative), so
averages equal up to rounding keep the higher node.
"""

from __future__ import annotations
from dataclasses import dataclass
from typing import Optional
import math

import numpy as np

from .bellman_fn import bellman_value, check_p
from .errors import DomainError
from .stepfn import StepFunction, moments, p_integral

TIE_RTOL = 1e-12


def exceeds(value, reference, rtol: float = TIE_RTOL):
    """value > reference beyond the tie tolerance (works on arrays).

    The reference must be finite.
    """
    return value > reference + rtol * np.abs(reference)


@dataclass(frozen=True, eq=False)
class MaximalResult:
    """Mφ on the leaves together with where the max is attained.

    Attributes:
        mphi: Mφ as a step function on φ's tree
        argmax_node: Per leaf (leaf order), the largest node attaining Mφ
    """
    mphi: StepFunction
    argmax_node: np.ndarray

    def integral_p(self, p: float) -> float:
        """∫(Mφ)^p dμ."""
        return p_integral(self.mphi, p)


def maximal_function(phi: StepFunction, tie_rtol: float = TIE_RTOL) -> MaximalResult:
    """Evaluate Mφ by one root-to-leaf pass."""
    tree = phi.tree
    avg = phi.averages
    best = np.empty(tree.n_nodes)
    arg = np.empty(tree.n_nodes, dtype=np.int64)
    best[tree.root] = avg[tree.root]
    arg[tree.root] = tree.root
    for level in tree.levels[1:]:
        par = tree.parent[level]
        better = exceeds(avg[level], best[par], tie_rtol)
        best[level] = np.where(better, avg[level], best[par])
        arg[level] = np.where(better, level, arg[par])
    leaf_arg = arg[tree.leaves]
    leaf_arg.setflags(write=False)
    return MaximalResult(StepFunction(tree, avg[leaf_arg]), leaf_arg)


def check_weak_type(phi: StepFunction, lam: float,
                    result: Optional[MaximalResult] = None) -> float:
    """∫_{Mφ>λ} φ dμ − λ·μ{Mφ > λ}, nonnegative by the weak-type bound."""
    if not (lam > 0):
        raise DomainError(f"lambda must be positive, got {lam}")
    result = result or maximal_function(phi)
    mask = result.mphi.values > lam
    mu = phi.tree.leaf_measures[mask]
    return math.fsum(phi.values[mask] * mu) - lam * math.fsum(mu)


def weak_type_levels(phi: StepFunction, result: Optional[MaximalResult] = None,
                     eps_rel: float = 1e-9) -> np.ndarray:
    """Each distinct level of Mφ, just below and just above it."""
    result = result or maximal_function(phi)
    levels = np.unique(result.mphi.values)
    levels = levels[levels > 0]
    return np.unique(np.concatenate([levels * (1.0 - eps_rel), levels * (1.0 + eps_rel)]))


def check_lp_bound(phi: StepFunction, p: float,
                   result: Optional[MaximalResult] = None) -> float:
    """(p/(p−1))^p·∫φ^p − ∫(Mφ)^p."""
    p = check_p(p)
    result = result or maximal_function(phi)
    return (p / (p - 1.0)) ** p * p_integral(phi, p) - result.integral_p(p)


def check_bellman_bound(phi: StepFunction, p: float,
                        result: Optional[MaximalResult] = None) -> float:
    """F·ω_p(f^p/F)^p − ∫(Mφ)^p."""
    m = moments(phi, p)
    result = result or maximal_function(phi)
    return bellman_value(p, m.f, m.F) - result.integral_p(p)


__all__ = [
    "TIE_RTOL",
    "exceeds",
    "MaximalResult",
    "maximal_function",
    "check_weak_type",
    "weak_type_levels",
    "check_lp_bound",
    "check_bellman_bound",
]
