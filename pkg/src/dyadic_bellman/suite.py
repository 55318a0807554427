"""The acceptance suite.

run_full_suite executes the ten acceptance criteria in order and collects
one CheckResult per assertion plus the plot-ready tables (corpus, slacks,
sweep, negative_control). Scale comes from LabConfig, so tests run the same
code on a smaller corpus.
"""

from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple
import logging
import math
import time

import numpy as np

from .bellman_fn import bellman_value, h_p, omega_p
from .config import LabConfig
from .extremal_search import (
    OptimizeConfig,
    SweepRow,
    brute_force_oracle,
    depth_sweep,
    eigen_residual,
    fit_geometric,
    geometric_family,
    own_residual,
    search,
)
from .g_construction import build_g, verify_g, zero_measure_of_g
from .hashing import make_rng
from .linearization import linearize, reconstruct_maximal, verify_lemma31, verify_lemma32
from .maximal_op import check_lp_bound, check_weak_type, maximal_function, weak_type_levels
from .measure_tree import build_random, build_uniform
from .reports import CheckResult, CsvTable, RunReport
from .sharp_inequalities import (
    SlackRecord,
    min_slacks,
    sweep_inequalities,
    verify_310,
    verify_cor31,
    verify_thm31,
    verify_thm32,
)
from .stepfn import StepFunction, moments, random_step_function, transfer

logger = logging.getLogger(__name__)

CORPUS_PS = (1.5, 2.0, 3.0)
CORPUS_MAX_DEPTH = 8
CORPUS_MAX_ARITY = 3

SPECIAL_PS = (1.5, 2.0, 3.0, 8.0)
SPECIAL_TOL = 1e-12

# Extremal sweep problem: p = 2, f = 1, F = 4/3, bound 3.
SWEEP_P, SWEEP_F, SWEEP_BIG_F = 2.0, 1.0, 4.0 / 3.0
NEGATIVE_A = 0.5
NEGATIVE_MARGIN = 0.01
NEGATIVE_OWN_TARGET = 1e-3
ORACLE_SLACK = 1e-3
ORACLE_RESTARTS = 32
ORACLE_RING_LEVELS = 1
WORKED_TOL = 1e-6
TREND_RTOL = 1e-6

Instance = Tuple[StepFunction, float]


def build_corpus(seed: int, size: int) -> List[Instance]:
    """Seeded random (φ, p) pairs; p cycles through CORPUS_PS."""
    corpus = []
    for i in range(size):
        rng = make_rng(seed, "corpus", i)
        depth = int(rng.integers(1, CORPUS_MAX_DEPTH + 1))
        tree = build_random(rng, depth, CORPUS_MAX_ARITY)
        corpus.append((random_step_function(rng, tree), CORPUS_PS[i % len(CORPUS_PS)]))
    return corpus


@dataclass(frozen=True)
class CorpusRow:
    """Per-instance results of criteria 2, 3, 4 and 6.

    Slacks are relative to max(1, scale) of the quantity they bound.
    """
    instance: int
    p: float
    n_leaves: int
    bellman_slack: float
    weak_slack: float
    lp_slack: float
    lemma31: bool
    lemma32: bool
    reconstruct: bool
    mass_dev: float
    g_feasible: bool
    g_checks: bool
    g_zero_dev: float
    mg_slack: float

    COLUMNS = ("instance", "p", "n_leaves", "bellman_slack", "weak_slack", "lp_slack",
               "lemma31", "lemma32", "reconstruct", "mass_dev", "g_feasible", "g_checks",
               "g_zero_dev", "mg_slack")

    def to_row(self) -> tuple:
        return tuple(getattr(self, c) for c in self.COLUMNS)


def corpus_row(index: int, phi: StepFunction, p: float, config: LabConfig) -> CorpusRow:
    tol = config.tolerances
    result = maximal_function(phi)
    mom = moments(phi, p)
    mphi_p = result.integral_p(p)
    bound = bellman_value(p, mom.f, mom.F)

    weak = min(
        (check_weak_type(phi, lam, result) for lam in weak_type_levels(phi, result)),
        default=0.0,
    )
    lin = linearize(phi, p, result)
    l32 = verify_lemma32(phi, lin, tol.tau_num)
    recon = bool(np.array_equal(reconstruct_maximal(lin).values, result.mphi.values))

    gphi = build_g(phi, p, lin, tol.tau_num, tol.tau_meas)
    g_ok, zero_dev, mg_slack = False, 0.0, 0.0
    if gphi.all_feasible:
        g_ok = verify_g(phi, p, gphi, tol.tau_num).holds
        expected_zero = math.fsum(r.a_I - r.gamma_I for r in gphi.records.values())
        zero_dev = abs(zero_measure_of_g(gphi) - expected_zero)
        mg = maximal_function(gphi.g).mphi.values
        mphi_r = transfer(result.mphi, gphi.refined_tree).values
        mg_slack = float(np.min((mg - mphi_r) / np.maximum(1.0, mphi_r)))

    return CorpusRow(
        instance=index,
        p=p,
        n_leaves=phi.tree.n_leaves,
        bellman_slack=(bound - mphi_p) / max(1.0, bound),
        weak_slack=weak / max(1.0, mom.f),
        lp_slack=check_lp_bound(phi, p, result) / max(1.0, mphi_p),
        lemma31=verify_lemma31(phi, lin),
        lemma32=l32.part_i and l32.part_iii and l32.part_iv,
        reconstruct=recon,
        mass_dev=abs(lin.integral_mphi_p() - mphi_p) / max(1.0, mphi_p),
        g_feasible=gphi.all_feasible,
        g_checks=g_ok,
        g_zero_dev=zero_dev,
        mg_slack=mg_slack,
    )


def corpus_rows(corpus: Sequence[Instance], config: LabConfig) -> List[CorpusRow]:
    def work(item):
        i, (phi, p) = item
        return corpus_row(i, phi, p, config)

    items = list(enumerate(corpus))
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            return list(pool.map(work, items))
    return [work(it) for it in items]


def _check(name: str, passed: bool, value: float, detail: str = "") -> CheckResult:
    level = logging.INFO if passed else logging.WARNING
    logger.log(level, "%s %s (value %.6g) %s", "PASS" if passed else "FAIL", name, value, detail)
    return CheckResult(name, passed, value, detail)


# Criteria


def check_special_functions() -> List[CheckResult]:
    xs = np.linspace(0.0, 1.0, 101)
    worst = 0.0
    for p in SPECIAL_PS:
        for x in xs:
            worst = max(worst, abs(h_p(p, omega_p(p, float(x))) - float(x)))
    endpoints = max(
        max(abs(omega_p(p, 0.0) - p / (p - 1.0)), abs(omega_p(p, 1.0) - 1.0)) for p in SPECIAL_PS
    )
    example = abs(omega_p(2.0, 0.75) - 1.5)
    return [
        _check("omega_inverse", worst <= SPECIAL_TOL, worst, "max |H_p(omega_p(x)) - x|"),
        _check("omega_endpoints", endpoints <= SPECIAL_TOL, endpoints),
        _check("omega_example", example <= SPECIAL_TOL, example, "omega_2(0.75) = 1.5"),
    ]


def check_corpus(rows: Sequence[CorpusRow], tau: float) -> List[CheckResult]:
    if not rows:
        return []
    n = len(rows)
    bellman = min(r.bellman_slack for r in rows)
    weak = min(r.weak_slack for r in rows)
    lp = min(r.lp_slack for r in rows)
    lin_bad = sum(1 for r in rows if not (r.lemma31 and r.lemma32 and r.reconstruct))
    mass = max(r.mass_dev for r in rows)
    feasible = [r for r in rows if r.g_feasible]
    g_bad = sum(1 for r in feasible if not r.g_checks)
    zero = max((r.g_zero_dev for r in feasible), default=0.0)
    mg = min((r.mg_slack for r in feasible), default=0.0)
    return [
        _check("bellman_bound", bellman >= -tau, bellman, f"{n} instances"),
        _check("weak_type", weak >= -tau, weak),
        _check("lp_bound", lp >= -tau, lp),
        _check("linearization_exact", lin_bad == 0, float(lin_bad), "instances failing"),
        _check("maximal_mass", mass <= tau, mass, "|sum a_I y_I^p - int (M phi)^p|"),
        _check("g_checks", g_bad == 0, float(g_bad), f"{len(feasible)}/{n} stage-2 feasible"),
        _check("g_zero_measure", zero <= tau, zero),
        _check("g_dominates", mg >= -tau, mg, "min (Mg - M phi)"),
    ]


def worked_example_checks(tau: float = WORKED_TOL) -> List[CheckResult]:
    """(4,0,0,0) on the depth-2 binary tree at p = 2, β = 1."""
    tree = build_uniform(2, 2)
    phi = StepFunction(tree, [4.0, 0.0, 0.0, 0.0])
    lin = linearize(phi, 2.0)
    cases = [
        ("worked_thm31", verify_thm31(phi, 2.0, lin, [1], 1.0), 0.375),
        ("worked_thm32", verify_thm32(phi, 2.0, lin, [1], 1.0), 1.75),
        ("worked_cor31", verify_cor31(phi, 2.0, lin, [3], 1.0), 1.125),
        ("worked_310", verify_310(phi, 2.0, 1.0, lin), 2.125),
    ]
    return [_check(name, abs(got - want) <= tau, got, f"expected {want}") for name, got, want in cases]


def check_inequalities(records: Sequence[SlackRecord], tau: float) -> List[CheckResult]:
    mins = min_slacks(records)
    out = [
        _check(f"ineq_{name}", mins.get(name, 0.0) >= -tau, mins.get(name, 0.0))
        for name in ("thm31", "thm32", "cor31", "310")
    ]
    add = -mins.get("additivity", 0.0)
    out.append(_check("ineq_additivity", add <= tau, add, "max |thm32 + cor31 - 310|"))
    return out


def _nonincreasing(values: Sequence[float], rtol: float = TREND_RTOL) -> bool:
    return all(b <= a + rtol * max(1.0, abs(a)) for a, b in zip(values, values[1:]))


def sweep_config(config: LabConfig) -> OptimizeConfig:
    return OptimizeConfig(
        depth=config.sweep_depths[0],
        restarts=config.sweep_restarts,
        max_steps=config.max_steps,
        seed=config.seed,
        mode="ring",
        threads=config.threads,
    )


def sweep_table(config: LabConfig, depths: Sequence[int]) -> CsvTable:
    rows = depth_sweep(SWEEP_P, SWEEP_F, SWEEP_BIG_F, depths, sweep_config(config))
    return CsvTable(SweepRow.COLUMNS, [r.to_row() for r in rows])


def check_sweep(table: CsvTable, tau: float) -> List[CheckResult]:
    attained = table.column("attained")
    bound = table.column("bound")[0]
    gap = table.column("gap")
    residual = table.column("residual")
    mu_zero = table.column("mu_zero")
    gap_star = table.column("gap_beta_star")
    below = max(a - bound for a in attained)
    rising = all(b >= a - tau * bound for a, b in zip(attained, attained[1:]))
    return [
        _check("sweep_below_bound", below < 0, below, "max attained - bound"),
        _check("sweep_attained_nondecreasing", rising, attained[-1]),
        _check("sweep_gap_halves", gap[-1] < gap[0] / 2, gap[-1], f"first gap {gap[0]:.6g}"),
        _check("sweep_residual_trend",
               _nonincreasing(residual) and residual[-1] < residual[0] / 2,
               residual[-1], f"first residual {residual[0]:.6g}"),
        _check("sweep_mu_zero_trend", _nonincreasing(mu_zero), mu_zero[-1]),
        _check("sweep_gap_beta_star_trend", _nonincreasing(gap_star), gap_star[-1]),
    ]


NEGATIVE_COLUMNS = ("depth", "c_prime", "own_residual", "eigen_residual")


def negative_control_table(depths: Sequence[int]) -> CsvTable:
    fit = fit_geometric(SWEEP_P, SWEEP_F, SWEEP_BIG_F, NEGATIVE_A)
    rows = []
    for K in depths:
        phi = geometric_family(SWEEP_P, NEGATIVE_A, fit.gamma, fit.t, int(K))
        rows.append((int(K), fit.c_prime, own_residual(phi, SWEEP_P, fit.c_prime),
                     eigen_residual(phi, SWEEP_P)))
    return CsvTable(NEGATIVE_COLUMNS, rows)


def check_negative_control(table: CsvTable) -> List[CheckResult]:
    c_bellman = omega_p(SWEEP_P, SWEEP_F ** SWEEP_P / SWEEP_BIG_F)
    c_prime = table.column("c_prime")[0]
    own = table.column("own_residual")
    eigen = table.column("eigen_residual")
    margin = c_bellman - c_prime
    return [
        _check("negative_eigenvalue_margin", margin > NEGATIVE_MARGIN, margin, "omega_p - c'"),
        _check("negative_own_residual",
               _nonincreasing(own) and own[-1] < NEGATIVE_OWN_TARGET, own[-1]),
        _check("negative_eigen_separated", eigen[-1] > 10.0 * own[-1], eigen[-1],
               f"own residual {own[-1]:.3g}"),
    ]


def check_oracle(config: LabConfig) -> List[CheckResult]:
    bound = bellman_value(SWEEP_P, SWEEP_F, SWEEP_BIG_F)
    oracle = brute_force_oracle(SWEEP_P, SWEEP_F, SWEEP_BIG_F, depth=2, ring_levels=ORACLE_RING_LEVELS)
    opt = search(SWEEP_P, SWEEP_F, SWEEP_BIG_F, OptimizeConfig(
        depth=2,
        restarts=max(ORACLE_RESTARTS, config.sweep_restarts),
        max_steps=config.max_steps,
        seed=config.seed,
        mode="full_leaf",
        ring_levels=ORACLE_RING_LEVELS,
        threads=config.threads,
    )).attained
    return [
        _check("oracle_below_bound", oracle <= bound * (1.0 + config.tolerances.tau_num), oracle),
        _check("oracle_matches_optimizer", oracle <= opt + ORACLE_SLACK, oracle - opt,
               f"optimizer {opt:.12g}"),
    ]


# Runner


def inequality_instances(corpus: Sequence[Instance], config: LabConfig) -> List[Instance]:
    return list(corpus[: config.inequality_instances])


def slack_table(instances: Sequence[Instance], config: LabConfig) -> CsvTable:
    records = sweep_inequalities(instances, config.seed, config.threads)
    return CsvTable(SlackRecord.COLUMNS, [r.to_row() for r in records])


def _records(table: CsvTable) -> List[SlackRecord]:
    return [SlackRecord(*row) for row in table.rows]


def check_determinism(config: LabConfig, tables: Dict[str, CsvTable]) -> List[CheckResult]:
    """Rebuild every table, the full sweep included, and compare body checksums."""
    corpus = build_corpus(config.seed, max(config.corpus_size, config.inequality_instances))
    again = {
        "corpus": CsvTable(CorpusRow.COLUMNS,
                           [r.to_row() for r in corpus_rows(corpus[: config.corpus_size], config)]),
        "slacks": slack_table(inequality_instances(corpus, config), config),
        "sweep": sweep_table(config, config.sweep_depths),
        "negative_control": negative_control_table(config.negative_control_depths),
    }
    same = [name for name, t in again.items() if t.checksum == tables[name].checksum]
    passed = len(same) == len(again)
    differing = sorted(set(again) - set(same))
    return [_check("determinism", passed, float(len(differing)),
                   "identical bodies" if passed else "differs: " + ",".join(differing))]


def run_full_suite(config: LabConfig) -> RunReport:
    """Run every acceptance criterion in order."""
    start = time.perf_counter()
    tau = config.tolerances.tau_num
    checks: List[CheckResult] = []
    tables: Dict[str, CsvTable] = {}

    checks.extend(check_special_functions())

    corpus = build_corpus(config.seed, max(config.corpus_size, config.inequality_instances))
    rows = corpus_rows(corpus[: config.corpus_size], config)
    tables["corpus"] = CsvTable(CorpusRow.COLUMNS, [r.to_row() for r in rows])
    checks.extend(check_corpus(rows, tau))

    tables["slacks"] = slack_table(inequality_instances(corpus, config), config)
    checks.extend(check_inequalities(_records(tables["slacks"]), tau))
    checks.extend(worked_example_checks())

    tables["sweep"] = sweep_table(config, config.sweep_depths)
    checks.extend(check_sweep(tables["sweep"], tau))

    tables["negative_control"] = negative_control_table(config.negative_control_depths)
    checks.extend(check_negative_control(tables["negative_control"]))

    checks.extend(check_oracle(config))
    checks.extend(check_determinism(config, tables))

    report = RunReport(
        command="report",
        config=config.model_dump(),
        checks=checks,
        duration_s=time.perf_counter() - start,
        tables=tables,
    )
    logger.info(report.summary())
    return report


__all__ = [
    "CORPUS_PS",
    "build_corpus",
    "CorpusRow",
    "corpus_row",
    "corpus_rows",
    "check_special_functions",
    "check_corpus",
    "worked_example_checks",
    "check_inequalities",
    "sweep_table",
    "check_sweep",
    "negative_control_table",
    "check_negative_control",
    "check_oracle",
    "check_determinism",
    "run_full_suite",
]
