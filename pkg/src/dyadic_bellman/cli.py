"""Command-line front end: ``dyadic-lab <command> [flags]``.

Exit codes: 0 when every check passes, 1 when a check fails, 2 for usage
errors (bad flags, malformed files, domain violations).
"""

from __future__ import annotations
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence
import argparse
import logging
import sys
import time

import yaml

from .bellman_fn import bellman_value, beta_log_grid, check_p, omega_p
from .config import LabConfig
from .errors import LabError
from .extremal_search import (
    OptimizeConfig,
    SweepRow,
    depth_sweep,
    eigen_residual,
    search,
    zero_mass_diagnostics,
)
from .g_construction import build_g, residual_split, sigma_phi, verify_g, zero_measure_of_g
from .linearization import linearize
from .maximal_op import (
    check_bellman_bound,
    check_lp_bound,
    check_weak_type,
    maximal_function,
    weak_type_levels,
)
from .parsing import parse_depth_range, parse_node_list
from .reports import CheckResult, CsvTable, RunReport, format_cell
from .sharp_inequalities import (
    SWEEP_BETAS,
    SlackRecord,
    complete_to_maximal,
    instance_records,
    is_maximal_family,
    min_slacks,
    verify_310,
    verify_cor31,
    verify_thm31,
    verify_thm32,
)
from .stepfn import load_function, moments, store_function
from .suite import run_full_suite
from .version import LAB_VERSION

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
MODES = {"ring": "ring", "full": "full_leaf"}


def configure_logging(verbose: bool, log_file: Optional[str] = None) -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


def _emit(table: CsvTable, name: str, args: argparse.Namespace, config: LabConfig) -> None:
    """Write a table under --out, or print it to stdout."""
    command = " ".join(args.argv)
    if args.out_dir:
        path = table.write(Path(args.out_dir) / f"{name}.csv", command, config.digest())
        print(f"wrote {path}")
    else:
        sys.stdout.write(table.render(command, config.digest()))


def _finish(report: RunReport, args: argparse.Namespace, config: LabConfig) -> int:
    for name, table in sorted(report.tables.items()):
        _emit(table, name, args, config)
    print(report.summary())
    for check in report.failures():
        print(f"  failed: {check.name} = {format_cell(check.value)} {check.detail}".rstrip())
    return report.exit_code


# Commands


def cmd_omega(args, config: LabConfig) -> int:
    print(format_cell(omega_p(args.p, args.x, config.tolerances.tau_root)))
    return 0


def cmd_bound(args, config: LabConfig) -> int:
    print(format_cell(bellman_value(args.p, args.f, args.F, config.tolerances.tau_num)))
    return 0


def cmd_maximal(args, config: LabConfig) -> int:
    phi = load_function(args.fn)
    p = args.p if args.p is not None else config.default_p
    result = maximal_function(phi)
    if args.lam is not None:
        weak = check_weak_type(phi, args.lam, result)
    else:
        weak = min((check_weak_type(phi, lam, result) for lam in weak_type_levels(phi, result)),
                   default=0.0)
    slacks = {
        "weak_type": weak,
        "lp_bound": check_lp_bound(phi, p, result),
        "bellman_bound": check_bellman_bound(phi, p, result),
    }
    doc = {
        "p": p,
        "leaves": [
            {"leaf": int(leaf), "phi": float(v), "mphi": float(m), "argmax": int(a)}
            for leaf, v, m, a in zip(phi.tree.leaves, phi.values, result.mphi.values,
                                     result.argmax_node)
        ],
        "slacks": slacks,
    }
    sys.stdout.write(yaml.safe_dump(doc, default_flow_style=None, sort_keys=False))
    tau = config.tolerances.tau_num
    return 0 if all(v >= -tau * max(1.0, abs(v)) for v in slacks.values()) else 1


LINEARIZE_COLUMNS = ("node", "a_I", "y_I", "x_I", "star")


def cmd_linearize(args, config: LabConfig) -> int:
    phi = load_function(args.fn)
    lin = linearize(phi, args.p)
    rows = [(int(i), lin.a_I[i], lin.y_I[i], lin.x_I[i], lin.star.get(i)) for i in lin.s_phi]
    _emit(CsvTable(LINEARIZE_COLUMNS, rows), "linearize", args, config)
    return 0


def _family_records(phi, p: float, members: Sequence[int], betas: Sequence[float]) -> List[SlackRecord]:
    lin = linearize(phi, p)
    records = []
    maximal = is_maximal_family(lin, members)
    n = len(members)
    for beta in betas:
        if maximal:
            records.append(SlackRecord(0, "thm31", beta, verify_thm31(phi, p, lin, members, beta), n))
        s32 = verify_thm32(phi, p, lin, members, beta)
        c31 = verify_cor31(phi, p, lin, members, beta)
        s310 = verify_310(phi, p, beta, lin)
        records.extend([
            SlackRecord(0, "thm32", beta, s32, n),
            SlackRecord(0, "cor31", beta, c31, n),
            SlackRecord(0, "310", beta, s310, 0),
            SlackRecord(0, "additivity", beta, s32 + c31 - s310, n),
        ])
    return records


def cmd_verify(args, config: LabConfig) -> int:
    start = time.perf_counter()
    phi = load_function(args.fn)
    p = check_p(args.p)
    if args.beta is not None:
        betas = [args.beta]
    elif args.beta_grid:
        betas = [float(b) for b in beta_log_grid()]
    else:
        betas = list(SWEEP_BETAS)

    if args.family is not None:
        records = _family_records(phi, p, parse_node_list(args.family), betas)
    elif args.random is not None:
        seed = config.seed if args.seed is None else args.seed
        records = [r for i in range(args.random) for r in instance_records(i, phi, p, seed, betas)]
    else:
        members = complete_to_maximal(linearize(phi, p), [])
        records = _family_records(phi, p, members, betas)

    tau = config.tolerances.tau_num
    checks = []
    for name, value in sorted(min_slacks(records).items()):
        checks.append(CheckResult(f"min_{name}", value >= -tau, value))
    report = RunReport(
        command=" ".join(args.argv),
        config=config.model_dump(),
        checks=checks,
        duration_s=time.perf_counter() - start,
        tables={"verify": CsvTable(SlackRecord.COLUMNS, [r.to_row() for r in records])},
    )
    return _finish(report, args, config)


def _optimize_config(args, config: LabConfig, depth: int) -> OptimizeConfig:
    return OptimizeConfig(
        depth=depth,
        restarts=args.restarts if args.restarts is not None else config.sweep_restarts,
        max_steps=config.max_steps,
        seed=config.seed if args.seed is None else args.seed,
        mode=MODES[args.mode],
        threads=config.threads,
    )


def cmd_optimize(args, config: LabConfig) -> int:
    result = search(args.p, args.f, args.F, _optimize_config(args, config, args.depth))
    if args.out_file:
        store_function(result.phi, args.out_file)
        logger.info("Stored best candidate in %s", args.out_file)
    print(f"attained {format_cell(result.attained)}")
    print(f"bound {format_cell(result.bound)}")
    print(f"gap {format_cell(result.bound - result.attained)}")
    return 0


def cmd_sweep(args, config: LabConfig) -> int:
    depths = parse_depth_range(args.depths)
    rows = depth_sweep(args.p, args.f, args.F, depths, _optimize_config(args, config, depths[0]))
    _emit(CsvTable(SweepRow.COLUMNS, [r.to_row() for r in rows]), "sweep", args, config)
    return 0


GPHI_COLUMNS = ("node", "c_I", "gamma_I", "a_I", "gamma_P_I", "stage2_feasible")


def cmd_gphi(args, config: LabConfig) -> int:
    phi = load_function(args.fn)
    lin = linearize(phi, args.p)
    tol = config.tolerances
    gphi = build_g(phi, args.p, lin, tol.tau_num, tol.tau_meas)
    p_map = zero_mass_diagnostics(phi, args.p, lin, R=1.0).p_map
    rows = [(int(r.node), r.c_I, r.gamma_I, r.a_I, r.gamma_I * p_map[int(r.node)], r.stage2_feasible)
            for r in (gphi.records[i] for i in lin.s_phi)]
    table = CsvTable(GPHI_COLUMNS, rows)
    if args.out_file:
        out = Path(args.out_file)
        store_function(gphi.g, out)
        table.write(out.with_suffix(".members.csv"), " ".join(args.argv), config.digest())
        print(f"wrote {out}")
    else:
        _emit(table, "gphi", args, config)
    if not gphi.all_feasible:
        print("stage 2 infeasible for some members; see stage2_feasible")
        return 0
    report = verify_g(phi, args.p, gphi, tol.tau_num)
    print(f"checks {'pass' if report.holds else 'fail'} (worst deviation {format_cell(report.worst)})")
    return 0 if report.holds else 1


def cmd_residual(args, config: LabConfig) -> int:
    phi = load_function(args.fn)
    lin = linearize(phi, args.p)
    gphi = build_g(phi, args.p, lin, config.tolerances.tau_num, config.tolerances.tau_meas)
    on_delta, off_delta = residual_split(gphi, args.p)
    doc = {
        "p": args.p,
        "eigen_residual": eigen_residual(phi, args.p),
        "g_residual_delta": on_delta,
        "g_residual_rest": off_delta,
        "g_zero_measure": zero_measure_of_g(gphi),
        "sigma_phi": sigma_phi(gphi, zero_mass_diagnostics(phi, args.p, lin, R=1.0).p_map),
        "f": moments(phi, args.p).f,
        "F": moments(phi, args.p).F,
    }
    sys.stdout.write(yaml.safe_dump(doc, default_flow_style=False, sort_keys=False))
    return 0


def cmd_report(args, config: LabConfig) -> int:
    report = run_full_suite(config)
    out_dir = Path(args.out_dir or config.output_dir)
    path = report.write(out_dir, config.digest())
    print(f"wrote {path}")
    print(report.summary())
    for check in report.failures():
        print(f"  failed: {check.name} = {format_cell(check.value)} {check.detail}".rstrip())
    return report.exit_code


COMMANDS: Dict[str, Callable[[argparse.Namespace, LabConfig], int]] = {
    "omega": cmd_omega,
    "bound": cmd_bound,
    "maximal": cmd_maximal,
    "linearize": cmd_linearize,
    "verify": cmd_verify,
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "gphi": cmd_gphi,
    "residual": cmd_residual,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyadic-lab",
        description="Maximal operators on measure trees and their Bellman function.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {LAB_VERSION}")
    parser.add_argument("--config", help="LabConfig YAML file")
    parser.add_argument("--out", dest="out_dir", help="directory for CSV output")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("--log-file", help="also log to this file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("omega", help="evaluate omega_p(x)")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--x", type=float, required=True)

    p = sub.add_parser("bound", help="Bellman value F*omega_p(f^p/F)^p")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--f", type=float, required=True)
    p.add_argument("--F", type=float, required=True)

    p = sub.add_parser("maximal", help="maximal function and classical slacks")
    p.add_argument("--fn", required=True)
    p.add_argument("--p", type=float)
    p.add_argument("--lambda", dest="lam", type=float)

    p = sub.add_parser("linearize", help="S_phi table")
    p.add_argument("--fn", required=True)
    p.add_argument("--p", type=float, required=True)

    p = sub.add_parser("verify", help="sharp inequality slacks")
    p.add_argument("--fn", required=True)
    p.add_argument("--p", type=float, required=True)
    betas = p.add_mutually_exclusive_group()
    betas.add_argument("--beta", type=float)
    betas.add_argument("--beta-grid", action="store_true")
    families = p.add_mutually_exclusive_group()
    families.add_argument("--family", help="comma-separated members of S_phi")
    families.add_argument("--random", type=int, help="number of random families")
    p.add_argument("--seed", type=int)

    for name, help_text in (("optimize", "search for a near-extremal function"),
                            ("sweep", "optimize across depths")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--p", type=float, required=True)
        p.add_argument("--f", type=float, required=True)
        p.add_argument("--F", type=float, required=True)
        if name == "optimize":
            p.add_argument("--depth", type=int, required=True)
            p.add_argument("--out", dest="out_file", help="function file for the best candidate")
        else:
            p.add_argument("--depths", required=True, help="e.g. 4:12, 4:12:2 or 4,6,8")
        p.add_argument("--mode", choices=sorted(MODES), default="ring")
        p.add_argument("--restarts", type=int)
        p.add_argument("--seed", type=int)

    p = sub.add_parser("gphi", help="construct g_phi")
    p.add_argument("--fn", required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--out", dest="out_file", help="function file for g")

    p = sub.add_parser("residual", help="eigen residual and the split of g_phi")
    p.add_argument("--fn", required=True)
    p.add_argument("--p", type=float, required=True)

    sub.add_parser("report", help="run the acceptance suite")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    args.argv = argv
    configure_logging(args.verbose, args.log_file)
    try:
        config = LabConfig.load(Path(args.config) if args.config else None)
        return COMMANDS[args.command](args, config)
    except (LabError, ValueError, OSError) as e:
        logger.debug("command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 2


__all__ = ["build_parser", "configure_logging", "main", "COMMANDS"]
