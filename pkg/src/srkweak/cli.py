"""Command-line interface.

Subcommands mirror the library layers: tree-family enumeration, order
condition generation and scheme verification (pattern mode and the
concrete-index oracle), exact-expansion error checks, Monte Carlo weak
convergence studies, and scheme-file inspection.  Outputs are UTF-8 CSV or
aligned text; identical invocations with identical seeds produce
byte-identical files regardless of thread count.

Exit codes: 0 success / all conditions satisfied; 1 verification found
violations or a study was inconclusive (an expected outcome class, not an
error); 2 usage error; 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import conditions as _conditions
from . import expansion as _expansion
from . import problems as _problems
from . import simulate as _simulate
from . import tableau as _tableau
from . import trees as _trees

__all__ = ["main", "run"]


class UsageError(Exception):
    pass


def _write_out(text: str, out: "str | None") -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _parse_order(text: str) -> Fraction:
    try:
        value = Fraction(text)
    except ValueError as exc:
        raise UsageError(f"bad order {text!r}: {exc}") from exc
    if value < 0 or (2 * value).denominator != 1:
        raise UsageError(f"order must be a nonnegative half-integer, got {text!r}")
    return value


def _load_scheme(name: str) -> _tableau.Tableau:
    try:
        return _tableau.load_scheme(name)
    except (_tableau.TableauError, OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot load scheme {name!r}: {exc}") from exc


def _load_problem(name: str) -> _problems.SdeProblem:
    path = Path(name)
    try:
        if path.suffix == ".json":
            if not path.exists():
                raise UsageError(f"problem file {name!r} does not exist")
            spec = json.loads(path.read_text())
            return _problems.builtin_problem(spec)
        return _problems.builtin_problem(name)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"cannot resolve problem {name!r}: {exc}") from exc


def _get_functional(fid: str) -> _problems.Functional:
    if fid not in _problems.FUNCTIONALS:
        raise UsageError(
            f"unknown functional {fid!r}; available: {sorted(_problems.FUNCTIONALS)}"
        )
    return _problems.FUNCTIONALS[fid]


def _float_list(text: str, flag: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise UsageError(f"bad {flag} value {text!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------


def _cmd_trees_enumerate(args) -> int:
    max_rho = _parse_order(args.max_order)
    if args.set == "delta":
        rows = _trees.enumerate_ts_delta(max_rho)
        lines = ["rho,tree,alpha_delta"]
        for e in rows:
            lines.append(f"{_rho_text(e.tree)},{_trees.format_tree(e.tree)},{e.alpha_delta}")
    else:
        rows = _trees.enumerate_ts_star(args.set, max_rho)
        lines = ["rho,tree,alpha_ito,alpha_strat"]
        for e in rows:
            lines.append(
                f"{_rho_text(e.tree)},{_trees.format_tree(e.tree)},{e.alpha_ito},{e.alpha_strat}"
            )
    _write_out("\n".join(lines) + "\n", args.out)
    return 0


def _rho_text(tree) -> str:
    hv = _trees.rho_halves(tree)
    return str(hv // 2) if hv % 2 == 0 else f"{hv / 2:.1f}"


def _cmd_conditions_generate(args) -> int:
    conds = _conditions.generate_conditions(args.calculus, args.order, args.m)
    lines = ["rho,tree,pattern,alpha_star,alpha_delta,beta,gamma,lhs,target"]
    for c in conds:
        lines.append(
            ",".join(
                [
                    _rho_text(c.delta_tree),
                    _trees.format_tree(c.correlated_tree),
                    str(c.pattern),
                    str(c.alpha_star),
                    str(c.alpha_delta),
                    str(c.beta),
                    str(c.gamma_density),
                    str(c.lhs),
                    str(c.target()),
                ]
            )
        )
    _write_out("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_conditions_verify(args) -> int:
    tab = _load_scheme(args.scheme)
    report = _conditions.verify_tableau(tab, args.order, args.m, calculus=args.calculus)
    _write_out(report.to_csv() if args.csv else report.to_text(), args.out)
    return 0 if report.passed else 1


def _cmd_conditions_oracle(args) -> int:
    tab = _load_scheme(args.scheme)
    report = _conditions.concrete_coefficient_check(
        tab, args.order, args.m, calculus=args.calculus
    )
    _write_out(report.to_csv() if args.csv else report.to_text(), args.out)
    return 0 if report.passed else 1


def _cmd_expand_exact(args) -> int:
    problem = _load_problem(args.problem)
    functional = _get_functional(args.f)
    grid = _float_list(args.dt_grid, "--dt-grid")
    if not grid:
        raise UsageError("--dt-grid needs at least one increment")
    slope, rows = _expansion.expansion_error_slope(problem, functional, args.order, grid)
    lines = ["dt,truncated,exact,error"]
    exact_fn = problem.exact_moments[functional.name]
    for dt, approx, err in rows:
        lines.append(f"{dt:.10g},{approx:.12g},{float(exact_fn(dt)):.12g},{err:.6g}")
    lines.append(f"# log-log error slope: {slope:.4f}")
    _write_out("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_simulate_convergence(args) -> int:
    problem = _load_problem(args.problem)
    functional = _get_functional(args.f)
    tab = _load_scheme(args.scheme)
    if args.steps:
        counts = [int(tok) for tok in args.steps.split(",") if tok.strip()]
        if any(c < 1 for c in counts):
            raise UsageError("--steps entries must be positive step counts")
        step_sizes = [args.T / c for c in counts]
    elif args.h_grid:
        step_sizes = _float_list(args.h_grid, "--h-grid")
    else:
        step_sizes = [args.T * 2.0**-k for k in range(1, 6)]
    report = _simulate.convergence_study(
        problem,
        tab,
        functional,
        T=args.T,
        step_sizes=step_sizes,
        n_samples=args.samples,
        seed=args.seed,
        chunk_size=args.chunk_size,
        workers=args.threads,
    )
    _write_out(report.to_csv() if args.csv else report.to_text(), args.out)
    return 0 if report.status == "ok" else 1


def _cmd_scheme_show(args) -> int:
    tab = _load_scheme(args.scheme)
    lines = [
        f"name: {tab.name}",
        f"calculus: {tab.calculus}",
        f"stages: {tab.stages}",
        f"claimed order: {tab.claimed_order}",
        f"explicit: {tab.explicit}",
        "",
        tab.to_json(),
    ]
    _write_out("\n".join(lines) + "\n", args.out)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srkweak",
        description="Rooted-tree order conditions and weak-convergence tooling "
        "for stochastic Runge-Kutta schemes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_trees = sub.add_parser("trees", help="tree-family tables")
    trees_sub = p_trees.add_subparsers(dest="subcommand", required=True)
    p_enum = trees_sub.add_parser("enumerate", help="enumerate a tree family as CSV")
    p_enum.add_argument("--set", choices=["delta", "ito", "strat"], required=True)
    p_enum.add_argument("--max-order", required=True, help="half-integer bound, e.g. 2.5")
    p_enum.add_argument("--out")
    p_enum.set_defaults(func=_cmd_trees_enumerate)

    p_cond = sub.add_parser("conditions", help="order conditions")
    cond_sub = p_cond.add_subparsers(dest="subcommand", required=True)

    p_gen = cond_sub.add_parser("generate", help="emit the condition set as CSV")
    p_gen.add_argument("--calculus", choices=["ito", "strat"], required=True)
    p_gen.add_argument("--order", type=int, required=True)
    p_gen.add_argument("--m", type=int, required=True)
    p_gen.add_argument("--out")
    p_gen.set_defaults(func=_cmd_conditions_generate)

    for name, fn, help_text in [
        ("verify", _cmd_conditions_verify, "verify a scheme against the condition set"),
        ("oracle", _cmd_conditions_oracle, "concrete-index coefficient oracle"),
    ]:
        p = cond_sub.add_parser(name, help=help_text)
        p.add_argument("--scheme", required=True)
        p.add_argument("--calculus", choices=["ito", "strat"], default=None)
        p.add_argument("--order", type=int, required=True)
        p.add_argument("--m", type=int, required=True)
        p.add_argument("--csv", action="store_true", help="CSV instead of text")
        p.add_argument("--out")
        p.set_defaults(func=fn)

    p_expand = sub.add_parser("expand", help="exact-solution expansion checks")
    expand_sub = p_expand.add_subparsers(dest="subcommand", required=True)
    p_exact = expand_sub.add_parser("exact", help="truncation error against closed forms")
    p_exact.add_argument("--problem", required=True)
    p_exact.add_argument("--f", required=True)
    p_exact.add_argument("--order", type=int, required=True)
    p_exact.add_argument("--dt-grid", required=True, help="comma-separated increments")
    p_exact.add_argument("--out")
    p_exact.set_defaults(func=_cmd_expand_exact)

    p_sim = sub.add_parser("simulate", help="Monte Carlo studies")
    sim_sub = p_sim.add_subparsers(dest="subcommand", required=True)
    p_conv = sim_sub.add_parser("convergence", help="weak-order convergence study")
    p_conv.add_argument("--scheme", required=True)
    p_conv.add_argument("--problem", required=True)
    p_conv.add_argument("--f", required=True)
    p_conv.add_argument("--T", type=float, default=1.0)
    p_conv.add_argument("--steps", help="comma-separated step counts, e.g. 2,4,8,16")
    p_conv.add_argument("--h-grid", help="comma-separated step sizes (alternative)")
    p_conv.add_argument("--samples", type=int, default=1_000_000)
    p_conv.add_argument("--seed", type=int, default=0)
    p_conv.add_argument("--threads", type=int, default=1)
    p_conv.add_argument("--chunk-size", type=int, default=_simulate.DEFAULT_CHUNK_SIZE)
    p_conv.add_argument("--csv", action="store_true")
    p_conv.add_argument("--out")
    p_conv.set_defaults(func=_cmd_simulate_convergence)

    p_scheme = sub.add_parser("scheme", help="scheme files")
    scheme_sub = p_scheme.add_subparsers(dest="subcommand", required=True)
    p_show = scheme_sub.add_parser("show", help="print a scheme description")
    p_show.add_argument("--scheme", required=True)
    p_show.add_argument("--out")
    p_show.set_defaults(func=_cmd_scheme_show)

    return parser


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - boundary: report and signal failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run())
