"""Elementary differentials and the truncated expansion of the exact solution.

A concrete-index tree encodes a nested multilinear derivative expression of
the functional, the drift, and the diffusion columns.  Summing these over
the reachable tree classes with their cardinalities yields the expectation
of a functional of the exact solution through a chosen order; the remainder
scales one full power of the time increment higher, which is the testable
signature of the expansion.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import product
from math import factorial

import numpy as np

from .problems import Functional, SdeProblem
from .trees import (
    DIFF,
    DRIFT,
    ROOT,
    Tree,
    _merge_indices,
    canonical_concrete,
    diff_count,
    enumerate_ts_star,
    index_classes,
    rho_halves,
)

__all__ = ["elementary_differential", "truncated_expectation", "expansion_error_slope"]


def _require_oracles(problem: SdeProblem) -> None:
    if problem.drift_deriv is None or problem.diffusion_deriv is None:
        raise ValueError(
            f"problem {problem.name!r} carries no derivative evaluators; "
            "series expansion needs them"
        )


def elementary_differential(tree: Tree, problem: SdeProblem, functional: Functional, x):
    """Evaluate the tree's nested derivative expression at ``x``.

    Root-kind trees produce a scalar (the functional is outermost); trees
    rooted at drift or stochastic nodes produce a d-vector.  Stochastic
    nodes must carry concrete indices in ``1..m``.
    """
    _require_oracles(problem)
    x = np.asarray(x, dtype=float)

    def ev(node: Tree):
        dirs = tuple(ev(c) for c in node.children)
        order = len(dirs)
        if node.kind == ROOT:
            return functional.deriv(order, x, dirs)
        if node.kind == DRIFT:
            return np.asarray(problem.drift_deriv(order, x, dirs), dtype=float)
        if not 1 <= node.index <= problem.m:
            raise ValueError(f"stochastic index {node.index} outside 1..{problem.m}")
        return np.asarray(problem.diffusion_deriv(node.index, order, x, dirs), dtype=float)

    return ev(tree)


def truncated_expectation(
    problem: SdeProblem,
    functional: Functional,
    x0,
    dt: float,
    p: int,
    calculus: "str | None" = None,
) -> float:
    """Expansion of ``E f(X(dt))`` through order ``p`` in the time increment.

    Sums ``alpha * F(tree)(x0) * dt**rho / (2**(s/2) * rho!)`` over the
    growth-rule classes of the problem's calculus with order at most ``p``
    and over all concrete index assignments.  The drift evaluator is the
    problem's own; for the stratonovich calculus the stratonovich tree
    family compensates, so no drift modification enters here.
    """
    _require_oracles(problem)
    if dt < 0:
        raise ValueError("the time increment must be nonnegative")
    calculus = calculus or problem.calculus
    x0 = np.asarray(x0, dtype=float)
    total = 0.0
    for row in enumerate_ts_star(calculus, p):
        alpha = row.alpha_ito if calculus == "ito" else row.alpha_strat
        if alpha == 0:
            continue
        tree = row.tree
        s = diff_count(tree)
        rho = rho_halves(tree) // 2
        weight = Fraction(alpha, 2 ** (s // 2) * factorial(rho))
        ids = index_classes(tree)
        tree_sum = 0.0
        for values in product(range(1, problem.m + 1), repeat=len(ids)):
            conc = canonical_concrete(_merge_indices(tree, dict(zip(ids, values))))
            tree_sum += elementary_differential(conc, problem, functional, x0)
        total += float(weight) * tree_sum * dt**rho
    return total


def expansion_error_slope(
    problem: SdeProblem,
    functional: Functional,
    p: int,
    dt_grid,
    calculus: "str | None" = None,
) -> tuple[float, list[tuple[float, float, float]]]:
    """Log-log slope of |truncated - exact| against the closed-form moment.

    Returns the fitted slope and per-increment rows (dt, truncated, error).
    The exact moment comes from the problem's closed forms; the slope should
    sit near ``p + 1`` for a correct truncation.
    """
    if functional.name not in problem.exact_moments:
        raise ValueError(f"problem {problem.name!r} has no exact moment for {functional.name!r}")
    exact = problem.exact_moments[functional.name]
    rows = []
    for dt in dt_grid:
        approx = truncated_expectation(problem, functional, problem.x0, dt, p, calculus)
        err = abs(approx - float(exact(dt)))
        rows.append((float(dt), approx, err))
    usable = [(dt, err) for dt, _, err in rows if err > 0]
    if len(usable) < 2:
        raise ValueError("degenerate error grid: cannot fit a slope")
    logs = np.log([dt for dt, _ in usable]), np.log([err for _, err in usable])
    slope = float(np.polyfit(logs[0], logs[1], 1)[0])
    return slope, rows
