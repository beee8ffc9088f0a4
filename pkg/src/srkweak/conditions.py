"""Weak order conditions: generation, scheme verification, and the
independent concrete-index oracle.

A condition couples one all-distinct-index tree class with one correlation
pattern among its stochastic indices.  Its two sides are the exact-solution
coefficient ``alpha_star / (2**(s/2) * rho!)`` of the correlated class and
the scheme-side value ``alpha_delta * beta * gamma * E(Phi) / (l-1)!``
where ``Phi`` is the elementary weight.  Both sides are multiples of
``h**rho``; a scheme of weak order ``p`` must match them for every tree of
order at most ``p + 1/2`` and every realizable correlation, with residual
components beyond ``h**(p+1/2)`` immaterial to the order statement.

Verification is exact rational arithmetic throughout.  The concrete-index
oracle bypasses the correlation-counting coefficient entirely: it compares
accumulated coefficients tree by tree over all concrete index assignments,
and must reach the same verdict as pattern mode.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from math import factorial

from .exact import HalfPowerPoly
from .rvmodel import check_moment_condition, expect
from .tableau import DRIFT_SLOT, InstantiatedTableau, Tableau, instantiate, phi_s
from .trees import (
    CorrelationPattern,
    Tree,
    canonical_concrete,
    correlate,
    correlated_star_alphas,
    density,
    diff_count,
    enumerate_ts_delta,
    enumerate_ts_star,
    format_tree,
    index_classes,
    node_count,
    rho_halves,
    set_partitions,
    _merge_indices,
    _key,
)

__all__ = [
    "OrderCondition",
    "ConditionRecord",
    "VerificationReport",
    "ConcreteRecord",
    "ConcreteReport",
    "generate_conditions",
    "verify_tableau",
    "concrete_coefficient_check",
]


@dataclass(frozen=True)
class OrderCondition:
    """One (tree class, correlation pattern) instance of the order identity."""

    delta_tree: Tree
    pattern: CorrelationPattern
    correlated_tree: Tree
    calculus: str
    alpha_star: int
    alpha_delta: int
    beta: int
    gamma_density: int
    lhs: Fraction
    rhs_factor: Fraction

    @property
    def homogeneous(self) -> bool:
        return self.alpha_star == 0

    @property
    def rho_hv(self) -> int:
        return rho_halves(self.delta_tree)

    def target(self) -> HalfPowerPoly:
        """Value ``E(Phi)`` must take: ``lhs/rhs_factor * h**rho`` (0 if homogeneous)."""
        if self.homogeneous:
            return HalfPowerPoly.zero()
        return HalfPowerPoly.h_power(self.rho_hv, self.lhs / self.rhs_factor)

    def concrete_tree(self, m: int) -> Tree:
        """Representative with block ``i`` assigned the concrete index ``i``."""
        if self.pattern.n_blocks() > m:
            raise ValueError("pattern needs more noise components than available")
        target = {}
        for rep, block in enumerate(self.pattern.blocks, start=1):
            for v in block:
                target[v] = rep
        return canonical_concrete(_merge_indices(self.delta_tree, target))


def generate_conditions(calculus: str, p: int, m: int) -> list[OrderCondition]:
    """All order-``p`` conditions for noise dimension ``m``.

    Iterates tree classes of order up to ``p + 1/2`` and every correlation
    pattern with at most ``m`` blocks.  The exact-side cardinality of a
    correlated class sums the cardinalities of all (class, pair-partition)
    combinations that merge onto it; patterns whose correlated class is
    unreachable by the growth rules yield homogeneous conditions.
    """
    if p < 1 or m < 1:
        raise ValueError("order and noise dimension must be at least 1")
    alphas = correlated_star_alphas(calculus, Fraction(2 * p + 1, 2))
    out = []
    for row in enumerate_ts_delta(Fraction(2 * p + 1, 2)):
        u = row.tree
        ids = index_classes(u)
        s = diff_count(u)
        l = node_count(u)
        gamma = density(u)
        rho_hv = rho_halves(u)
        merges: dict[Tree, int] = {}
        patterns = []
        for blocks in set_partitions(ids):
            pat = CorrelationPattern.from_blocks(blocks)
            merged = correlate(u, pat)
            merges[merged] = merges.get(merged, 0) + 1
            patterns.append((pat, merged))
        for pat, merged in patterns:
            if not pat.realizable(m):
                continue
            alpha_star = alphas.get(merged, 0)
            beta = merges[merged] if alpha_star > 0 else 1
            if alpha_star > 0:
                if rho_hv % 2:
                    raise AssertionError("reachable classes must have integer order")
                lhs = Fraction(alpha_star, 2 ** (s // 2) * factorial(rho_hv // 2))
            else:
                lhs = Fraction(0)
            rhs_factor = Fraction(row.alpha_delta * beta * gamma, factorial(l - 1))
            out.append(
                OrderCondition(
                    delta_tree=u,
                    pattern=pat,
                    correlated_tree=merged,
                    calculus=calculus,
                    alpha_star=alpha_star,
                    alpha_delta=row.alpha_delta,
                    beta=beta,
                    gamma_density=gamma,
                    lhs=lhs,
                    rhs_factor=rhs_factor,
                )
            )
    out.sort(key=lambda c: (c.rho_hv, _key(c.delta_tree, None), c.pattern.blocks))
    return out


# ---------------------------------------------------------------------------
# Pattern-mode verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionRecord:
    """Evaluated condition: exact sides, residual, verdict."""

    condition: OrderCondition
    rhs: HalfPowerPoly
    residual: HalfPowerPoly
    satisfied: bool

    def satisfied_at(self, order: int) -> bool:
        if self.condition.rho_hv > 2 * order + 1:
            return True
        return self.residual.truncate_h(2 * order + 1).is_zero()


@dataclass(frozen=True)
class VerificationReport:
    """Condition records plus the driver-variable side checks."""

    scheme: str
    calculus: str
    order: int
    m: int
    records: tuple[ConditionRecord, ...]
    moment_condition_ok: bool
    mean_zero_rows: tuple[tuple[str, bool], ...]

    @property
    def conditions_ok(self) -> bool:
        return all(r.satisfied for r in self.records)

    @property
    def passed(self) -> bool:
        return (
            self.conditions_ok
            and self.moment_condition_ok
            and all(ok for _, ok in self.mean_zero_rows)
        )

    def violations(self) -> list[ConditionRecord]:
        return [r for r in self.records if not r.satisfied]

    def max_order_passed(self) -> int:
        best = 0
        for q in range(1, self.order + 1):
            if all(r.satisfied_at(q) for r in self.records):
                best = q
            else:
                break
        return best

    def first_failure(self) -> "ConditionRecord | None":
        for r in self.records:
            if not r.satisfied:
                return r
        return None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rho", "tree", "pattern", "alpha_star", "alpha_delta", "beta",
                    "gamma", "lhs", "rhs", "residual", "satisfied"])
        for r in self.records:
            c = r.condition
            w.writerow([
                _rho_str(c.rho_hv),
                format_tree(c.correlated_tree),
                str(c.pattern),
                c.alpha_star,
                c.alpha_delta,
                c.beta,
                c.gamma_density,
                f"{c.lhs}*h^{_rho_str(c.rho_hv)}" if c.lhs else "0",
                str(r.rhs),
                str(r.residual),
                "yes" if r.satisfied else "no",
            ])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [
            f"scheme {self.scheme}  calculus {self.calculus}  order {self.order}  m {self.m}",
            f"conditions: {len(self.records)}  satisfied: "
            f"{sum(r.satisfied for r in self.records)}  "
            f"moment condition: {'ok' if self.moment_condition_ok else 'VIOLATED'}  "
            f"mean-zero increments: "
            f"{'ok' if all(ok for _, ok in self.mean_zero_rows) else 'VIOLATED'}",
            f"max order passed: {self.max_order_passed()}",
        ]
        for r in self.violations():
            c = r.condition
            lines.append(
                f"  VIOLATED rho={_rho_str(c.rho_hv)} tree={format_tree(c.correlated_tree)} "
                f"pattern=[{c.pattern}] residual={r.residual}"
            )
        return "\n".join(lines) + "\n"


def _rho_str(halves: int) -> str:
    return str(halves // 2) if halves % 2 == 0 else f"{halves / 2:.1f}"


def evaluate_condition(
    cond: OrderCondition, itab: InstantiatedTableau, p: int
) -> ConditionRecord:
    conc = cond.concrete_tree(itab.m)
    weight = phi_s(conc, itab)
    rhs = cond.rhs_factor * expect(weight.expr, itab.model)
    residual = rhs - HalfPowerPoly.h_power(cond.rho_hv, cond.lhs)
    satisfied = residual.truncate_h(2 * p + 1).is_zero()
    return ConditionRecord(cond, rhs, residual, satisfied)


def verify_tableau(
    tableau: Tableau, p: int, m: int, calculus: "str | None" = None
) -> VerificationReport:
    """Evaluate every order-``p`` condition for the scheme, exactly.

    Also checks the driver moment condition up to total power ``2p + 2``
    and that every stochastic increment vector has mean zero (the
    bounded-moments requirement).
    """
    calculus = calculus or tableau.calculus
    itab = instantiate(tableau, m)
    conditions = generate_conditions(calculus, p, m)
    records = tuple(evaluate_condition(c, itab, p) for c in conditions)
    moments = check_moment_condition(itab.model, 2 * p + 2)
    mean_zero = []
    for slot in itab.slots:
        if slot == DRIFT_SLOT:
            continue
        value = expect(itab.z_dot_e(slot), itab.model)
        mean_zero.append((f"z{slot}", value.is_zero()))
    return VerificationReport(
        scheme=tableau.name,
        calculus=calculus,
        order=p,
        m=m,
        records=records,
        moment_condition_ok=moments.passed,
        mean_zero_rows=tuple(mean_zero),
    )


# ---------------------------------------------------------------------------
# Concrete-index oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConcreteRecord:
    tree: Tree
    exact_coeff: Fraction
    method_value: HalfPowerPoly
    residual: HalfPowerPoly
    satisfied: bool


@dataclass(frozen=True)
class ConcreteReport:
    scheme: str
    calculus: str
    order: int
    m: int
    records: tuple[ConcreteRecord, ...]

    @property
    def passed(self) -> bool:
        return all(r.satisfied for r in self.records)

    def violations(self) -> list[ConcreteRecord]:
        return [r for r in self.records if not r.satisfied]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rho", "tree", "exact_coeff", "method_value", "residual", "satisfied"])
        for r in self.records:
            w.writerow([
                _rho_str(rho_halves(r.tree)),
                format_tree(r.tree, concrete=True),
                str(r.exact_coeff),
                str(r.method_value),
                str(r.residual),
                "yes" if r.satisfied else "no",
            ])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [
            f"scheme {self.scheme}  calculus {self.calculus}  order {self.order}  m {self.m} "
            f"(concrete-index oracle)",
            f"concrete trees: {len(self.records)}  satisfied: "
            f"{sum(r.satisfied for r in self.records)}",
        ]
        for r in self.violations():
            lines.append(
                f"  VIOLATED tree={format_tree(r.tree, concrete=True)} residual={r.residual}"
            )
        return "\n".join(lines) + "\n"


def _concrete_assignments(tree: Tree, m: int):
    ids = index_classes(tree)
    for values in product(range(1, m + 1), repeat=len(ids)):
        target = dict(zip(ids, values))
        yield canonical_concrete(_merge_indices(tree, target))


def concrete_coefficient_check(
    tableau: Tableau, p: int, m: int, calculus: "str | None" = None
) -> ConcreteReport:
    """Independent oracle: match coefficients tree by tree over concrete indices.

    For every concrete-index tree of order up to ``p + 1/2``, the exact-side
    coefficient accumulates the growth-rule cardinalities over all index
    assignments landing on that tree, and the scheme side accumulates
    ``alpha_delta * gamma / (l-1)!`` multiplicities times the elementary
    weight's expectation.  No correlation-counting coefficient enters.
    """
    calculus = calculus or tableau.calculus
    itab = instantiate(tableau, m)
    max_rho = Fraction(2 * p + 1, 2)

    exact_coeff: dict[Tree, Fraction] = {}
    for row in enumerate_ts_star(calculus, max_rho):
        alpha = row.alpha_ito if calculus == "ito" else row.alpha_strat
        if alpha == 0:
            continue
        s = diff_count(row.tree)
        rho_hv = rho_halves(row.tree)
        coeff = Fraction(alpha, 2 ** (s // 2) * factorial(rho_hv // 2))
        for conc in _concrete_assignments(row.tree, m):
            exact_coeff[conc] = exact_coeff.get(conc, Fraction(0)) + coeff

    method_mult: dict[Tree, Fraction] = {}
    for row in enumerate_ts_delta(max_rho):
        u = row.tree
        coeff = Fraction(row.alpha_delta * density(u), factorial(node_count(u) - 1))
        for conc in _concrete_assignments(u, m):
            method_mult[conc] = method_mult.get(conc, Fraction(0)) + coeff

    records = []
    for conc in sorted(set(exact_coeff) | set(method_mult), key=lambda t: (rho_halves(t), _key(t, None))):
        weight = phi_s(conc, itab)
        method_value = method_mult.get(conc, Fraction(0)) * expect(weight.expr, itab.model)
        lhs = exact_coeff.get(conc, Fraction(0))
        residual = method_value - HalfPowerPoly.h_power(rho_halves(conc), lhs)
        satisfied = residual.truncate_h(2 * p + 1).is_zero()
        records.append(ConcreteRecord(conc, lhs, method_value, residual, satisfied))
    return ConcreteReport(tableau.name, calculus, p, m, tuple(records))
