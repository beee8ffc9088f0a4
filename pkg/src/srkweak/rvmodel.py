"""Finite discrete random-variable models driving a stochastic Runge-Kutta step.

A model instantiates, for a given noise dimension ``m``, a family of mutually
independent primitive variables with finite support (atoms are exact numbers
of the form ``c * sqrt(r) * h**(q/2)``), derived symbols defined as
polynomials in the primitives, and the driver variables ``theta`` keyed by
multi-indices.  Expectations are exact; sampling is numeric and reproducible
from an explicit generator.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement, product
from typing import Iterable, Mapping

import numpy as np

from .exact import HalfPowerPoly, SqrtExt

__all__ = [
    "ModelError",
    "PrimitiveRV",
    "RandomVariableModel",
    "instantiate_model",
    "expect",
    "expect_brute_force",
    "check_moment_condition",
    "MomentConditionReport",
    "sample",
    "BUILTIN_MODELS",
]

MultiIndex = tuple  # tuple of ints; (0,) is the deterministic sqrt(h) driver


class ModelError(ValueError):
    """Unknown symbol, bad support, or malformed model description."""


@dataclass(frozen=True)
class PrimitiveRV:
    """Independent finite-support variable.

    Each support atom is ``(coeff, h_halves, prob)`` meaning the value
    ``coeff * h**(h_halves/2)`` is taken with probability ``prob``.
    """

    symbol: str
    support: tuple[tuple[SqrtExt, int, Fraction], ...]

    def __post_init__(self):
        total = Fraction(0)
        for _, halves, prob in self.support:
            if prob <= 0:
                raise ModelError(f"{self.symbol}: probabilities must be positive")
            if halves < 0:
                raise ModelError(f"{self.symbol}: negative h powers in support")
            total += prob
        if total != 1:
            raise ModelError(f"{self.symbol}: probabilities sum to {total}, not 1")

    def moment(self, power: int) -> dict[int, SqrtExt]:
        """Exact ``E(X**power)`` as a map ``h_halves -> coefficient``."""
        out: dict[int, SqrtExt] = {}
        for coeff, halves, prob in self.support:
            c = (coeff ** power) * prob
            key = halves * power
            acc = out.get(key)
            out[key] = c if acc is None else acc + c
        return {k: v for k, v in out.items() if not v.is_zero()}

    def numeric_atoms(self, h: float) -> tuple[np.ndarray, np.ndarray]:
        """(values, integer cumulative thresholds) over a common denominator."""
        denom = 1
        for _, _, prob in self.support:
            denom = denom * prob.denominator // _gcd(denom, prob.denominator)
        values = np.array(
            [float(c) * h ** (halves * 0.5) for c, halves, _ in self.support]
        )
        counts = [int(prob * denom) for _, _, prob in self.support]
        return values, np.cumsum(counts)


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


@dataclass(frozen=True)
class RandomVariableModel:
    """Instantiated model: primitives, derived symbols, and theta drivers.

    ``derived`` and ``theta`` polynomials are stored fully expanded over the
    primitive symbols.  Immutable; safe for concurrent use.
    """

    name: str
    m: int
    primitives: dict[str, PrimitiveRV]
    derived: dict[str, HalfPowerPoly]
    theta: dict[MultiIndex, HalfPowerPoly]

    def expand(self, poly: HalfPowerPoly) -> HalfPowerPoly:
        """Rewrite derived symbols in terms of primitives."""
        if any(sym in self.derived for sym in poly.symbols()):
            return poly.substitute(self.derived)
        return poly

    def theta_keys(self) -> list[MultiIndex]:
        return sorted(self.theta)


# ---------------------------------------------------------------------------
# Expectation
# ---------------------------------------------------------------------------


def _convolve(a: dict[int, SqrtExt], b: dict[int, SqrtExt]) -> dict[int, SqrtExt]:
    out: dict[int, SqrtExt] = {}
    for ha, ca in a.items():
        for hb, cb in b.items():
            key = ha + hb
            c = ca * cb
            acc = out.get(key)
            out[key] = c if acc is None else acc + c
    return {k: v for k, v in out.items() if not v.is_zero()}


def expect(poly: HalfPowerPoly, model: RandomVariableModel) -> HalfPowerPoly:
    """Exact expectation using mutual independence of the primitives.

    Derived symbols are expanded first; each monomial then factors over
    distinct primitives whose powers are replaced by exact moments.
    """
    poly = model.expand(poly)
    terms: dict = {}
    for (halves, mono), coeff in poly.monomial_items():
        acc = {halves: coeff}
        for sym, p in mono:
            prim = model.primitives.get(sym)
            if prim is None:
                raise ModelError(f"unknown random-variable symbol {sym!r}")
            acc = _convolve(acc, prim.moment(p))
            if not acc:
                break
        for hh, c in acc.items():
            key = (hh, ())
            prev = terms.get(key)
            terms[key] = c if prev is None else prev + c
    return HalfPowerPoly(terms)


def expect_brute_force(poly: HalfPowerPoly, model: RandomVariableModel) -> HalfPowerPoly:
    """Expectation by full product-space enumeration (independent oracle).

    Only the primitives actually occurring in the expression enter the
    product space; the result is exact and must agree with :func:`expect`.
    """
    poly = model.expand(poly)
    symbols = sorted(poly.symbols())
    for sym in symbols:
        if sym not in model.primitives:
            raise ModelError(f"unknown random-variable symbol {sym!r}")
    supports = [model.primitives[sym].support for sym in symbols]
    terms: dict = {}
    for atoms in product(*supports):
        prob = Fraction(1)
        for _, _, p in atoms:
            prob *= p
        values = dict(zip(symbols, atoms))
        for (halves, mono), coeff in poly.monomial_items():
            c = coeff * prob
            hh = halves
            for sym, p in mono:
                v_coeff, v_halves, _ = values[sym]
                c = c * v_coeff ** p
                hh += v_halves * p
            key = (hh, ())
            prev = terms.get(key)
            terms[key] = c if prev is None else prev + c
    return HalfPowerPoly(terms)


# ---------------------------------------------------------------------------
# Moment condition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentConditionReport:
    """Lowest h-exponents of all driver monomials up to a total power."""

    rows: tuple[tuple[tuple[MultiIndex, ...], "int | None", int, bool], ...]
    passed: bool

    def failures(self):
        return [r for r in self.rows if not r[3]]


def check_moment_condition(
    model: RandomVariableModel, max_total_power: int
) -> MomentConditionReport:
    """Verify ``E(theta_{nu1}^p1 ... ) = O(h^{(p1+...)/2})`` for all monomials.

    Every multiset of driver indices with total power between 1 and
    ``max_total_power`` is checked; a monomial passes when the lowest
    h-half-power of its exact expectation is at least the total power
    (vacuously when the expectation vanishes).
    """
    if max_total_power < 1:
        raise ValueError("total power must be at least 1")
    keys = model.theta_keys()
    rows = []
    ok_all = True
    for degree in range(1, max_total_power + 1):
        for combo in combinations_with_replacement(keys, degree):
            poly = HalfPowerPoly.number(1)
            for nu in combo:
                poly = poly * model.theta[nu]
            value = expect(poly, model)
            low = value.min_h_halves()
            ok = low is None or low >= degree
            ok_all = ok_all and ok
            rows.append((combo, low, degree, ok))
    return MomentConditionReport(tuple(rows), ok_all)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample(
    model: RandomVariableModel,
    h: float,
    rng: np.random.Generator,
    size: "int | None" = None,
) -> dict[MultiIndex, np.ndarray]:
    """Draw one realization (or a batch) of all theta drivers.

    Primitives are drawn independently with exact rational probabilities via
    integer draws; derived symbols and drivers are evaluated from them.
    Reproducible given the generator state.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    values: dict[str, np.ndarray] = {}
    for sym in sorted(model.primitives):
        prim = model.primitives[sym]
        atoms, thresholds = prim.numeric_atoms(h)
        draws = rng.integers(0, int(thresholds[-1]), size=size)
        values[sym] = atoms[np.searchsorted(thresholds, draws, side="right")]
    for sym in model.derived:
        values[sym] = model.derived[sym].evaluate(values, h)
    return {nu: poly.evaluate(values, h) for nu, poly in model.theta.items()}


# ---------------------------------------------------------------------------
# Pattern-level model descriptions
# ---------------------------------------------------------------------------

_COMPARISONS = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
}


def _eval_condition(cond: "str | None", env: Mapping[str, int]) -> bool:
    if not cond:
        return True
    for clause in cond.split(" and "):
        clause = clause.strip()
        for op in ("==", "!=", "<=", ">=", "<", ">"):
            if op in clause:
                lhs, rhs = (s.strip() for s in clause.split(op, 1))
                a = env[lhs] if lhs in env else int(lhs)
                b = env[rhs] if rhs in env else int(rhs)
                if not _COMPARISONS[op](a, b):
                    return False
                break
        else:
            raise ModelError(f"cannot parse condition {clause!r}")
    return True


def _index_assignments(names, m, when=None):
    """Assignments of the distinct variable names among ``names`` to 1..m."""
    variables = []
    for name in names:
        if name != "0" and name not in variables:
            variables.append(name)
    for combo in product(range(1, m + 1), repeat=len(variables)):
        env = dict(zip(variables, combo))
        if _eval_condition(when, env):
            yield env


def resolve_indices(names: Iterable[str], env: Mapping[str, int]) -> MultiIndex:
    return tuple(0 if n == "0" else env[n] for n in names)


def _symbol_name(base: str, indices: MultiIndex) -> str:
    return f"{base}[{','.join(str(i) for i in indices)}]"


def eval_symbolic_expr(
    src: str, env: Mapping[str, int], resolve
) -> HalfPowerPoly:
    """Evaluate an arithmetic expression over model symbols.

    Grammar: rational literals, ``h`` and ``sqrt_h``, unary minus, ``+ - *``,
    ``/`` by a constant or by (a power of) ``sqrt_h``, ``**`` with integer
    exponent, and indexed names like ``V[l,k]`` whose indices are variables
    from ``env`` or integer literals.  ``resolve(base, indices)`` supplies
    the polynomial for an indexed symbol.
    """

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant):
            if isinstance(node.value, int):
                return HalfPowerPoly.number(node.value)
            raise ModelError(f"unsupported literal {node.value!r}")
        if isinstance(node, ast.Name):
            if node.id == "h":
                return HalfPowerPoly.h_power(2)
            if node.id == "sqrt_h":
                return HalfPowerPoly.h_power(1)
            return resolve(node.id, ())
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -ev(node.operand)
        if isinstance(node, ast.BinOp):
            if isinstance(node.op, ast.Add):
                return ev(node.left) + ev(node.right)
            if isinstance(node.op, ast.Sub):
                return ev(node.left) - ev(node.right)
            if isinstance(node.op, ast.Mult):
                return ev(node.left) * ev(node.right)
            if isinstance(node.op, ast.Pow):
                if not isinstance(node.right, ast.Constant) or not isinstance(
                    node.right.value, int
                ):
                    raise ModelError("exponents must be integer literals")
                return ev(node.left) ** node.right.value
            if isinstance(node.op, ast.Div):
                denom = ev(node.right)
                items = list(denom.monomial_items())
                if len(items) != 1 or items[0][0][1] != ():
                    raise ModelError("division only by constants or h powers")
                (halves, _), coeff = items[0]
                if not coeff.is_rational():
                    raise ModelError("division only by rational constants")
                inv = HalfPowerPoly.h_power(-halves, Fraction(1) / coeff.as_fraction())
                return ev(node.left) * inv
            raise ModelError(f"unsupported operator {ast.dump(node.op)}")
        if isinstance(node, ast.Subscript) and isinstance(node.value, ast.Name):
            base = node.value.id
            idx = node.slice
            elems = idx.elts if isinstance(idx, ast.Tuple) else [idx]
            indices = []
            for e in elems:
                if isinstance(e, ast.Constant) and isinstance(e.value, int):
                    indices.append(e.value)
                elif isinstance(e, ast.Name):
                    if e.id not in env:
                        raise ModelError(f"unbound index variable {e.id!r}")
                    indices.append(env[e.id])
                else:
                    raise ModelError("indices must be names or integer literals")
            return resolve(base, tuple(indices))
        raise ModelError(f"unsupported expression node {ast.dump(node)}")

    return ev(ast.parse(src, mode="eval"))


def instantiate_model(spec: Mapping, m: int, name: str = "") -> RandomVariableModel:
    """Expand a pattern-level model description at noise dimension ``m``.

    The description lists primitive families (with index variables and an
    optional ``when`` constraint), derived symbol families given by
    expressions, and the theta drivers keyed by multi-index patterns.
    """
    if m < 1:
        raise ValueError("noise dimension must be at least 1")
    primitives: dict[str, PrimitiveRV] = {}
    for fam in spec.get("primitives", ()):
        for env in _index_assignments(fam.get("indices", ()), m, fam.get("when")):
            indices = resolve_indices(fam.get("indices", ()), env)
            sym = _symbol_name(fam["name"], indices)
            if sym in primitives:
                raise ModelError(f"primitive {sym} defined twice")
            support = tuple(
                (
                    SqrtExt.root(int(atom.get("radicand", 1)), Fraction(atom["coeff"])),
                    int(atom["h_halves"]),
                    Fraction(atom["prob"]),
                )
                for atom in fam["support"]
            )
            primitives[sym] = PrimitiveRV(sym, support)

    derived: dict[str, HalfPowerPoly] = {}

    def resolve(base: str, indices: MultiIndex) -> HalfPowerPoly:
        sym = _symbol_name(base, indices)
        if sym in derived:
            return derived[sym]
        if sym in primitives:
            return HalfPowerPoly.symbol(sym)
        raise ModelError(f"unknown symbol {sym}")

    for fam in spec.get("derived", ()):
        for env in _index_assignments(fam.get("indices", ()), m, fam.get("when")):
            indices = resolve_indices(fam.get("indices", ()), env)
            sym = _symbol_name(fam["name"], indices)
            if sym in derived or sym in primitives:
                raise ModelError(f"symbol {sym} defined twice")
            derived[sym] = eval_symbolic_expr(fam["expr"], env, resolve)

    theta: dict[MultiIndex, HalfPowerPoly] = {}
    for fam in spec.get("theta", ()):
        for env in _index_assignments(fam["nu"], m, fam.get("when")):
            nu = resolve_indices(fam["nu"], env)
            if nu in theta:
                raise ModelError(f"theta for multi-index {nu} defined twice")
            theta[nu] = eval_symbolic_expr(fam["expr"], env, resolve)

    return RandomVariableModel(name or spec.get("name", "model"), m, primitives, derived, theta)


# ---------------------------------------------------------------------------
# Built-in model descriptions
# ---------------------------------------------------------------------------

_THREE_POINT = [
    {"coeff": "1", "radicand": 3, "h_halves": 1, "prob": "1/6"},
    {"coeff": "0", "h_halves": 0, "prob": "2/3"},
    {"coeff": "-1", "radicand": 3, "h_halves": 1, "prob": "1/6"},
]

_TWO_POINT = [
    {"coeff": "1", "h_halves": 1, "prob": "1/2"},
    {"coeff": "-1", "h_halves": 1, "prob": "1/2"},
]

# Drivers of the two-stage-family order-2 scheme for the ito calculus: a
# three-point single integral per component, antisymmetric two-point area
# terms, and a deterministic sqrt(h) channel feeding coupling coefficients.
RI1WM_MODEL = {
    "primitives": [
        {"name": "I", "indices": ["k"], "support": _THREE_POINT},
        {"name": "V", "indices": ["k", "l"], "when": "k>l", "support": [
            {"coeff": "1", "h_halves": 2, "prob": "1/2"},
            {"coeff": "-1", "h_halves": 2, "prob": "1/2"},
        ]},
    ],
    "derived": [
        {"name": "V", "indices": ["k", "l"], "when": "k<l", "expr": "-V[l,k]"},
        {"name": "V", "indices": ["k", "k"], "expr": "-h"},
        {"name": "Ihat", "indices": ["k", "l"], "expr": "(I[k]*I[l] + V[k,l])/2"},
    ],
    "theta": [
        {"nu": ["0"], "expr": "sqrt_h"},
        {"nu": ["k"], "expr": "I[k]"},
        {"nu": ["k", "l"], "expr": "Ihat[k,l]/sqrt_h"},
    ],
}

# Single three-point integral per component (order-2 scheme for the
# stratonovich calculus, and the weak Euler step).
RS1WM_MODEL = {
    "primitives": [{"name": "I", "indices": ["k"], "support": _THREE_POINT}],
    "theta": [{"nu": ["k"], "expr": "I[k]"}],
}

EULER_THREE_POINT_MODEL = RS1WM_MODEL

EULER_TWO_POINT_MODEL = {
    "primitives": [{"name": "I", "indices": ["k"], "support": _TWO_POINT}],
    "theta": [{"nu": ["k"], "expr": "I[k]"}],
}

BUILTIN_MODELS = {
    "ri1wm": RI1WM_MODEL,
    "rs1wm": RS1WM_MODEL,
    "euler3": EULER_THREE_POINT_MODEL,
    "euler2": EULER_TWO_POINT_MODEL,
}
