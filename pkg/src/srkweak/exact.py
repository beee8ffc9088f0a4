"""Exact scalar arithmetic for the symbolic layer.

Numbers live in Q adjoined with square roots of square-free integers, which
is enough to represent discrete random variables with atoms such as
``+/- sqrt(3*h)`` while keeping every expectation exact.  Polynomials are
Laurent polynomials in ``sqrt(h)`` over such numbers, with monomials drawn
from named random-variable symbols.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Mapping

__all__ = ["SqrtExt", "HalfPowerPoly", "squarefree_split"]

RationalLike = "int | Fraction | SqrtExt"


def squarefree_split(n: int) -> tuple[int, int]:
    """Return ``(s, r)`` with ``n == s*s*r`` and ``r`` square-free, for n >= 1."""
    if n < 1:
        raise ValueError("need a positive integer")
    s, r, d = 1, 1, 2
    while d * d <= n:
        while n % (d * d) == 0:
            n //= d * d
            s *= d
        if n % d == 0:
            n //= d
            r *= d
        d += 1
    return s, r * n


class SqrtExt:
    """Number of the form ``sum_r c_r * sqrt(r)`` with rational ``c_r``.

    The radicands ``r`` are positive square-free integers; ``r == 1`` holds
    the rational part.  The representation is normalized (no zero terms).
    """

    __slots__ = ("_terms",)

    def __init__(self, value: "int | Fraction | dict[int, Fraction]" = 0):
        if isinstance(value, dict):
            terms = {}
            for rad, coeff in value.items():
                coeff = Fraction(coeff)
                if coeff == 0:
                    continue
                outer, rad = squarefree_split(rad)
                terms[rad] = terms.get(rad, Fraction(0)) + coeff * outer
            self._terms = {r: c for r, c in terms.items() if c != 0}
        else:
            q = Fraction(value)
            self._terms = {1: q} if q != 0 else {}

    @classmethod
    def root(cls, radicand: int, coeff: "int | Fraction" = 1) -> "SqrtExt":
        """The number ``coeff * sqrt(radicand)``."""
        return cls({radicand: Fraction(coeff)})

    @classmethod
    def _raw(cls, terms: dict[int, Fraction]) -> "SqrtExt":
        out = cls.__new__(cls)
        out._terms = {r: c for r, c in terms.items() if c != 0}
        return out

    # -- queries ----------------------------------------------------------

    def is_zero(self) -> bool:
        return not self._terms

    def is_rational(self) -> bool:
        return all(r == 1 for r in self._terms)

    def as_fraction(self) -> Fraction:
        if not self.is_rational():
            raise ValueError(f"{self} is irrational")
        return self._terms.get(1, Fraction(0))

    def __float__(self) -> float:
        import math

        return float(sum(float(c) * math.sqrt(r) for r, c in self._terms.items()))

    # -- arithmetic --------------------------------------------------------

    @staticmethod
    def _coerce(x) -> "SqrtExt":
        if isinstance(x, SqrtExt):
            return x
        if isinstance(x, (int, Fraction)):
            return SqrtExt(x)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        terms = dict(self._terms)
        for r, c in other._terms.items():
            terms[r] = terms.get(r, Fraction(0)) + c
        return SqrtExt._raw(terms)

    __radd__ = __add__

    def __neg__(self):
        return SqrtExt._raw({r: -c for r, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        terms: dict[int, Fraction] = {}
        for r1, c1 in self._terms.items():
            for r2, c2 in other._terms.items():
                outer, rad = squarefree_split(r1 * r2)
                terms[rad] = terms.get(rad, Fraction(0)) + c1 * c2 * outer
        return SqrtExt._raw(terms)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative powers not supported")
        out = SqrtExt(1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            if other == 0:
                raise ZeroDivisionError
            return SqrtExt._raw({r: c / Fraction(other) for r, c in self._terms.items()})
        return NotImplemented

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    def __repr__(self):
        return f"SqrtExt({self})"

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for r in sorted(self._terms):
            c = self._terms[r]
            if r == 1:
                parts.append(str(c))
            elif c == 1:
                parts.append(f"sqrt({r})")
            else:
                parts.append(f"{c}*sqrt({r})")
        return " + ".join(parts)


# Monomials are sorted tuples of (symbol, power > 0); the empty tuple is 1.
Monomial = tuple


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    powers: dict[str, int] = dict(a)
    for sym, p in b:
        powers[sym] = powers.get(sym, 0) + p
    return tuple(sorted(powers.items()))


class HalfPowerPoly:
    """Laurent polynomial in ``sqrt(h)`` with RV-symbol monomials.

    Terms map ``(h_halves, monomial) -> SqrtExt`` where ``h_halves`` counts
    half powers of the step size (``h == h_halves=2``) and monomials are
    products of named random-variable symbols.  Values are immutable in
    practice: all operations return new instances.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms: "dict | None" = None):
        self._terms = {}
        if terms:
            for key, coeff in terms.items():
                coeff = coeff if isinstance(coeff, SqrtExt) else SqrtExt(coeff)
                if not coeff.is_zero():
                    self._terms[key] = coeff

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls) -> "HalfPowerPoly":
        return cls()

    @classmethod
    def number(cls, value) -> "HalfPowerPoly":
        return cls({(0, ()): value})

    @classmethod
    def h_power(cls, halves: int, coeff=1) -> "HalfPowerPoly":
        """``coeff * h**(halves/2)``."""
        return cls({(halves, ()): coeff})

    @classmethod
    def symbol(cls, name: str) -> "HalfPowerPoly":
        return cls({(0, ((name, 1),)): 1})

    # -- queries -----------------------------------------------------------

    def is_zero(self) -> bool:
        return not self._terms

    def symbols(self) -> set:
        out: set[str] = set()
        for (_, mono) in self._terms:
            out.update(sym for sym, _ in mono)
        return out

    def is_number(self) -> bool:
        return all(not mono for (_, mono) in self._terms)

    def h_coefficients(self) -> dict[int, SqrtExt]:
        """For a symbol-free polynomial, return ``halves -> coefficient``."""
        if not self.is_number():
            raise ValueError("polynomial still contains random-variable symbols")
        return {halves: c for (halves, _), c in self._terms.items()}

    def min_h_halves(self) -> "int | None":
        """Lowest half-power of h present, or None for the zero polynomial."""
        if not self._terms:
            return None
        return min(halves for (halves, _) in self._terms)

    def truncate_h(self, max_halves: int) -> "HalfPowerPoly":
        """Drop all terms with half-power above ``max_halves``."""
        return HalfPowerPoly(
            {key: c for key, c in self._terms.items() if key[0] <= max_halves}
        )

    def monomial_items(self):
        return self._terms.items()

    # -- arithmetic --------------------------------------------------------

    @staticmethod
    def _coerce(x) -> "HalfPowerPoly":
        if isinstance(x, HalfPowerPoly):
            return x
        if isinstance(x, (int, Fraction, SqrtExt)):
            return HalfPowerPoly.number(x)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        terms = dict(self._terms)
        for key, c in other._terms.items():
            acc = terms.get(key)
            terms[key] = c if acc is None else acc + c
        return HalfPowerPoly(terms)

    __radd__ = __add__

    def __neg__(self):
        return HalfPowerPoly({key: -c for key, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        terms: dict = {}
        for (h1, m1), c1 in self._terms.items():
            for (h2, m2), c2 in other._terms.items():
                key = (h1 + h2, _mono_mul(m1, m2))
                c = c1 * c2
                acc = terms.get(key)
                terms[key] = c if acc is None else acc + c
        return HalfPowerPoly(terms)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative powers not supported")
        out = HalfPowerPoly.number(1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            inv = Fraction(1) / Fraction(other)
            return self * inv
        return NotImplemented

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    # -- substitution / evaluation ------------------------------------------

    def substitute(self, table: Mapping[str, "HalfPowerPoly"]) -> "HalfPowerPoly":
        """Replace symbols by polynomials; symbols not in ``table`` stay."""
        out = HalfPowerPoly.zero()
        for (halves, mono), coeff in self._terms.items():
            term = HalfPowerPoly({(halves, ()): coeff})
            for sym, p in mono:
                repl = table.get(sym)
                factor = HalfPowerPoly.symbol(sym) if repl is None else repl
                term = term * factor ** p
            out = out + term
        return out

    def evaluate(self, values: Mapping[str, object], h: float):
        """Numeric evaluation; symbol values may be floats or numpy arrays."""
        total = 0.0
        for (halves, mono), coeff in self._terms.items():
            term = float(coeff) * h ** (halves * 0.5)
            for sym, p in mono:
                term = term * values[sym] ** p
            total = total + term
        return total

    # -- rendering -----------------------------------------------------------

    @staticmethod
    def _h_str(halves: int) -> str:
        if halves == 0:
            return ""
        if halves == 2:
            return "h"
        if halves % 2 == 0:
            return f"h^{halves // 2}"
        return f"h^({halves}/2)"

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for (halves, mono) in sorted(self._terms, key=lambda k: (k[0], k[1])):
            coeff = self._terms[(halves, mono)]
            factors = []
            cs = str(coeff)
            if "+" in cs or "sqrt" in cs:
                cs = f"({cs})"
            hs = self._h_str(halves)
            if hs:
                factors.append(hs)
            factors.extend(sym if p == 1 else f"{sym}^{p}" for sym, p in mono)
            if not factors:
                parts.append(cs)
            elif cs == "1":
                parts.append("*".join(factors))
            else:
                parts.append("*".join([cs] + factors))
        return " + ".join(parts)

    def __repr__(self):
        return f"HalfPowerPoly({self})"


def poly_sum(items: Iterable[HalfPowerPoly]) -> HalfPowerPoly:
    out = HalfPowerPoly.zero()
    for item in items:
        out = out + item
    return out
