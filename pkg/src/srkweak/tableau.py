"""Coefficient model of an s-stage stochastic Runge-Kutta scheme.

A scheme couples a drift slot and one slot per (noise component, multi-index)
pair.  Coefficient tables are written against *index patterns* (rules with
index variables and equality constraints), so a single description covers
every noise dimension; :func:`instantiate` expands the rules at a concrete
``m`` into dense tables, assembles the per-slot increment vectors ``z`` and
coupling matrices ``Z`` as exact symbolic polynomials in the driver
variables, and derives the stage-time weights.

:func:`phi_s` evaluates the elementary weight of a concrete-index tree by
the standard recursion: branches of the root contract through ``z`` vectors,
deeper branches through ``Z`` matrices, with component-wise products across
sibling subtrees.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from pathlib import Path
from typing import Mapping, Sequence

from .exact import HalfPowerPoly
from .rvmodel import (
    ModelError,
    MultiIndex,
    RandomVariableModel,
    _eval_condition,
    _index_assignments,
    instantiate_model,
    resolve_indices,
)
from .trees import DIFF, DRIFT, ROOT, Tree, node_count

__all__ = [
    "Tableau",
    "TableauError",
    "InstantiatedTableau",
    "ElementaryWeight",
    "DRIFT_SLOT",
    "instantiate",
    "phi_s",
    "load_scheme",
    "save_scheme",
    "builtin_scheme_names",
]

Slot = tuple  # (wiener_index, multi_index); the drift slot is (0, (0,))
DRIFT_SLOT: Slot = (0, (0,))


class TableauError(ValueError):
    """Malformed scheme description or conflicting pattern rules."""


@dataclass(frozen=True)
class Tableau:
    """Pattern-level scheme description (JSON-compatible, lossless)."""

    spec: Mapping

    @property
    def name(self) -> str:
        return self.spec.get("name", "scheme")

    @property
    def calculus(self) -> str:
        return self.spec.get("calculus", "ito")

    @property
    def stages(self) -> int:
        return int(self.spec["stages"])

    @property
    def claimed_order(self):
        return self.spec.get("claimed_order")

    @property
    def explicit(self) -> bool:
        return bool(self.spec.get("explicit", True))

    def to_json(self) -> str:
        return json.dumps(self.spec, indent=2)


def _fraction(x) -> Fraction:
    return Fraction(str(x))


def _vector(values: Sequence, stages: int, what: str) -> tuple[Fraction, ...]:
    if len(values) != stages:
        raise TableauError(f"{what}: expected {stages} entries, got {len(values)}")
    return tuple(_fraction(v) for v in values)


def _matrix(values: Sequence[Sequence], stages: int, what: str):
    if len(values) != stages or any(len(row) != stages for row in values):
        raise TableauError(f"{what}: expected a {stages}x{stages} matrix")
    return tuple(tuple(_fraction(v) for v in row) for row in values)


def _slot_pattern_vars(pat) -> list[str]:
    if pat == "drift":
        return []
    return [v for v in [pat["w"], *pat["nu"]] if v != "0"]


def _resolve_slot(pat, env: Mapping[str, int]) -> Slot:
    if pat == "drift":
        return DRIFT_SLOT
    return (env[pat["w"]], resolve_indices(pat["nu"], env))


def _is_strictly_lower(matrix) -> bool:
    return all(
        matrix[i][j] == 0 for i in range(len(matrix)) for j in range(i, len(matrix))
    )


@dataclass(frozen=True)
class ElementaryWeight:
    """Elementary weight of a concrete-index tree: the tree and its symbolic value."""

    tree: Tree
    expr: HalfPowerPoly


class InstantiatedTableau:
    """Scheme expanded at a concrete noise dimension.

    Exposes the dense coefficient tables, the assembled symbolic ``z``/``Z``
    data (sparse: absent entries are zero), the derived stage-time weights,
    and the instantiated random-variable model.  Immutable in practice.
    """

    def __init__(self, tableau: Tableau, m: int):
        if m < 1:
            raise TableauError("noise dimension must be at least 1")
        spec = tableau.spec
        self.tableau = tableau
        self.name = tableau.name
        self.calculus = tableau.calculus
        self.m = m
        self.stages = tableau.stages
        self.explicit = tableau.explicit
        self.alpha = _vector(spec["alpha"], self.stages, "alpha")
        self.model = instantiate_model(spec["rv_model"], m, name=tableau.name)

        self.multi_indices: set[MultiIndex] = set()
        for pattern in spec.get("multi_index_patterns", ()):
            for env in _index_assignments(pattern, m):
                self.multi_indices.add(resolve_indices(pattern, env))
        for nu in self.multi_indices:
            if nu != (0,) and nu not in self.model.theta:
                raise TableauError(f"multi-index {nu} has no driver variable")

        coeffs = spec.get("coefficients", {})
        self.A = self._expand_A(coeffs.get("A", ()))
        self.B = self._expand_B(coeffs.get("B", ()))
        self.gamma = self._expand_gamma(coeffs.get("gamma", ()))
        self._validate_explicitness()
        self._assemble()

    # -- pattern expansion --------------------------------------------------

    def _rule_envs(self, rule, variables):
        return _index_assignments(variables, self.m, rule.get("when"))

    def _check_slot(self, slot: Slot, what: str) -> None:
        if slot == DRIFT_SLOT:
            return
        k, nu = slot
        if not 1 <= k <= self.m or nu not in self.multi_indices:
            raise TableauError(f"{what}: slot {slot} outside the declared index set")

    def _expand_A(self, rules):
        out: dict[Slot, tuple] = {}
        for rule in rules:
            variables = _slot_pattern_vars(rule["row"])
            matrix = _matrix(rule["matrix"], self.stages, "A rule")
            for env in self._rule_envs(rule, variables):
                slot = _resolve_slot(rule["row"], env)
                self._check_slot(slot, "A rule")
                if slot in out and out[slot] != matrix:
                    raise TableauError(f"conflicting A rules for slot {slot}")
                out[slot] = matrix
        return out

    def _expand_B(self, rules):
        out: dict[tuple[MultiIndex, Slot, Slot], tuple] = {}
        for rule in rules:
            variables = list(
                dict.fromkeys(
                    [v for v in rule["iota"] if v != "0"]
                    + _slot_pattern_vars(rule["row"])
                    + _slot_pattern_vars(rule["col"])
                )
            )
            matrix = _matrix(rule["matrix"], self.stages, "B rule")
            for env in self._rule_envs(rule, variables):
                iota = resolve_indices(rule["iota"], env)
                row = _resolve_slot(rule["row"], env)
                col = _resolve_slot(rule["col"], env)
                if col == DRIFT_SLOT:
                    raise TableauError("drift-column couplings belong in the A table")
                self._check_slot(row, "B rule")
                self._check_slot(col, "B rule")
                if iota not in self.model.theta:
                    raise TableauError(f"B rule uses undefined driver index {iota}")
                key = (iota, row, col)
                if key in out and out[key] != matrix:
                    raise TableauError(f"conflicting B rules for {key}")
                out[key] = matrix
        return out

    def _expand_gamma(self, rules):
        out: dict[tuple[MultiIndex, Slot], tuple] = {}
        for rule in rules:
            variables = list(
                dict.fromkeys(
                    [v for v in rule["iota"] if v != "0"]
                    + _slot_pattern_vars(rule["slot"])
                )
            )
            vector = _vector(rule["vector"], self.stages, "gamma rule")
            for env in self._rule_envs(rule, variables):
                iota = resolve_indices(rule["iota"], env)
                slot = _resolve_slot(rule["slot"], env)
                if slot == DRIFT_SLOT:
                    raise TableauError("drift-slot weights belong in alpha")
                self._check_slot(slot, "gamma rule")
                if iota not in self.model.theta:
                    raise TableauError(f"gamma rule uses undefined driver index {iota}")
                key = (iota, slot)
                if key in out and out[key] != vector:
                    raise TableauError(f"conflicting gamma rules for {key}")
                out[key] = vector
        return out

    def _validate_explicitness(self):
        lower = all(_is_strictly_lower(mat) for mat in self.A.values()) and all(
            _is_strictly_lower(mat) for mat in self.B.values()
        )
        if self.explicit and not lower:
            raise TableauError("scheme declared explicit but has entries on/above the diagonal")

    # -- assembly ------------------------------------------------------------

    def _assemble(self):
        s = self.stages
        zero_vec = tuple(HalfPowerPoly.zero() for _ in range(s))
        h = HalfPowerPoly.h_power(2)

        self.z: dict[Slot, tuple[HalfPowerPoly, ...]] = {}
        self.z[DRIFT_SLOT] = tuple(HalfPowerPoly.h_power(2, a) for a in self.alpha)

        slot_list = [DRIFT_SLOT] + [
            (k, nu) for k in range(1, self.m + 1) for nu in sorted(self.multi_indices)
        ]
        self.slots = slot_list

        gamma_by_slot: dict[Slot, list] = {}
        for (iota, slot), vec in self.gamma.items():
            gamma_by_slot.setdefault(slot, []).append((iota, vec))
        for slot, entries in gamma_by_slot.items():
            vec = list(zero_vec)
            for iota, coeffs in entries:
                theta = self.model.theta[iota]
                for i, cf in enumerate(coeffs):
                    if cf:
                        vec[i] = vec[i] + cf * theta
            if any(not p.is_zero() for p in vec):
                self.z[slot] = tuple(vec)

        self.Z: dict[tuple[Slot, Slot], tuple] = {}
        for row, mat in self.A.items():
            entries = tuple(
                tuple(HalfPowerPoly.h_power(2, mat[i][j]) for j in range(s))
                for i in range(s)
            )
            if any(mat[i][j] for i in range(s) for j in range(s)):
                self.Z[(row, DRIFT_SLOT)] = entries

        b_by_pair: dict[tuple[Slot, Slot], list] = {}
        for (iota, row, col), mat in self.B.items():
            b_by_pair.setdefault((row, col), []).append((iota, mat))
        for (row, col), entries in b_by_pair.items():
            acc = [[HalfPowerPoly.zero() for _ in range(s)] for _ in range(s)]
            for iota, mat in entries:
                theta = self.model.theta[iota]
                for i in range(s):
                    for j in range(s):
                        if mat[i][j]:
                            acc[i][j] = acc[i][j] + mat[i][j] * theta
            if any(not acc[i][j].is_zero() for i in range(s) for j in range(s)):
                self.Z[(row, col)] = tuple(tuple(r) for r in acc)

        e = tuple(Fraction(1) for _ in range(s))
        self.c: dict[Slot, tuple[Fraction, ...]] = {}
        for slot in slot_list:
            mat = self.A.get(slot)
            if mat is None:
                self.c[slot] = tuple(Fraction(0) for _ in range(s))
            else:
                self.c[slot] = tuple(sum(row) for row in mat)

    # -- convenience ----------------------------------------------------------

    def stochastic_slots(self, k: int) -> list[Slot]:
        """Slots for noise component ``k`` with a nonzero increment vector."""
        return [slot for slot in self.z if slot != DRIFT_SLOT and slot[0] == k]

    def z_dot_e(self, slot: Slot) -> HalfPowerPoly:
        vec = self.z.get(slot)
        if vec is None:
            return HalfPowerPoly.zero()
        out = HalfPowerPoly.zero()
        for p in vec:
            out = out + p
        return out


def instantiate(tableau: Tableau, m: int) -> InstantiatedTableau:
    """Expand pattern rules into fully indexed tables at noise dimension ``m``."""
    return InstantiatedTableau(tableau, m)


# ---------------------------------------------------------------------------
# Elementary weights
# ---------------------------------------------------------------------------


def _vec_hadamard(a, b):
    return tuple(x * y for x, y in zip(a, b))


def _mat_vec(mat, vec):
    out = []
    for row in mat:
        acc = HalfPowerPoly.zero()
        for entry, v in zip(row, vec):
            if not entry.is_zero() and not v.is_zero():
                acc = acc + entry * v
        out.append(acc)
    return tuple(out)


def _dot(a, b) -> HalfPowerPoly:
    acc = HalfPowerPoly.zero()
    for x, y in zip(a, b):
        if not x.is_zero() and not y.is_zero():
            acc = acc + x * y
    return acc


def phi_s(tree: Tree, itab: InstantiatedTableau) -> ElementaryWeight:
    """Elementary weight of a concrete-index tree under the scheme.

    The tree must have a root-kind root, and every stochastic node must
    carry a concrete index in ``1..m``.  Children of the root multiply as
    scalars; each branch contracts through the ``z`` vector of its slot and
    recursively through ``Z`` matrices, summing over the multi-index set at
    every stochastic node.
    """
    if tree.kind != ROOT:
        raise ValueError("elementary weights are defined for root-kind trees")
    _check_concrete(tree, itab.m)
    s = itab.stages
    ones = tuple(HalfPowerPoly.number(1) for _ in range(s))
    psi_cache: dict[tuple[Tree, Slot], tuple] = {}

    def psi_product(children, slot: Slot):
        vec = ones
        for child in children:
            vec = _vec_hadamard(vec, psi(child, slot))
        return vec

    def psi(node: Tree, slot: Slot):
        key = (node, slot)
        cached = psi_cache.get(key)
        if cached is not None:
            return cached
        if node.kind == DRIFT:
            mat = itab.Z.get((slot, DRIFT_SLOT))
            out = (
                tuple(HalfPowerPoly.zero() for _ in range(s))
                if mat is None
                else _mat_vec(mat, psi_product(node.children, DRIFT_SLOT))
            )
        else:
            out = tuple(HalfPowerPoly.zero() for _ in range(s))
            for col in itab.slots:
                if col == DRIFT_SLOT or col[0] != node.index:
                    continue
                mat = itab.Z.get((slot, col))
                if mat is None:
                    continue
                contrib = _mat_vec(mat, psi_product(node.children, col))
                out = tuple(a + b for a, b in zip(out, contrib))
        psi_cache[key] = out
        return out

    def branch_weight(node: Tree) -> HalfPowerPoly:
        if node.kind == DRIFT:
            return _dot(itab.z[DRIFT_SLOT], psi_product(node.children, DRIFT_SLOT))
        acc = HalfPowerPoly.zero()
        for slot in itab.stochastic_slots(node.index):
            acc = acc + _dot(itab.z[slot], psi_product(node.children, slot))
        return acc

    expr = HalfPowerPoly.number(1)
    for child in tree.children:
        expr = expr * branch_weight(child)
    return ElementaryWeight(tree, expr)


def _check_concrete(tree: Tree, m: int) -> None:
    stack = list(tree.children)
    while stack:
        node = stack.pop()
        if node.kind == ROOT:
            raise ValueError("root-kind nodes may appear only at the root")
        if node.kind == DIFF and not 1 <= node.index <= m:
            raise ValueError(
                f"stochastic index {node.index} outside 1..{m}; assign concrete indices first"
            )
        stack.extend(node.children)


# ---------------------------------------------------------------------------
# Scheme files
# ---------------------------------------------------------------------------


def builtin_scheme_names() -> list[str]:
    from importlib import resources

    names = []
    for entry in resources.files("srkweak.schemes").iterdir():
        if entry.name.endswith(".json"):
            names.append(entry.name[: -len(".json")])
    return sorted(names)


def load_scheme(name_or_path: "str | Path") -> Tableau:
    """Load a scheme file; bare names resolve against the shipped schemes."""
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        return Tableau(json.loads(path.read_text()))
    from importlib import resources

    candidate = resources.files("srkweak.schemes") / f"{str(name_or_path).lower()}.json"
    if candidate.is_file():
        return Tableau(json.loads(candidate.read_text()))
    raise TableauError(
        f"unknown scheme {name_or_path!r}; expected a file or one of {builtin_scheme_names()}"
    )


def save_scheme(tableau: Tableau, path: "str | Path") -> None:
    Path(path).write_text(tableau.to_json() + "\n")
