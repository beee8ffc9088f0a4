"""Colored rooted trees for weak-order analysis of stochastic Runge-Kutta methods.

Three node kinds are used: the root kind standing for the test functional,
a deterministic kind standing for the drift, and a stochastic kind standing
for one diffusion column (it carries an index).  Trees come in two flavors
sharing one type: *variable-index* trees, whose stochastic indices are
equivalence-class ids renamed freely by canonicalization, and
*concrete-index* trees, whose indices are actual noise-component values.

The module provides canonicalization, enumeration of the three tree
families used in order-condition work, correlation of index variables,
and the combinatorial coefficients (cardinalities, density, correlation
count) attached to each tree.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import permutations
from typing import Hashable, Iterable, Iterator, Sequence

__all__ = [
    "ROOT",
    "DRIFT",
    "DIFF",
    "Tree",
    "LabelledTree",
    "TreeStructureError",
    "CorrelationPattern",
    "TreeTableEntry",
    "canonical",
    "canonical_concrete",
    "canonicalize",
    "correlate",
    "beta",
    "count_labellings",
    "set_partitions",
    "enumerate_ts_delta",
    "enumerate_ts_star",
    "correlated_star_alphas",
    "all_distinct_shape",
    "format_tree",
    "parse_tree",
]

# Node kinds; the single characters double as serialization tokens.
ROOT = "g"   # root node: the functional applied to the state
DRIFT = "t"  # deterministic node: the drift
DIFF = "s"   # stochastic node: one diffusion column, carries an index

_RANK = {ROOT: 0, DRIFT: 1, DIFF: 2}


class TreeStructureError(ValueError):
    """Malformed labelled tree (bad parent map, bad colors, bad indices)."""


@dataclass(frozen=True)
class Tree:
    """Colored rooted tree; children are ordered (canonical trees sort them)."""

    kind: str
    index: int = 0
    children: tuple["Tree", ...] = ()

    def __post_init__(self):
        if self.kind not in _RANK:
            raise TreeStructureError(f"unknown node kind {self.kind!r}")
        if self.kind != DIFF and self.index != 0:
            raise TreeStructureError("only stochastic nodes carry an index")
        if self.kind == DIFF and self.index <= 0:
            raise TreeStructureError("stochastic nodes need a positive index")


def root_tree(children: Iterable[Tree] = ()) -> Tree:
    return Tree(ROOT, 0, tuple(children))


def drift_node(children: Iterable[Tree] = ()) -> Tree:
    return Tree(DRIFT, 0, tuple(children))


def diff_node(index: int, children: Iterable[Tree] = ()) -> Tree:
    return Tree(DIFF, index, tuple(children))


# ---------------------------------------------------------------------------
# Cached per-tree statistics
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def node_count(t: Tree) -> int:
    return 1 + sum(node_count(c) for c in t.children)


@lru_cache(maxsize=None)
def drift_count(t: Tree) -> int:
    return (t.kind == DRIFT) + sum(drift_count(c) for c in t.children)


@lru_cache(maxsize=None)
def diff_count(t: Tree) -> int:
    return (t.kind == DIFF) + sum(diff_count(c) for c in t.children)


def rho_halves(t: Tree) -> int:
    """Tree order in half units: two per deterministic node, one per stochastic."""
    return 2 * drift_count(t) + diff_count(t)


def rho(t: Tree) -> Fraction:
    return Fraction(rho_halves(t), 2)


@lru_cache(maxsize=None)
def density(t: Tree) -> int:
    """Non-bushiness measure: leaves count 1, non-root brackets multiply by size."""
    prod = 1
    for c in t.children:
        prod *= density(c)
    if t.kind == ROOT or not t.children:
        return prod
    return node_count(t) * prod


@lru_cache(maxsize=None)
def _index_class_sizes(t: Tree) -> dict:
    out: dict[int, int] = {}
    stack = [t]
    while stack:
        node = stack.pop()
        if node.kind == DIFF:
            out[node.index] = out.get(node.index, 0) + 1
        stack.extend(node.children)
    return out


def index_classes(t: Tree) -> tuple[int, ...]:
    """Sorted distinct stochastic index ids occurring in the tree."""
    return tuple(sorted(_index_class_sizes(t)))


# ---------------------------------------------------------------------------
# Canonical form
# ---------------------------------------------------------------------------

Key = tuple


def _key(t: Tree, remap: dict[int, int] | None) -> Key:
    idx = t.index if (t.kind != DIFF or remap is None) else remap[t.index]
    children = t.children
    if not children:
        return (_RANK[t.kind], idx, ())
    child_keys = [_key(c, remap) for c in children]
    child_keys.sort()
    return (_RANK[t.kind], idx, tuple(child_keys))


def _tree_from_key(key: Key) -> Tree:
    rank, idx, child_keys = key
    kind = {0: ROOT, 1: DRIFT, 2: DIFF}[rank]
    return Tree(kind, idx, tuple(_tree_from_key(k) for k in child_keys))


def _blind_key(t: Tree) -> Key:
    """Shape key ignoring index ids entirely."""
    return (_RANK[t.kind], 0, tuple(sorted(_blind_key(c) for c in t.children)))


def _renumber_first_appearance(key: Key, counter: list[int]) -> Tree:
    rank, _, child_keys = key
    if rank == 2:
        counter[0] += 1
        idx = counter[0]
        return Tree(DIFF, idx, tuple(_renumber_first_appearance(k, counter) for k in child_keys))
    kind = ROOT if rank == 0 else DRIFT
    return Tree(kind, 0, tuple(_renumber_first_appearance(k, counter) for k in child_keys))


@lru_cache(maxsize=None)
def canonical(t: Tree) -> Tree:
    """Canonical representative of a variable-index tree.

    Children are sorted recursively by (kind rank, index id, child keys) and
    index classes are renumbered so the minimum encoding is attained; the
    winning numbering labels classes by first appearance in the traversal.
    When every index occurs once the ids carry no information, so the blind
    shape plus first-appearance numbering gives the same representative
    without searching over renamings.
    """
    sizes = _index_class_sizes(t)
    if not sizes:
        return _tree_from_key(_key(t, None))
    if all(v == 1 for v in sizes.values()):
        return _renumber_first_appearance(_blind_key(t), [0])
    ids = sorted(sizes)
    targets = range(1, len(ids) + 1)
    best = None
    for perm in permutations(targets):
        key = _key(t, dict(zip(ids, perm)))
        if best is None or key < best:
            best = key
    return _tree_from_key(best)


def canonical_concrete(t: Tree) -> Tree:
    """Sort children recursively without renaming indices (concrete trees)."""
    return _tree_from_key(_key(t, None))


# ---------------------------------------------------------------------------
# Monotonically labelled trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabelledTree:
    """Monotonically labelled colored tree.

    ``parents[i]`` is the parent label of node ``i + 2`` (labels run 1..l and
    the root is label 1), ``kinds[i]`` the kind of label ``i + 1``, and
    ``index_vars[i]`` an arbitrary hashable index variable for stochastic
    nodes (None otherwise).  Parents must satisfy ``parent < child``.
    """

    parents: tuple[int, ...]
    kinds: tuple[str, ...]
    index_vars: tuple[Hashable, ...]

    def __post_init__(self):
        l = len(self.kinds)
        if len(self.parents) != l - 1 or len(self.index_vars) != l:
            raise TreeStructureError("inconsistent component lengths")
        for child_offset, parent in enumerate(self.parents):
            child = child_offset + 2
            if not 1 <= parent < child:
                raise TreeStructureError(
                    f"parent of node {child} must be a smaller positive label"
                )
        for kind, var in zip(self.kinds, self.index_vars):
            if kind not in _RANK:
                raise TreeStructureError(f"unknown node kind {kind!r}")
            if (kind == DIFF) != (var is not None):
                raise TreeStructureError("index variables belong to stochastic nodes only")

    def node_count(self) -> int:
        return len(self.kinds)

    def to_tree(self) -> Tree:
        """Forget the labelling; index variables become class ids."""
        l = len(self.kinds)
        classes: dict[Hashable, int] = {}
        for var in self.index_vars:
            if var is not None and var not in classes:
                classes[var] = len(classes) + 1
        children: list[list[int]] = [[] for _ in range(l + 1)]
        for child_offset, parent in enumerate(self.parents):
            children[parent].append(child_offset + 2)

        def build(label: int) -> Tree:
            kind = self.kinds[label - 1]
            var = self.index_vars[label - 1]
            idx = classes[var] if var is not None else 0
            return Tree(kind, idx, tuple(build(c) for c in children[label]))

        return build(1)


def canonicalize(t: LabelledTree) -> Tree:
    """Canonical representative of the labelled tree's equivalence class."""
    return canonical(t.to_tree())


def count_labellings(t: Tree) -> int:
    """Number of monotone labellings of ``t``, up to global index renaming.

    This is the plain cardinality of a tree class: linear extensions of the
    rooted-tree order are enumerated and the resulting labelled trees are
    deduplicated as (parent map, coloring up to index renaming) pairs.
    """
    nodes: list[Tree] = []
    parent_of: dict[int, int] = {}

    def collect(node: Tree, parent_id: int) -> None:
        nodes.append(node)
        nid = len(nodes) - 1
        if parent_id >= 0:
            parent_of[nid] = parent_id
        for c in node.children:
            collect(c, nid)

    collect(t, -1)
    n = len(nodes)
    seen: set = set()

    def extend(assigned: dict[int, int], frontier: list[int]) -> None:
        label = len(assigned) + 1
        if label > n:
            parents = tuple(
                assigned[parent_of[nid]]
                for nid, lab in sorted(assigned.items(), key=lambda kv: kv[1])
                if lab >= 2
            )
            order = sorted(assigned, key=lambda nid: assigned[nid])
            rename: dict[int, int] = {}
            colors = []
            for nid in order:
                node = nodes[nid]
                if node.kind == DIFF:
                    rename.setdefault(node.index, len(rename) + 1)
                    colors.append((DIFF, rename[node.index]))
                else:
                    colors.append((node.kind, 0))
            seen.add((parents, tuple(colors)))
            return
        for i, nid in enumerate(frontier):
            assigned[nid] = label
            new_frontier = frontier[:i] + frontier[i + 1 :] + [
                cid for cid, pid in parent_of.items() if pid == nid
            ]
            extend(assigned, new_frontier)
            del assigned[nid]

    extend({0: 1}, [cid for cid, pid in parent_of.items() if pid == 0])
    return len(seen)


# ---------------------------------------------------------------------------
# Correlation patterns
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorrelationPattern:
    """Set partition of a tree's index variables into equality blocks.

    Variables in one block share an index value; distinct blocks take
    pairwise-distinct values, so the pattern is realizable for noise
    dimension ``m`` exactly when it has at most ``m`` blocks.
    """

    blocks: tuple[tuple[int, ...], ...]

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]]) -> "CorrelationPattern":
        normed = tuple(sorted(tuple(sorted(set(b))) for b in blocks if b))
        flat = [v for b in normed for v in b]
        if len(flat) != len(set(flat)):
            raise ValueError("blocks must be disjoint")
        return cls(normed)

    @classmethod
    def discrete(cls, ids: Iterable[int]) -> "CorrelationPattern":
        return cls.from_blocks([[i] for i in ids])

    def variables(self) -> tuple[int, ...]:
        return tuple(sorted(v for b in self.blocks for v in b))

    def n_blocks(self) -> int:
        return len(self.blocks)

    def realizable(self, m: int) -> bool:
        return len(self.blocks) <= m

    def __str__(self):
        return " ".join("=".join(f"j{v}" for v in b) for b in self.blocks)


def set_partitions(items: Sequence[int], max_blocks: int | None = None) -> Iterator[list[list[int]]]:
    """All set partitions of ``items`` (optionally with a block-count cap)."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for sub in set_partitions(rest, max_blocks):
        for i in range(len(sub)):
            yield sub[:i] + [[first] + sub[i]] + sub[i + 1 :]
        if max_blocks is None or len(sub) < max_blocks:
            yield [[first]] + sub


def _merge_indices(t: Tree, target: dict[int, int]) -> Tree:
    if t.kind == DIFF:
        return Tree(DIFF, target[t.index], tuple(_merge_indices(c, target) for c in t.children))
    return Tree(t.kind, 0, tuple(_merge_indices(c, target) for c in t.children))


def correlate(t: Tree, pattern: CorrelationPattern) -> Tree:
    """Merge the tree's index variables per the pattern's equality blocks."""
    ids = index_classes(t)
    if pattern.variables() != ids:
        raise ValueError(
            f"pattern variables {pattern.variables()} do not match tree variables {ids}"
        )
    target = {}
    for rep, block in enumerate(pattern.blocks, start=1):
        for v in block:
            target[v] = rep
    return canonical(_merge_indices(t, target))


def all_distinct_shape(t: Tree) -> Tree:
    """Same shape with every stochastic node given a fresh index variable."""
    counter = [0]

    def rebuild(node: Tree) -> Tree:
        if node.kind == DIFF:
            counter[0] += 1
            idx = counter[0]
        else:
            idx = 0
        return Tree(node.kind, idx, tuple(rebuild(c) for c in node.children))

    return canonical(rebuild(t))


def beta(t: Tree, pattern: CorrelationPattern | None = None) -> int:
    """Number of all-distinct-index correlations realizing a correlated tree.

    ``t`` is a tree whose stochastic nodes pair up (even stochastic count);
    an optional pattern on its index classes is applied first.  Counted are
    the set partitions of the fully distinct shape's variables whose merge
    is equivalent to the correlated tree.
    """
    if diff_count(t) % 2 != 0:
        raise ValueError("correlation counts need an even number of stochastic nodes")
    target = correlate(t, pattern) if pattern is not None else canonical(t)
    if diff_count(target) == 0:
        return 1
    shape = all_distinct_shape(target)
    ids = index_classes(shape)
    return sum(
        1
        for blocks in set_partitions(ids)
        if correlate(shape, CorrelationPattern.from_blocks(blocks)) == target
    )


# ---------------------------------------------------------------------------
# Enumeration of the tree families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TreeTableEntry:
    """One equivalence class with its cardinalities in the three families."""

    tree: Tree
    alpha_delta: int
    alpha_ito: int
    alpha_strat: int

    @property
    def rho(self) -> Fraction:
        return rho(self.tree)


def _labelled_delta_trees(max_rho_halves: int) -> Iterator[LabelledTree]:
    """All monotonically labelled root-kind trees with all-distinct stochastic
    indices and order at most ``max_rho_halves`` half units."""
    parents: list[int] = []
    kinds: list[str] = [ROOT]
    index_vars: list[Hashable] = [None]

    def emit() -> LabelledTree:
        return LabelledTree(tuple(parents), tuple(kinds), tuple(index_vars))

    def grow(budget_halves: int) -> Iterator[LabelledTree]:
        yield emit()
        l = len(kinds)
        for kind, cost in ((DRIFT, 2), (DIFF, 1)):
            if cost > budget_halves:
                continue
            for parent in range(1, l + 1):
                parents.append(parent)
                kinds.append(kind)
                index_vars.append(l + 1 if kind == DIFF else None)
                yield from grow(budget_halves - cost)
                parents.pop()
                kinds.pop()
                index_vars.pop()

    yield from grow(max_rho_halves)


def _labelled_star_trees(calculus: str, max_rho_halves: int) -> Iterator[LabelledTree]:
    """Trees built by the growth rules of the chosen calculus.

    A step either adds one deterministic node under any existing node, or a
    pair of stochastic nodes sharing a fresh index.  Both pair nodes attach
    to previously existing nodes; under ``strat`` the second may also attach
    to the first, which the ``ito`` rules forbid.
    """
    if calculus not in ("ito", "strat"):
        raise ValueError("calculus must be 'ito' or 'strat'")
    parents: list[int] = []
    kinds: list[str] = [ROOT]
    index_vars: list[Hashable] = [None]
    pair_count = [0]

    def emit() -> LabelledTree:
        return LabelledTree(tuple(parents), tuple(kinds), tuple(index_vars))

    def grow(budget_halves: int) -> Iterator[LabelledTree]:
        yield emit()
        l = len(kinds)
        if budget_halves >= 2:
            for parent in range(1, l + 1):
                parents.append(parent)
                kinds.append(DRIFT)
                index_vars.append(None)
                yield from grow(budget_halves - 2)
                parents.pop()
                kinds.pop()
                index_vars.pop()
            pair_count[0] += 1
            pair_id = pair_count[0]
            second_max = l + 1 if calculus == "strat" else l
            for parent_a in range(1, l + 1):
                for parent_b in range(1, second_max + 1):
                    parents.extend((parent_a, parent_b))
                    kinds.extend((DIFF, DIFF))
                    index_vars.extend((("pair", pair_id), ("pair", pair_id)))
                    yield from grow(budget_halves - 2)
                    del parents[-2:]
                    del kinds[-2:]
                    del index_vars[-2:]
            pair_count[0] -= 1

    yield from grow(max_rho_halves)


def _group_by_class(labelled: Iterable[LabelledTree]) -> dict[Tree, int]:
    counts: dict[Tree, int] = {}
    for lt in labelled:
        key = canonicalize(lt)
        counts[key] = counts.get(key, 0) + 1
    return counts


def _sorted_entries(rows: Iterable[TreeTableEntry]) -> list[TreeTableEntry]:
    return sorted(rows, key=lambda e: (rho_halves(e.tree), _key(e.tree, None)))


def _require_max_rho(max_rho) -> int:
    halves = Fraction(max_rho) * 2
    if halves.denominator != 1 or halves < 0:
        raise ValueError("max order must be a nonnegative half-integer")
    return int(halves)


def enumerate_ts_delta(max_rho) -> list[TreeTableEntry]:
    """All classes with root kind, all-distinct stochastic indices and order
    at most ``max_rho``, with their labelling cardinalities."""
    halves = _require_max_rho(max_rho)
    counts = _group_by_class(_labelled_delta_trees(halves))
    star_i = _group_by_class(_labelled_star_trees("ito", halves))
    star_s = _group_by_class(_labelled_star_trees("strat", halves))
    rows = [
        TreeTableEntry(t, n, star_i.get(t, 0), star_s.get(t, 0))
        for t, n in counts.items()
    ]
    return _sorted_entries(rows)


def enumerate_ts_star(calculus: str, max_rho) -> list[TreeTableEntry]:
    """All classes reachable by the growth rules, with both cardinalities.

    For ``calculus='ito'`` only classes with nonzero ito cardinality are
    returned; for ``'strat'`` every reachable class is returned and its ito
    cardinality is filled in (zero when unreachable under ito rules).
    """
    halves = _require_max_rho(max_rho)
    star_i = _group_by_class(_labelled_star_trees("ito", halves))
    star_s = _group_by_class(_labelled_star_trees("strat", halves))
    missing = set(star_i) - set(star_s)
    if missing:
        raise AssertionError("ito classes must embed into strat classes")
    base = star_i if calculus == "ito" else star_s
    if calculus not in ("ito", "strat"):
        raise ValueError("calculus must be 'ito' or 'strat'")
    rows = [
        TreeTableEntry(t, 0, star_i.get(t, 0), star_s.get(t, 0)) for t in base
    ]
    return _sorted_entries(rows)


def correlated_star_alphas(calculus: str, max_rho) -> dict[Tree, int]:
    """Cardinality lookup for correlated trees.

    For every growth-rule class and every set partition of its pair indices,
    the partition's merge is mapped to the class cardinality; coinciding
    merges accumulate.  The result maps a correlated canonical tree to the
    total cardinality entering its order condition.
    """
    halves = _require_max_rho(max_rho)
    counts = _group_by_class(_labelled_star_trees(calculus, halves))
    out: dict[Tree, int] = {}
    for t, alpha in counts.items():
        ids = index_classes(t)
        for blocks in set_partitions(ids):
            merged = correlate(t, CorrelationPattern.from_blocks(blocks))
            out[merged] = out.get(merged, 0) + alpha
    return out


# ---------------------------------------------------------------------------
# Bracket notation
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(\(|\)|\[|\]|\{|\}_j?\d+|,|g|t|s_j?\d+)\s*")


def format_tree(t: Tree, concrete: bool = False) -> str:
    """Bracket serialization: ``(...)`` root, ``[...]`` drift, ``{...}_j1``
    stochastic; leaves print as ``g``, ``t`` and ``s_j1``.  Concrete trees
    print bare integers instead of ``j``-variables."""
    idx = (str(t.index) if concrete else f"j{t.index}") if t.kind == DIFF else ""
    if not t.children:
        return {ROOT: "g", DRIFT: "t", DIFF: f"s_{idx}"}[t.kind]
    inner = ",".join(format_tree(c, concrete) for c in t.children)
    if t.kind == ROOT:
        return f"({inner})"
    if t.kind == DRIFT:
        return f"[{inner}]"
    return f"{{{inner}}}_{idx}"


def parse_tree(text: str) -> Tree:
    """Parse the bracket grammar produced by :func:`format_tree`.

    Index tokens ``j3`` denote variable indices, bare integers concrete
    ones; the two must not be mixed.  The returned tree is not
    canonicalized.
    """
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ValueError(f"bad tree syntax at {text[pos:pos + 10]!r}")
        tokens.append(m.group(1))
        pos = m.end()
    tokens.reverse()

    def parse_index(raw: str) -> int:
        return int(raw[1:]) if raw.startswith("j") else int(raw)

    def node() -> Tree:
        tok = tokens.pop()
        if tok == "g":
            return Tree(ROOT)
        if tok == "t":
            return Tree(DRIFT)
        if tok.startswith("s_"):
            return Tree(DIFF, parse_index(tok[2:]))
        if tok in "([{":
            children = []
            closing = {"(": ")", "[": "]", "{": "}"}[tok]
            while True:
                if not tokens:
                    raise ValueError("unbalanced brackets")
                nxt = tokens[-1]
                if nxt == closing or (closing == "}" and nxt.startswith("}_")):
                    break
                children.append(node())
                if tokens and tokens[-1] == ",":
                    tokens.pop()
            close = tokens.pop()
            if tok == "(":
                return Tree(ROOT, 0, tuple(children))
            if tok == "[":
                return Tree(DRIFT, 0, tuple(children))
            return Tree(DIFF, parse_index(close[2:]), tuple(children))
        raise ValueError(f"unexpected token {tok!r}")

    out = node()
    if tokens:
        raise ValueError(f"trailing input: {tokens[::-1]}")
    return out
