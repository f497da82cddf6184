"""Finite marked ordered trees addressed by Neveu words.

A node is a tuple of positive integers; the root is the empty tuple and
``u + (j,)`` is the ``j``-th child of ``u``.  A :class:`MarkedTree` is a
truncated tree: it knows its horizon ``height`` and every node at depth
``height`` carries out-degree 0 and mark 0, since neither is observed yet.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from types import MappingProxyType
from typing import Iterable, Mapping, NamedTuple, Sequence

from .errors import (
    ContiguityViolation,
    HorizonExceedsTree,
    InvalidTree,
    MarkedLeafAtHorizon,
    MissingParent,
)

NodeWord = tuple  # tuple[int, ...]
ROOT: NodeWord = ()


def word_order(u: NodeWord):
    """Sort key listing nodes generation by generation, left to right."""
    return (len(u), u)


def format_word(u: NodeWord) -> str:
    return ".".join(str(i) for i in u)


def parse_word(text: str) -> NodeWord:
    text = text.strip()
    if not text:
        return ROOT
    try:
        word = tuple(int(part) for part in text.split("."))
    except ValueError:
        raise InvalidTree(f"malformed node word {text!r}") from None
    if any(i < 1 for i in word):
        raise InvalidTree(f"node word {text!r} has a non-positive letter")
    return word


class GenerationStats(NamedTuple):
    Z: int
    M: int
    nodes: list


@dataclass(frozen=True)
class MarkedTree:
    """Immutable truncated marked tree.

    ``nodes`` maps each word to ``(out_degree, mark)``.  Use
    :func:`build_tree` to construct one from records; the constructor
    validates its input the same way.
    """

    nodes: Mapping[NodeWord, tuple]
    height: int
    _generations: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = {tuple(u): (int(k), int(e)) for u, (k, e) in dict(self.nodes).items()}
        _validate(nodes, self.height)
        ordered = dict(sorted(nodes.items(), key=lambda item: word_order(item[0])))
        gens = [[] for _ in range(self.height + 1)]
        for u in ordered:
            gens[len(u)].append(u)
        object.__setattr__(self, "nodes", MappingProxyType(ordered))
        object.__setattr__(self, "_generations", tuple(tuple(g) for g in gens))

    def __hash__(self):
        return hash(self.key())

    def __eq__(self, other):
        if not isinstance(other, MarkedTree):
            return NotImplemented
        return self.key() == other.key()

    def __len__(self):
        return len(self.nodes)

    def __contains__(self, u):
        return tuple(u) in self.nodes

    def key(self) -> tuple:
        """Hashable canonical form, used to tally samples and enumerations."""
        return (self.height, tuple(self.nodes.items()))

    def out_degree(self, u: NodeWord) -> int:
        return self.nodes[u][0]

    def mark(self, u: NodeWord) -> int:
        return self.nodes[u][1]

    def generation(self, n: int) -> tuple:
        if n < 0 or n > self.height:
            raise HorizonExceedsTree(f"generation {n} outside [0, {self.height}]")
        return self._generations[n]

    def Z(self, n: int) -> int:
        return len(self.generation(n))

    def M(self, n: int) -> int:
        if n < 0 or n > self.height:
            raise HorizonExceedsTree(f"generation {n} outside [0, {self.height}]")
        return sum(self.nodes[u][1] for g in self._generations[:n] for u in g)

    def records(self) -> list:
        return [(u, k, e) for u, (k, e) in self.nodes.items()]

    def shape(self) -> tuple:
        """Out-degrees only (marks forgotten), in canonical node order."""
        return tuple((u, k) for u, (k, _) in self.nodes.items())


def _validate(nodes: dict, height: int) -> None:
    if not isinstance(height, int) or height < 0:
        raise InvalidTree(f"height must be a nonnegative integer, got {height!r}")
    if ROOT not in nodes:
        raise MissingParent("the root (empty word) is missing")
    for u, (k, e) in nodes.items():
        if any((not isinstance(i, int)) or i < 1 for i in u):
            raise InvalidTree(f"invalid node word {u!r}")
        if len(u) > height:
            raise InvalidTree(f"node {format_word(u)!r} lies below the horizon {height}")
        if k < 0:
            raise InvalidTree(f"negative out-degree at {format_word(u)!r}")
        if e not in (0, 1):
            raise InvalidTree(f"mark at {format_word(u)!r} must be 0 or 1")
        if u and u[:-1] not in nodes:
            raise MissingParent(f"node {format_word(u)!r} has no parent")
    for u, (k, e) in nodes.items():
        if len(u) == height:
            if e:
                raise MarkedLeafAtHorizon(
                    f"node {format_word(u)!r} sits at the horizon and must be unmarked"
                )
            if k:
                raise ContiguityViolation(
                    f"node {format_word(u)!r} sits at the horizon and cannot have children"
                )
        for j in range(1, k + 1):
            if u + (j,) not in nodes:
                raise ContiguityViolation(f"child {j} of {format_word(u)!r} is missing")
        if u and u[-1] > nodes[u[:-1]][0]:
            raise ContiguityViolation(
                f"node {format_word(u)!r} exceeds the out-degree of its parent"
            )


def build_tree(records: Iterable, height: int) -> MarkedTree:
    """Validate ``(word, out_degree, mark)`` records into a tree of the given horizon."""
    nodes = {}
    for word, k, e in records:
        word = parse_word(word) if isinstance(word, str) else tuple(word)
        if word in nodes:
            raise InvalidTree(f"duplicate record for {format_word(word)!r}")
        nodes[word] = (k, e)
    return MarkedTree(nodes, height)


def root_only() -> MarkedTree:
    return MarkedTree({ROOT: (0, 0)}, 0)


def restrict(tree: MarkedTree, h: int) -> MarkedTree:
    """Keep the first ``h`` generations; nodes at depth ``h`` lose children and mark."""
    if h < 0 or h > tree.height:
        raise HorizonExceedsTree(f"cannot restrict a height-{tree.height} tree to {h}")
    nodes = {}
    for u, (k, e) in tree.nodes.items():
        if len(u) < h:
            nodes[u] = (k, e)
        elif len(u) == h:
            nodes[u] = (0, 0)
    return MarkedTree(nodes, h)


def generation_stats(tree: MarkedTree, n: int) -> GenerationStats:
    """``(Z_n, M_n, nodes of generation n)``; ``M_n`` counts marks at depth < n."""
    nodes = list(tree.generation(n))
    return GenerationStats(len(nodes), tree.M(n), nodes)


def next_generation_masses(parents: Sequence, zero=Fraction(0)) -> list:
    """Masses of the children of one generation.

    ``parents`` lists ``(mass, out_degree, mark)`` in generation order.  A node
    hands ``mass + mark`` evenly to its children; a childless node spreads
    ``mass + mark`` evenly over the whole next generation.  Returns the child
    masses in generation order (empty when the generation dies out).
    """
    z_next = sum(k for _, k, _ in parents)
    if z_next == 0:
        return []
    orphan = zero
    for m, k, e in parents:
        if k == 0:
            orphan = orphan + m + e
    share = orphan / z_next
    out = []
    for m, k, e in parents:
        if k:
            own = (m + e) / k
            out.extend([own + share] * k)
    return out


@dataclass(frozen=True)
class MassAssignment:
    masses: Mapping[NodeWord, Fraction]

    def __getitem__(self, u):
        return self.masses[u]

    def generation_total(self, tree: MarkedTree, n: int):
        return sum((self.masses[u] for u in tree.generation(n)), Fraction(0))


def compute_masses(tree: MarkedTree, zero=Fraction(0)) -> MassAssignment:
    """Exact masses of every node (pass ``zero=0.0`` for floating point)."""
    masses = {ROOT: zero}
    for n in range(tree.height):
        gen = tree.generation(n)
        if not gen:
            break
        parents = [(masses[u], *tree.nodes[u]) for u in gen]
        children = tree.generation(n + 1)
        for v, m in zip(children, next_generation_masses(parents, zero)):
            masses[v] = m
    return MassAssignment(MappingProxyType(masses))


# -- serialization -----------------------------------------------------------

def dumps_tree(tree: MarkedTree, types: Mapping | None = None) -> str:
    """One ``word;out_degree;mark`` record per line, ``:type`` appended if given."""
    lines = []
    for u, (k, e) in tree.nodes.items():
        rec = f"{format_word(u)};{k};{e}"
        if types is not None:
            rec += f":{types[u]}"
        lines.append(rec)
    return "\n".join(lines)


def parse_record(text: str):
    body, _, typ = text.partition(":")
    parts = body.split(";")
    if len(parts) != 3:
        raise InvalidTree(f"malformed record {text!r}")
    word = parse_word(parts[0])
    try:
        k, e = int(parts[1]), int(parts[2])
    except ValueError:
        raise InvalidTree(f"malformed record {text!r}") from None
    return word, k, e, (int(typ) if typ else None)


def loads_tree(text: str, height: int | None = None):
    """Inverse of :func:`dumps_tree`.

    The horizon defaults to the deepest node present.  Returns
    ``(tree, types)`` where ``types`` is ``None`` when no record carried one.
    """
    records, types = [], {}
    for line in text.replace(" ", "\n").splitlines():
        line = line.strip()
        if not line:
            continue
        word, k, e, typ = parse_record(line)
        records.append((word, k, e))
        if typ is not None:
            types[word] = typ
    if height is None:
        height = max(len(w) for w, _, _ in records) if records else 0
    return build_tree(records, height), (types or None)


def dumps_line(tree: MarkedTree, types: Mapping | None = None) -> str:
    """Single-line form used in sample files: ``height<TAB>rec rec ...``."""
    return f"{tree.height}\t" + dumps_tree(tree, types).replace("\n", " ")


def loads_line(line: str):
    head, _, body = line.rstrip("\n").partition("\t")
    return loads_tree(body, int(head))


def format_fraction(x: Fraction) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"
