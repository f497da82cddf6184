"""Seeded samplers for the base marked tree and its tilted versions.

Every sampler grows the tree one generation at a time.  The weighted
multitype tree needs this (types are assigned jointly over a generation) and
the other samplers follow suit so that a seed always consumes random numbers
in the same order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping

import numpy as np

from .errors import NodeBudgetExceeded, NotSubcritical, RegimeMismatch
from .laws import MarkedGWLaw
from .moments import XiTable, xi_table
from .penalty import TypedLaws, spine_node_laws, tilted_node_law, NodeLawKind
from .tree import ROOT, MarkedTree, next_generation_masses

NODE_BUDGET = 10**7
SHARD_SIZE = 1000
THREADS_ENV = "MARKEDGW_THREADS"


class RngStream:
    """A seeded generator that counts the uniforms it hands out."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.counter = 0
        self.generator = np.random.default_rng(self.seed)

    def uniform(self) -> float:
        self.counter += 1
        return float(self.generator.random())

    def integer(self, n: int) -> int:
        self.counter += 1
        return int(self.generator.integers(n))

    def spawn(self, i: int) -> "RngStream":
        return RngStream(self.seed + i)


class Categorical:
    """Inverse-CDF sampler over a finite list of outcomes."""

    def __init__(self, outcomes, probs):
        self.outcomes = list(outcomes)
        self.cdf = np.cumsum([float(p) for p in probs])

    def draw(self, rng: RngStream):
        i = int(np.searchsorted(self.cdf, rng.uniform() * self.cdf[-1], side="right"))
        return self.outcomes[min(i, len(self.outcomes) - 1)]

    @classmethod
    def from_items(cls, items):
        items = list(items)
        return cls([a for a, _ in items], [p for _, p in items])


@dataclass(frozen=True)
class TypedMarkedTree:
    """A sampled tree with node types; ``special`` lists the spine, one word per generation."""

    tree: MarkedTree
    types: Mapping
    special: tuple = ()


def _grow(depth: int, draw_generation: Callable, budget: int = NODE_BUDGET) -> MarkedTree:
    """Build a tree generation by generation; ``draw_generation(n, words)`` returns (k, eta) per word."""
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    nodes = {}
    gen = [ROOT]
    for n in range(depth):
        if not gen:
            break
        pairs = draw_generation(n, gen)
        children = []
        for u, (k, e) in zip(gen, pairs):
            nodes[u] = (k, e)
            children.extend(u + (j,) for j in range(1, k + 1))
        if len(nodes) + len(children) > budget:
            raise NodeBudgetExceeded(f"tree exceeds the budget of {budget} nodes")
        gen = children
    for u in gen:
        nodes[u] = (0, 0)
    return MarkedTree(nodes, depth)


def _pair_drawer(law: MarkedGWLaw):
    if law.finite:
        cat = Categorical.from_items(law.pairs())
        return cat.draw

    def draw(rng: RngStream):
        rng.counter += 1
        k = int(law.dist.rvs(random_state=rng.generator))
        return k, int(rng.uniform() < law.q(k))
    return draw


def sample_mgw(law: MarkedGWLaw, depth: int, rng: RngStream, budget: int = NODE_BUDGET) -> MarkedTree:
    """Forward sample of the marked tree truncated at ``depth``."""
    draw = _pair_drawer(law)
    return _grow(depth, lambda n, gen: [draw(rng) for _ in gen], budget)


def sample_tilted_mgw(node_law, depth: int, rng: RngStream, budget: int = NODE_BUDGET) -> MarkedTree:
    """Marked tree whose nodes all reproduce by one (tilted) node law."""
    cat = Categorical.from_items(node_law.items())
    return _grow(depth, lambda n, gen: [cat.draw(rng) for _ in gen], budget)


class TauSampler:
    """Sampler of the weighted multitype tree of order ``ell`` (subcritical laws)."""

    def __init__(self, law: MarkedGWLaw, xi: XiTable | None, ell: int):
        if not law.mean < 1:
            raise NotSubcritical("the weighted multitype tree needs a subcritical law")
        if xi is None:
            xi = xi_table(law, ell)
        self.typed = TypedLaws(law, xi, ell)
        self.zero = Fraction(0) if law.exact and xi.exact else 0.0
        self._cats: dict = {}

    def _node_cat(self, t, m) -> Categorical:
        key = (t, m)
        cat = self._cats.get(key)
        if cat is None:
            cat = Categorical.from_items(self.typed.node_law(t, m).items())
            self._cats[key] = cat
        return cat

    def _gamma_cat(self, masses, M) -> Categorical:
        key = ("gamma", masses, M)
        cat = self._cats.get(key)
        if cat is None:
            cat = Categorical.from_items(self.typed.gamma(masses, M))
            self._cats[key] = cat
        return cat

    def sample(self, depth: int, rng: RngStream, budget: int = NODE_BUDGET) -> TypedMarkedTree:
        ell = self.typed.ell
        types = {ROOT: ell}
        state = {"masses": (self.zero,), "types": (ell,), "M": self.zero}

        def draw_generation(n, gen):
            masses, tvec, M = state["masses"], state["types"], state["M"]
            pairs = [self._node_cat(t, m).draw(rng) for t, m in zip(tvec, masses)]
            child_masses = tuple(next_generation_masses(
                [(m, k, e) for m, (k, e) in zip(masses, pairs)], self.zero))
            M = M + sum(e for _, e in pairs)
            if child_masses:
                tnext = self._gamma_cat(child_masses, M).draw(rng)
                children = [u + (j,) for u, (k, _) in zip(gen, pairs) for j in range(1, k + 1)]
                types.update(zip(children, tnext))
            else:
                tnext = ()
            state.update(masses=child_masses, types=tnext, M=M)
            return pairs

        tree = _grow(depth, draw_generation, budget)
        return TypedMarkedTree(tree, types)


def sample_tau_ell(law: MarkedGWLaw, xi: XiTable | None, ell: int, depth: int,
                   rng: RngStream) -> TypedMarkedTree:
    """One weighted multitype tree; reuse :class:`TauSampler` for batches."""
    return TauSampler(law, xi, ell).sample(depth, rng)


class SpineSampler:
    """Tree with one special node per generation, for s in (0, 1) or the s = 0 case."""

    def __init__(self, law: MarkedGWLaw, s=None, zero_mark: bool = False):
        normal, special = spine_node_laws(law, s, zero_mark)
        self.normal = Categorical.from_items(normal.items())
        self.special = Categorical.from_items(special.items())

    def sample(self, depth: int, rng: RngStream, budget: int = NODE_BUDGET) -> TypedMarkedTree:
        spine = [ROOT]

        def draw_generation(n, gen):
            pairs = []
            for u in gen:
                cat = self.special if u == spine[-1] else self.normal
                pairs.append(cat.draw(rng))
            z_next = sum(k for k, _ in pairs)
            # the spine has at least one child, so z_next >= 1
            i = rng.integer(z_next)
            children = [u + (j,) for u, (k, _) in zip(gen, pairs) for j in range(1, k + 1)]
            spine.append(children[i])
            return pairs

        tree = _grow(depth, draw_generation, budget)
        marked = set(spine)
        types = {u: int(u in marked) for u in tree.nodes}
        return TypedMarkedTree(tree, types, tuple(spine[: depth + 1]))


def sample_spine_tree(law: MarkedGWLaw, s, depth: int, rng: RngStream,
                      zero_mark: bool = False) -> TypedMarkedTree:
    return SpineSampler(law, s, zero_mark).sample(depth, rng)


def degenerate_node_law(law: MarkedGWLaw, s=None, zero_mark: bool = False):
    if zero_mark:
        rt = law.bounds.r_tilde
        if rt is None or rt < 1:
            raise RegimeMismatch("the unmarked regular tree needs r-tilde >= 1")
        return tilted_node_law(NodeLawKind.RARY, law, s=0, r=rt)
    if law.p(0) != 0:
        raise RegimeMismatch("the regular-tree limit needs p(0) = 0")
    if s is None or not 0 < s < 1:
        raise RegimeMismatch(f"s must lie in (0, 1), got {s}")
    return tilted_node_law(NodeLawKind.RARY, law, s=s, r=law.bounds.r)


def sample_degenerate(law: MarkedGWLaw, s, depth: int, rng: RngStream,
                      zero_mark: bool = False) -> MarkedTree:
    """Regular r-ary tree with Bernoulli marks (or the unmarked r-tilde-ary tree)."""
    return sample_tilted_mgw(degenerate_node_law(law, s, zero_mark), depth, rng)


# -- batches -------------------------------------------------------------------

def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def sample_batch(sample_one: Callable, count: int, base_seed: int,
                 threads: int | None = None, shard_size: int = SHARD_SIZE) -> list:
    """``count`` samples; shard ``i`` covers a fixed block and uses seed ``base_seed + i``.

    The output depends only on ``(count, base_seed, shard_size)``, never on
    the thread count.
    """
    shards = [(i, min(shard_size, count - i * shard_size))
              for i in range((count + shard_size - 1) // shard_size)]

    def run(shard):
        i, size = shard
        rng = RngStream(base_seed + i)
        return [sample_one(rng) for _ in range(size)]

    threads = thread_count() if threads is None else threads
    if threads > 1 and len(shards) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, shards))
    else:
        parts = [run(s) for s in shards]
    return [x for part in parts for x in part]


def simulate_total_marks(law: MarkedGWLaw, count: int, seed: int,
                         max_generations: int = 10_000, budget: int = 10**9) -> np.ndarray:
    """``M_inf`` for ``count`` independent subcritical trees, vectorized over trees.

    Each generation draws, per surviving tree, how many of its ``Z`` nodes
    fall on each ``(k, eta)`` atom (a multinomial split).
    """
    if not law.mean < 1:
        raise NotSubcritical("total mark count is finite only for subcritical laws")
    pairs = law.pairs()
    ks = np.array([k for (k, _), _ in pairs], dtype=np.int64)
    etas = np.array([e for (_, e), _ in pairs], dtype=np.int64)
    probs = np.array([float(w) for _, w in pairs])
    probs /= probs.sum()
    gen = np.random.default_rng(seed)
    Z = np.ones(count, dtype=np.int64)
    M = np.zeros(count, dtype=np.int64)
    used = count
    for _ in range(max_generations):
        alive = np.nonzero(Z)[0]
        if alive.size == 0:
            return M
        split = gen.multinomial(Z[alive], probs)
        M[alive] += split @ etas
        Z[alive] = split @ ks
        used += int(Z.sum())
        if used > budget:
            raise NodeBudgetExceeded(f"simulation exceeds {budget} nodes")
    raise NodeBudgetExceeded("trees still alive after the generation cap")
