"""Exact enumeration of truncated marked trees and the checks built on it.

For a finite law every truncated tree of small depth can be listed with its
exact probability.  The change-of-measure and martingale checks compare
weighted base probabilities against probabilities computed independently
from the tilted node laws.  The two sides never share a formula.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

from scipy import stats

from .errors import RegimeMismatch, StateSpaceTooLarge
from .laws import MarkedGWLaw, gen_fn_eval, iterate_jet
from .moments import conditional_moment, f_ell_eval, moment_table, xi_table
from .penalty import (
    ExpoPositive,
    ExpoRary,
    ExpoZero,
    ExpoZeroRary,
    Penalty,
    PolySub,
    TypedLaws,
    spine_node_laws,
)
from .series import compose_jet
from .tree import ROOT, MarkedTree, next_generation_masses

ENUMERATION_CAP = 10**7
FLOAT_TOL = 1e-12
MARTINGALE_TOL = 1e-10


@dataclass(frozen=True)
class EnumeratedMeasure:
    """Every truncated tree of a given depth with its probability (nonzero atoms only)."""

    atoms: tuple
    depth: int
    fingerprint: str

    def __iter__(self):
        return iter(self.atoms)

    def __len__(self):
        return len(self.atoms)

    def total(self):
        return sum(p for _, p in self.atoms)

    def probability(self, tree: MarkedTree):
        for t, p in self.atoms:
            if t == tree:
                return p
        return 0


def _as_fraction_pairs(law: MarkedGWLaw) -> list:
    # float probabilities become the exact rationals of their binary values,
    # so sums over the whole measure carry no rounding at all
    return [(pair, w if isinstance(w, Fraction) else Fraction(w)) for pair, w in law.pairs()]


def _children_ways(per_degree: dict, z: int) -> dict:
    # number of atom choices for z nodes, by their total number of children
    out = {0: 1}
    for _ in range(z):
        nxt = defaultdict(int)
        for total, ways in out.items():
            for k, c in per_degree.items():
                nxt[total + k] += ways * c
        out = nxt
    return out


def count_truncated(law: MarkedGWLaw, depth: int) -> int:
    """Number of nonzero-probability truncated trees of the given depth, without listing them."""
    law.require_finite()
    per_degree = Counter(k for (k, _), _ in law.pairs())
    memo = {}

    def below(z, h):
        if h == 0 or z == 0:
            return 1
        if (z, h) not in memo:
            memo[(z, h)] = sum(w * below(t, h - 1)
                               for t, w in _children_ways(per_degree, z).items())
        return memo[(z, h)]

    return below(1, depth)


def iter_truncated(law: MarkedGWLaw, depth: int):
    """Yield ``(tree, probability)`` for every truncated tree, depth first (constant memory)."""
    law.require_finite()
    pairs = _as_fraction_pairs(law)

    def grow(nodes, gen, prob, level):
        if level == depth or not gen:
            full = dict(nodes)
            for u in gen:
                full[u] = (0, 0)
            yield MarkedTree(full, depth), prob
            return
        for choice in product(pairs, repeat=len(gen)):
            new = dict(nodes)
            p = prob
            children = []
            for u, ((k, e), w) in zip(gen, choice):
                new[u] = (k, e)
                p *= w
                children.extend(u + (j,) for j in range(1, k + 1))
            yield from grow(new, children, p, level + 1)

    yield from grow({}, [ROOT], Fraction(1), 0)


def enumerate_truncated(law: MarkedGWLaw, depth: int, cap: int = ENUMERATION_CAP) -> EnumeratedMeasure:
    """All truncated trees of the given depth with exact rational probabilities."""
    n = count_truncated(law, depth)
    if n > cap:
        raise StateSpaceTooLarge(f"{n} truncated trees at depth {depth} exceed the cap {cap}")
    return EnumeratedMeasure(tuple(iter_truncated(law, depth)), depth, law.fingerprint())


def exact_expectation(measure: EnumeratedMeasure, functional):
    acc = 0
    for tree, p in measure:
        acc = acc + p * functional(tree)
    return acc


# -- tilted per-tree probabilities ---------------------------------------------

def _generations(tree: MarkedTree):
    for n in range(tree.height):
        gen = tree.generation(n)
        if not gen:
            return
        yield n, gen, [tree.nodes[u] for u in gen]


def tau_probability(typed: TypedLaws, tree: MarkedTree):
    """Probability that the weighted multitype tree, types forgotten, restricts to ``tree``."""
    zero = Fraction(0) if typed.xi.exact else 0.0
    masses, M = (zero,), zero
    prob = 1
    for _, gen, pairs in _generations(tree):
        prob = prob * typed.generation_probability(masses, M, pairs)
        if not prob:
            return prob
        masses = tuple(next_generation_masses(
            [(m, k, e) for m, (k, e) in zip(masses, pairs)], zero))
        M = M + sum(e for _, e in pairs)
    return prob


def product_probability(node_law, tree: MarkedTree):
    prob = 1
    for _, _, pairs in _generations(tree):
        for pair in pairs:
            prob = prob * node_law[pair]
    return prob


def spine_probability(normal, special, tree: MarkedTree):
    """Spine tree probability with the spine summed out (uniform within each generation)."""
    prob = 1.0
    for _, gen, pairs in _generations(tree):
        base = [normal[pair] for pair in pairs]
        spec = [special[pair] for pair in pairs]
        acc = 0.0
        for i in range(len(pairs)):
            term = spec[i]
            for j, b in enumerate(base):
                if j != i:
                    term *= b
            acc += term
        prob *= acc / len(pairs)
    return prob


class TiltedLaw:
    """Per-tree probability under the explicitly constructed tilted tree of a regime."""

    def __init__(self, law: MarkedGWLaw, regime, exact: bool | None = None):
        self.law, self.regime = law, regime
        cls = type(regime)
        if cls is PolySub:
            xi = xi_table(law, regime.ell, exact=exact)
            self.typed = TypedLaws(law, xi, regime.ell)
            self._prob = lambda t: tau_probability(self.typed, t)
        elif cls in (ExpoPositive, ExpoZero):
            zero = cls is ExpoZero
            normal, special = spine_node_laws(law, None if zero else regime.s, zero_mark=zero,
                                              special=regime.ell > 0)
            if regime.ell == 0:
                self._prob = lambda t: product_probability(normal, t)
            else:
                self._prob = lambda t: spine_probability(normal, special, t)
        elif cls in (ExpoRary, ExpoZeroRary):
            from .sampler import degenerate_node_law
            node = degenerate_node_law(law, getattr(regime, "s", None), zero_mark=cls is ExpoZeroRary)
            self._prob = lambda t: product_probability(node, t)
        else:
            raise RegimeMismatch(
                f"{regime.tag} has no explicit tilted construction to compare against"
            )

    def probability(self, tree: MarkedTree):
        return self._prob(tree)


def _is_regular(tree: MarkedTree, r: int) -> bool:
    return all(k == r for u, (k, _) in tree.nodes.items() if len(u) < tree.height)


def _gap(a, b) -> float:
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return float(abs(a - b))
    return abs(float(a) - float(b))


@dataclass
class ChangeOfMeasureReport:
    regime: object
    depth: int
    max_gap: float
    n_trees: int
    weighted_mass: object
    tilted_mass: object
    regular_mass: object | None
    exact: bool
    gaps: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        if self.exact:
            return self.max_gap == 0
        return self.max_gap < FLOAT_TOL


def check_change_of_measure(law: MarkedGWLaw, regime, depth: int, exact: bool | None = None,
                            cap: int = ENUMERATION_CAP) -> ChangeOfMeasureReport:
    """Compare ``P(t) B_h(t)`` with the tilted construction's probability of ``t``, tree by tree."""
    penalty = Penalty(regime, law, exact=exact)
    tilted = TiltedLaw(law, regime, exact=penalty.exact)
    n_trees = count_truncated(law, depth)
    if n_trees > cap:
        raise StateSpaceTooLarge(f"{n_trees} truncated trees at depth {depth} exceed the cap {cap}")
    r = getattr(penalty, "r", None)
    gaps = []
    weighted_mass = tilted_mass = 0
    regular_mass = 0 if r is not None else None
    for tree, p in iter_truncated(law, depth):
        w = penalty.weight(depth, tree.Z(depth), tree.M(depth))
        lhs = p * w if penalty.exact else float(p) * float(w)
        rhs = tilted.probability(tree)
        gaps.append(_gap(lhs, rhs))
        weighted_mass = weighted_mass + lhs
        tilted_mass = tilted_mass + rhs
        if r is not None and _is_regular(tree, r):
            regular_mass = regular_mass + lhs
    exact_cmp = isinstance(weighted_mass, Fraction) and isinstance(tilted_mass, Fraction)
    return ChangeOfMeasureReport(regime, depth, max(gaps, default=0.0), n_trees,
                                 weighted_mass, tilted_mass, regular_mass, exact_cmp, gaps)


# -- martingale check ------------------------------------------------------------

def _convolve(a: dict, b: dict) -> dict:
    out = defaultdict(int)
    for (z1, m1), p1 in a.items():
        for (z2, m2), p2 in b.items():
            out[(z1 + z2, m1 + m2)] += p1 * p2
    return dict(out)


class OffspringConvolutions:
    """Law of ``(sum of out-degrees, sum of marks)`` over ``z`` independent nodes."""

    def __init__(self, law: MarkedGWLaw, exact: bool):
        cast = (lambda w: w) if exact else float
        self.step = {pair: cast(w) for pair, w in law.pairs()}
        self.one = Fraction(1) if exact else 1.0
        self._cache = {0: {(0, 0): self.one}}

    def __call__(self, z: int) -> dict:
        if z not in self._cache:
            self._cache[z] = _convolve(self(z - 1), self.step)
        return self._cache[z]


def reachable_states(law: MarkedGWLaw, depth: int, exact: bool) -> list:
    """``[{(Z_n, M_n): prob}]`` for ``n = 0..depth``."""
    conv = OffspringConvolutions(law, exact)
    layers = [{(1, 0): conv.one}]
    for _ in range(depth):
        nxt = defaultdict(int)
        for (z, m), p in layers[-1].items():
            for (dz, dm), q in conv(z).items():
                nxt[(dz, m + dm)] += p * q
        layers.append(dict(nxt))
    return layers


def residual_histogram(residuals) -> dict:
    bins = Counter()
    for r in residuals:
        if r == 0:
            bins["0"] += 1
        else:
            bins[f"1e{math.floor(math.log10(r))}"] += 1
    return dict(sorted(bins.items()))


@dataclass
class MartingaleReport:
    regime: object
    depth: int
    max_residual: float
    n_states: int
    exact: bool
    residuals: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return self.max_residual == 0 if self.exact else self.max_residual < MARTINGALE_TOL

    def histogram(self) -> dict:
        return residual_histogram(self.residuals)


def one_step_expectation(penalty: Penalty, conv: OffspringConvolutions, n: int, Z: int, M):
    acc = 0
    for (dz, dm), q in conv(Z).items():
        acc = acc + q * penalty.weight(n + 1, dz, M + dm)
    return acc


def check_martingale(law: MarkedGWLaw, regime, depth: int, exact: bool | None = None) -> MartingaleReport:
    """``E[B_{n+1} | F_n] = B_n`` at every reachable state of generation ``n < depth``.

    The weights depend on a history only through ``(n, Z_n, M_n)``, so the
    reachable states stand for all histories.
    """
    penalty = Penalty(regime, law, exact=exact)
    conv = OffspringConvolutions(law, penalty.exact)
    residuals = []
    layers = reachable_states(law, depth - 1, penalty.exact) if depth > 0 else []
    for n, layer in enumerate(layers):
        for (Z, M) in layer:
            lhs = one_step_expectation(penalty, conv, n, Z, M)
            residuals.append(_gap(lhs, penalty.weight(n, Z, M)))
    return MartingaleReport(regime, depth, max(residuals, default=0.0), len(residuals),
                            penalty.exact, residuals)


# -- penalization ratios --------------------------------------------------------

@dataclass(frozen=True)
class RatioResult:
    ratio: object
    limit: object

    @property
    def gap(self) -> float:
        return abs(float(self.ratio) - float(self.limit))

    @property
    def relative_gap(self) -> float:
        if self.limit == 0:
            return self.gap
        return self.gap / abs(float(self.limit))


def polynomial_penalization_ratio(law: MarkedGWLaw, ell: int, n: int, p: int, event,
                                  exact: bool | None = None) -> RatioResult:
    """``E[1_A M_{n+p}^l] / E[M_{n+p}^l]`` and its limit ``E[1_A f_l(M_n, Z_n)]`` (subcritical)."""
    measure = enumerate_truncated(law, n)
    moments = moment_table(law, p, ell, exact)
    total = moment_table(law, n + p, ell, exact)[ell]
    xi = xi_table(law, ell, exact=exact)
    num = lim = 0
    for tree, prob in measure:
        if not event(tree):
            continue
        Z, M = tree.Z(n), tree.M(n)
        prob = prob if isinstance(total, Fraction) else float(prob)
        num = num + prob * conditional_moment(law, M, Z, p, ell, moments=moments)
        lim = lim + prob * f_ell_eval(xi, ell, M, Z)
    return RatioResult(num / total, lim)


def _power_jet(jet: list, z: int) -> list:
    # derivatives of g^z from the jet of g
    L = len(jet) - 1
    g = jet[0]
    outer = [math.perm(z, k) * g ** (z - k) if k <= z else 0.0 for k in range(L + 1)]
    return compose_jet(outer, jet)


def exponential_penalization_ratio(law: MarkedGWLaw, s: float, t: float, n: int, p: int,
                                   event, ell: int = 0) -> RatioResult:
    """``E[1_A H_l(Z) s^M t^Z] / E[H_l(Z) s^M t^Z]`` at ``n + p`` and its limit (needs p(0) > 0).

    Conditionally on generation ``n`` the numerator is
    ``s^{M_n} (t^l / l!) d^l/dt^l [f_s^p(t)^{Z_n}]``, which is evaluated from
    the derivative jet of the iterate.
    """
    measure = enumerate_truncated(law, n)
    s, t = float(s), float(t)
    jet = [float(v) for v in iterate_jet(law, s, t, p, ell, max(ell, 6))]
    denom = gen_fn_eval(law, s, t, n + p, ell, max_order=max(ell, 6))
    penalty = Penalty(ExpoPositive(s, ell), law)
    num = lim = 0.0
    for tree, prob in measure:
        if not event(tree):
            continue
        Z, M = tree.Z(n), tree.M(n)
        num += float(prob) * s**M * _power_jet(jet, Z)[ell]
        lim += float(prob) * penalty.weight(n, Z, M)
    return RatioResult(num / denom, lim)


# -- goodness of fit -------------------------------------------------------------

@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    p_value: float
    cells: int
    impossible: int


def chi_square_gof(observed: Counter, expected_probs: dict, min_expected: float = 5.0) -> ChiSquareResult:
    """Pearson test of sample counts against exact cell probabilities.

    Cells with expected count below ``min_expected`` are pooled.  Any
    observation in a zero-probability cell forces a p-value of 0.
    """
    n = sum(observed.values())
    impossible = sum(c for key, c in observed.items() if not expected_probs.get(key))
    if impossible:
        return ChiSquareResult(math.inf, 0.0, 0, impossible)
    obs, exp = [], []
    pooled_o = pooled_e = 0.0
    for key, prob in expected_probs.items():
        e = n * float(prob)
        if e <= 0:
            continue
        if e < min_expected:
            pooled_o += observed.get(key, 0)
            pooled_e += e
        else:
            obs.append(observed.get(key, 0))
            exp.append(e)
    if pooled_e > 0:
        obs.append(pooled_o)
        exp.append(pooled_e)
    if len(obs) < 2:
        return ChiSquareResult(0.0, 1.0, len(obs), 0)
    scale = sum(obs) / sum(exp)
    res = stats.chisquare(obs, [e * scale for e in exp])
    return ChiSquareResult(float(res.statistic), float(res.pvalue), len(obs), 0)
