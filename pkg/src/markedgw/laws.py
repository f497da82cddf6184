"""Marked reproduction laws and their generating functions.

A law couples an offspring distribution ``p`` with a mark function ``q``:
a node with ``k`` children is marked with probability ``q(k)``.  Finite laws
given as rationals (``Fraction``) stay exact through every downstream
computation; floats switch the package to double precision.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Callable, Mapping

from .errors import (
    Degenerate,
    InvalidLaw,
    NoMarkPossible,
    NotAProbability,
    UnsupportedInfiniteSupport,
)
from .series import DEFAULT_MAX_ORDER, check_order, compose_jet
from .tree import MarkedTree

PROB_TOL = 1e-12


def parse_number(value):
    """Accept ints, Fractions, floats, or strings like ``"3/5"`` and ``"0.6"``."""
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, float):
        return value
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise InvalidLaw(f"cannot parse probability {value!r}") from None
    if isinstance(value, Real):
        return float(value)
    raise InvalidLaw(f"cannot parse probability {value!r}")


@dataclass(frozen=True)
class DegreeBounds:
    r: int
    r_tilde: int | None  # None when no out-degree can be left unmarked


@dataclass(frozen=True)
class MarkedGWLaw:
    """Validated reproduction-marking law.

    For finite laws ``offspring`` and ``marks`` are dicts over the support.
    Infinite laws (sampling only) keep a frozen scipy distribution in
    ``dist`` and a callable in ``mark_fn``.
    """

    offspring: Mapping[int, object]
    marks: Mapping[int, object]
    mean: object
    bounds: DegreeBounds
    dist: object = None
    mark_fn: Callable | None = field(default=None, compare=False)

    @property
    def finite(self) -> bool:
        return self.dist is None

    @property
    def exact(self) -> bool:
        return self.finite and all(
            isinstance(v, Fraction) for v in (*self.offspring.values(), *self.marks.values())
        )

    @property
    def support(self) -> tuple:
        self.require_finite()
        return tuple(self.offspring)

    @property
    def max_degree(self) -> int:
        return max(self.support)

    @property
    def criticality(self) -> str:
        if self.mean < 1:
            return "subcritical"
        if self.mean == 1:
            return "critical"
        return "supercritical"

    def require_finite(self) -> None:
        if not self.finite:
            raise UnsupportedInfiniteSupport("this operation needs a finite-support law")

    def p(self, k: int):
        if self.dist is not None:
            return float(self.dist.pmf(k))
        return self.offspring.get(k, 0)

    def q(self, k: int):
        if self.dist is not None:
            return float(self.mark_fn(k))
        return self.marks.get(k, 0)

    def pairs(self) -> list:
        """``[((k, eta), prob)]`` over the nonzero atoms of the reproduction-marking law."""
        self.require_finite()
        out = []
        for k in self.support:
            for eta in (0, 1):
                w = reproduction_mark_prob(self, k, eta)
                if w:
                    out.append(((k, eta), w))
        return out

    def mark_mean(self):
        """``E[M_1] = sum_k p(k) q(k)``."""
        self.require_finite()
        return sum((self.offspring[k] * self.marks[k] for k in self.support), self._zero())

    def _zero(self):
        return Fraction(0) if self.exact else 0.0

    def one(self):
        return Fraction(1) if self.exact else 1.0

    def fingerprint(self) -> str:
        if not self.finite:
            return f"dist:{self.dist!r}"
        items = [(k, str(self.offspring[k]), str(self.marks[k])) for k in self.support]
        return json.dumps(items)

    def to_json(self) -> dict:
        self.require_finite()
        return {
            "p": {str(k): str(v) for k, v in self.offspring.items()},
            "q": {str(k): str(v) for k, v in self.marks.items()},
        }


def _bounds(support_p, q) -> DegreeBounds:
    r = min(k for k, pk in support_p if pk > 0)
    unmarked = [k for k, pk in support_p if pk * (1 - q(k)) > 0]
    return DegreeBounds(r=r, r_tilde=min(unmarked) if unmarked else None)


def validate_law(offspring, mark_fn, *, allow_infinite: bool = False) -> MarkedGWLaw:
    """Build a :class:`MarkedGWLaw`, checking non-degeneracy and that marks can occur.

    ``offspring`` maps out-degrees to probabilities.  ``mark_fn`` is a mapping
    over the support, a single number (constant mark function), or a callable.
    With ``allow_infinite=True`` a frozen ``scipy.stats`` discrete distribution
    is also accepted; such laws only support sampling.
    """
    if hasattr(offspring, "pmf"):
        if not allow_infinite:
            raise UnsupportedInfiniteSupport("distribution objects need allow_infinite=True")
        return _validate_infinite(offspring, mark_fn)

    if not isinstance(offspring, Mapping) or not offspring:
        raise NotAProbability("offspring law must be a nonempty mapping")
    p = {}
    for k, v in offspring.items():
        k = int(k)
        if k < 0:
            raise NotAProbability(f"negative out-degree {k}")
        v = parse_number(v)
        if v < 0:
            raise NotAProbability(f"p({k}) = {v} is negative")
        if v > 0:
            p[k] = p.get(k, 0) + v
    total = sum(p.values())
    exact = all(isinstance(v, Fraction) for v in p.values())
    if exact and total != 1 or not exact and abs(total - 1) > PROB_TOL:
        raise NotAProbability(f"offspring probabilities sum to {total}, not 1")
    if not exact:
        p = {k: float(v) / float(total) for k, v in p.items()}
    p = dict(sorted(p.items()))

    q = {}
    for k in p:
        if callable(mark_fn):
            qk = mark_fn(k)
        elif isinstance(mark_fn, Mapping):
            if k in mark_fn:
                qk = mark_fn[k]
            elif str(k) in mark_fn:
                qk = mark_fn[str(k)]
            else:
                raise InvalidLaw(f"mark function undefined at out-degree {k}")
        else:
            qk = mark_fn
        qk = parse_number(qk)
        if not 0 <= qk <= 1:
            raise NotAProbability(f"q({k}) = {qk} is outside [0, 1]")
        q[k] = qk
    if not exact or not all(isinstance(v, Fraction) for v in q.values()):
        p = {k: float(v) for k, v in p.items()}
        q = {k: float(v) for k, v in q.items()}

    if p.get(0, 0) + p.get(1, 0) >= 1:
        raise Degenerate("p(0) + p(1) must be < 1")
    if not any(p[k] * q[k] > 0 for k in p):
        raise NoMarkPossible("no out-degree is marked with positive probability")
    mean = sum((k * v for k, v in p.items()), Fraction(0) if exact else 0.0)
    bounds = _bounds(p.items(), q.__getitem__)
    return MarkedGWLaw(p, q, mean, bounds)


def _validate_infinite(dist, mark_fn) -> MarkedGWLaw:
    if isinstance(mark_fn, Mapping):
        table = {int(k): float(parse_number(v)) for k, v in mark_fn.items()}
        fn = lambda k: table.get(int(k), 0.0)  # noqa: E731
    elif callable(mark_fn):
        fn = mark_fn
    else:
        c = float(parse_number(mark_fn))
        fn = lambda k: c  # noqa: E731
    mean = float(dist.mean())
    if not math.isfinite(mean):
        raise Degenerate("offspring law needs a finite mean")
    if float(dist.pmf(0)) + float(dist.pmf(1)) >= 1:
        raise Degenerate("p(0) + p(1) must be < 1")
    kmax = int(dist.ppf(1 - 1e-12))
    scan = [(k, float(dist.pmf(k))) for k in range(kmax + 1)]
    if not any(pk * fn(k) > 0 for k, pk in scan):
        raise NoMarkPossible("no out-degree is marked with positive probability")
    return MarkedGWLaw({}, {}, mean, _bounds(scan, fn), dist=dist, mark_fn=fn)


def load_law(path) -> MarkedGWLaw:
    """Read ``{"p": {...}, "q": {...}}``; probabilities as decimals or ``a/b`` strings."""
    with open(path) as fh:
        data = json.load(fh)
    return law_from_json(data)


def law_from_json(data: dict) -> MarkedGWLaw:
    if not isinstance(data, dict) or "p" not in data or "q" not in data:
        raise InvalidLaw('law file must hold an object with keys "p" and "q"')
    to_exact = lambda v: Fraction(v) if isinstance(v, int) else (  # noqa: E731
        Fraction(str(v)) if isinstance(v, float) else v)
    p = {k: to_exact(v) for k, v in data["p"].items()}
    q = data["q"]
    q = {k: to_exact(v) for k, v in q.items()} if isinstance(q, dict) else to_exact(q)
    return validate_law(p, q)


def reproduction_mark_prob(law: MarkedGWLaw, k: int, eta: int):
    """Probability that a node has ``k`` children and mark ``eta``."""
    pk = law.p(k)
    qk = law.q(k) if pk else 0
    return pk * qk if eta else pk * (1 - qk)


def truncated_tree_probability(law: MarkedGWLaw, tree: MarkedTree):
    """Probability that the restriction of a law-``law`` tree equals ``tree``."""
    prob = law.one()
    for u, (k, eta) in tree.nodes.items():
        if len(u) < tree.height:
            prob = prob * reproduction_mark_prob(law, k, eta)
            if not prob:
                return prob
    return prob


# -- generating functions ------------------------------------------------------

def gf_coefficients(law: MarkedGWLaw, s) -> dict:
    """Coefficients of ``f_s(t) = E[s^{M_1} t^{Z_1}]`` as a polynomial in t."""
    law.require_finite()
    return {k: law.offspring[k] * (s * law.marks[k] + 1 - law.marks[k]) for k in law.support}


def poly_derivs(coeffs: Mapping, x, order: int) -> list:
    """``[P(x), P'(x), ..., P^(order)(x)]`` for a polynomial given by its coefficients."""
    out = []
    for i in range(order + 1):
        acc = 0
        for k, c in coeffs.items():
            if k >= i and c:
                falling = math.perm(k, i)
                acc = acc + c * falling * (x ** (k - i) if k > i else 1)
        out.append(acc)
    return out


def iterate_jet(law: MarkedGWLaw, s, t, iterate_p: int, order: int,
                max_order: int = DEFAULT_MAX_ORDER) -> list:
    """Derivatives ``0..order`` of the p-fold iterate of ``f_s`` at ``t``."""
    check_order(order, max_order)
    coeffs = gf_coefficients(law, s)
    jet = [t, 1] + [0] * (order - 1) if order >= 1 else [t]
    for _ in range(iterate_p):
        jet = compose_jet(poly_derivs(coeffs, jet[0], order), jet)
    return jet


def gen_fn_eval(law: MarkedGWLaw, s, t, iterate_p: int = 1, order: int = 0,
                zero_mark_mode: bool = False, max_order: int = DEFAULT_MAX_ORDER):
    """``order``-th derivative of the ``iterate_p``-fold iterate of ``f_s`` at ``t``.

    In ``zero_mark_mode`` the function iterated is ``psi(t) = E[1{M_1=0} t^{Z_1}]``,
    which is ``f_s`` at ``s = 0``.
    """
    if zero_mark_mode:
        s = 0
    return iterate_jet(law, s, t, iterate_p, order, max_order)[order]


def log_gf(law: MarkedGWLaw, s, x: float, shift: int = 0) -> float:
    """``ln f_s(e^x) - shift * x`` evaluated without leaving log space.

    With ``shift = r`` (the smallest out-degree) every exponent ``(k - r) x`` is
    nonpositive for ``x <= 0``, so tiny arguments neither underflow nor cancel.
    """
    terms = [
        math.log(float(c)) + (k - shift) * x
        for k, c in gf_coefficients(law, s).items()
        if c > 0
    ]
    top = max(terms)
    return top + math.log(math.fsum(math.exp(v - top) for v in terms))
