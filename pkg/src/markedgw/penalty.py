"""Penalization martingales, their fixed-point ingredients, and tilted node laws.

Each regime names one family of limiting martingales ``B_n``; a
:class:`Penalty` precomputes whatever the family needs (moment tables,
``kappa(s)``, ``f_s'(kappa)``, ...) and evaluates ``B_n`` on a state
``(n, Z_n, M_n)``.  Regimes whose ingredients are rational keep exact
``Fraction`` weights; the others work in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from math import comb

from .errors import (
    InconsistentMasses,
    NotNormalizable,
    RegimeMismatch,
    TooManyTypeVectors,
)
from .laws import MarkedGWLaw, gf_coefficients, log_gf, poly_derivs, reproduction_mark_prob
from .moments import (
    XiTable,
    f_ell_eval,
    omega_table,
    p_ell_eval,
    xi_table,
)
from .series import compositions, count_compositions, multinomial

KAPPA_TOL = 1e-14
KAPPA_MAX_ITER = 200
TYPE_VECTOR_CAP = 10**6
NORMALIZATION_TOL = 1e-9


# -- regimes -------------------------------------------------------------------

@dataclass(frozen=True)
class PolySub:
    """Weight ``f_l(M_n, Z_n)`` (subcritical)."""
    ell: int = 1
    tag = "poly-sub"


@dataclass(frozen=True)
class PolyCrit:
    """Weight ``Z_n`` (critical)."""
    ell: int = 1
    tag = "poly-crit"


@dataclass(frozen=True)
class PolySuper:
    """Weight ``P_l(Z_n) / mu^(l n)`` (supercritical)."""
    ell: int = 1
    tag = "poly-super"


@dataclass(frozen=True)
class ExpoPositive:
    """``s^M kappa^(Z-1)`` for l = 0, ``s^M Z kappa^(Z-1) / f_s'(kappa)^n`` for l >= 1; needs p(0) > 0."""
    s: object
    ell: int = 0
    tag = "expo"


@dataclass(frozen=True)
class ExpoRary:
    """Weight concentrated on the regular r-ary tree; needs p(0) = 0."""
    s: object
    ell: int = 0
    tag = "expo-rary"


@dataclass(frozen=True)
class ExpoZero:
    """``s = 0`` analogue of :class:`ExpoPositive`; needs an unmarked leaf to be possible."""
    ell: int = 0
    tag = "zero-mark"


@dataclass(frozen=True)
class ExpoZeroRary:
    """``s = 0`` weight concentrated on the unmarked regular tree of degree r-tilde >= 1."""
    ell: int = 0
    tag = "zero-mark-rary"


REGIME_TAGS = {
    cls.tag: cls
    for cls in (PolySub, PolyCrit, PolySuper, ExpoPositive, ExpoRary, ExpoZero, ExpoZeroRary)
}


def regime_from_tag(tag: str, ell: int | None = None, s=None):
    try:
        cls = REGIME_TAGS[tag]
    except KeyError:
        raise ValueError(f"unknown regime {tag!r}; choose from {sorted(REGIME_TAGS)}") from None
    kwargs = {}
    if ell is not None:
        kwargs["ell"] = ell
    if cls in (ExpoPositive, ExpoRary):
        if s is None:
            raise ValueError(f"regime {tag!r} needs a value for s")
        return cls(s, **kwargs)
    if s is not None:
        raise ValueError(f"regime {tag!r} does not take s")
    return cls(**kwargs)


# -- fixed points ----------------------------------------------------------------

def _float_poly(law: MarkedGWLaw, s) -> dict:
    return {k: float(c) for k, c in gf_coefficients(law, s).items()}


def _eval_poly(coeffs: dict, t: float) -> float:
    return math.fsum(c * t**k for k, c in coeffs.items())


def kappa_solve(law: MarkedGWLaw, s, zero_mark_mode: bool = False) -> float:
    """Fixed point of ``f_s`` in [0, 1] (of ``psi`` in zero-mark mode) by bisection.

    ``f_s(0) >= 0`` and ``f_s(1) < 1`` bracket a unique root since ``f_s`` is
    convex.  Returns 0 when the function vanishes at 0 (no root in (0, 1]).
    """
    if zero_mark_mode:
        s = 0
    elif not 0 <= s < 1:
        raise ValueError(f"s must lie in [0, 1), got {s}")
    coeffs = _float_poly(law, s)
    if coeffs.get(0, 0.0) == 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(KAPPA_MAX_ITER):
        mid = 0.5 * (lo + hi)
        gap = _eval_poly(coeffs, mid) - mid
        if gap > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 2 * math.ulp(hi) or (abs(gap) <= KAPPA_TOL and hi - lo < 1e-15):
            break
    return 0.5 * (lo + hi)


def gf_derivative(law: MarkedGWLaw, s, t) -> float:
    """``f_s'(t)``, from the polynomial coefficients."""
    return poly_derivs(_float_poly(law, s), float(t), 1)[1]


def kappa_and_derivative(law: MarkedGWLaw, s, zero_mark_mode: bool = False):
    k = kappa_solve(law, s, zero_mark_mode)
    return k, gf_derivative(law, 0 if zero_mark_mode else s, k)


def alpha_r(law: MarkedGWLaw, s, r: int):
    """``p(r) (s q(r) + 1 - q(r))``, the chance a node has r children, weighted by s per mark."""
    return law.p(r) * (s * law.q(r) + 1 - law.q(r))


# -- weights ---------------------------------------------------------------------

def _log(x) -> float:
    if x == 0:
        return -math.inf
    if isinstance(x, Fraction):
        return math.log(x.numerator) - math.log(x.denominator)
    return math.log(x)


@dataclass(frozen=True)
class GirsanovWeight:
    regime: object
    n: int
    log_value: float
    exact_value: Fraction | None = None

    @property
    def value(self):
        if self.exact_value is not None:
            return self.exact_value
        if self.log_value == -math.inf:
            return 0.0
        # past the double range only log_value stays meaningful
        return math.exp(self.log_value) if self.log_value < 709.0 else math.inf


def _is_exact(x) -> bool:
    return isinstance(x, (int, Fraction)) and not isinstance(x, bool)


class Penalty:
    """Precomputed tables for one regime on one law.

    Construction checks admissibility and raises :class:`RegimeMismatch` when
    the law cannot carry the regime.
    """

    def __init__(self, regime, law: MarkedGWLaw, exact: bool | None = None):
        law.require_finite()
        self.regime = regime
        self.law = law
        exact = law.exact if exact is None else exact and law.exact
        self.exact = exact
        cls = type(regime)
        if cls is PolySub:
            if not law.mean < 1:
                raise RegimeMismatch("poly-sub needs a subcritical law")
            if regime.ell < 1:
                raise RegimeMismatch("poly-sub needs ell >= 1")
            self.xi = xi_table(law, regime.ell, exact=exact)
        elif cls is PolyCrit:
            if law.mean != 1:
                raise RegimeMismatch("poly-crit needs a critical law")
        elif cls is PolySuper:
            if not law.mean > 1:
                raise RegimeMismatch("poly-super needs a supercritical law")
            self.omega = omega_table(law, regime.ell, exact=exact)
            self.mu = law.mean if exact else float(law.mean)
        elif cls is ExpoPositive:
            self._check_s(regime.s)
            if law.p(0) == 0:
                raise RegimeMismatch("expo needs p(0) > 0; use expo-rary")
            self.exact = False
            self.kappa, self.fprime = kappa_and_derivative(law, regime.s)
            self.log_s = _log(regime.s)
        elif cls is ExpoRary:
            self._check_s(regime.s)
            if law.p(0) != 0:
                raise RegimeMismatch("expo-rary needs p(0) = 0")
            self.r = law.bounds.r
            self.exact = exact and _is_exact(regime.s)
            self.alpha = alpha_r(law, regime.s if self.exact else float(regime.s), self.r)
        elif cls is ExpoZero:
            if law.bounds.r_tilde != 0:
                raise RegimeMismatch("zero-mark needs p(0)(1 - q(0)) > 0")
            self.exact = False
            self.kappa, self.fprime = kappa_and_derivative(law, 0, zero_mark_mode=True)
            if regime.ell > 0 and self.fprime <= 0:
                raise RegimeMismatch(
                    "zero-mark with ell >= 1 needs an unmarked node with children to be possible"
                )
        elif cls is ExpoZeroRary:
            rt = law.bounds.r_tilde
            if rt is None or rt < 1:
                raise RegimeMismatch("zero-mark-rary needs r-tilde >= 1")
            self.r = rt
            base = reproduction_mark_prob(law, rt, 0)
            self.base = base if exact else float(base)
        else:
            raise RegimeMismatch(f"unknown regime {regime!r}")

    @staticmethod
    def _check_s(s):
        if not 0 < s < 1:
            raise RegimeMismatch(f"s must lie in (0, 1), got {s}")

    def weight(self, n: int, Z: int, M):
        """``B_n`` at the state; a ``Fraction`` in exact mode, else a float."""
        return self.girsanov(n, Z, M).value

    def girsanov(self, n: int, Z: int, M) -> GirsanovWeight:
        reg = self.regime
        cls = type(reg)
        if cls is PolySub:
            return self._exact_or_float(n, f_ell_eval(self.xi, reg.ell, M, Z))
        if cls is PolyCrit:
            return self._exact_or_float(n, Fraction(Z) if self.exact else float(Z))
        if cls is PolySuper:
            return self._exact_or_float(n, p_ell_eval(self.omega, reg.ell, Z) / self.mu ** (reg.ell * n))
        if cls is ExpoPositive:
            return self._expo(n, Z, M, self.log_s, reg.ell)
        if cls is ExpoZero:
            if M != 0:
                return GirsanovWeight(reg, n, -math.inf)
            return self._expo(n, Z, 0, 0.0, reg.ell)
        if cls is ExpoRary:
            target = self.r**n
            if Z != target:
                return self._exact_or_float(n, 0 * self.alpha)
            power = n if self.r == 1 else (self.r**n - 1) // (self.r - 1)
            if self.exact:
                return self._exact_or_float(n, Fraction(reg.s) ** M / self.alpha**power)
            log_w = M * _log(float(reg.s)) - power * _log(self.alpha)
            return GirsanovWeight(reg, n, log_w)
        if cls is ExpoZeroRary:
            if M != 0 or Z != self.r**n:
                return self._exact_or_float(n, 0 * self.base)
            power = n if self.r == 1 else (self.r**n - 1) // (self.r - 1)
            if self.exact:
                return self._exact_or_float(n, 1 / self.base**power)
            return GirsanovWeight(reg, n, -power * _log(self.base))
        raise RegimeMismatch(f"unknown regime {reg!r}")

    def _exact_or_float(self, n, value) -> GirsanovWeight:
        if isinstance(value, Fraction):
            return GirsanovWeight(self.regime, n, _log(value), value)
        return GirsanovWeight(self.regime, n, _log(float(value)))

    def _expo(self, n, Z, M, log_s, ell) -> GirsanovWeight:
        # s^M kappa^(Z-1) [Z / f'(kappa)^n]
        log_w = (M * log_s if M else 0.0) + (Z - 1) * math.log(self.kappa)
        if ell > 0:
            if Z == 0:
                return GirsanovWeight(self.regime, n, -math.inf)
            log_w += math.log(Z) - n * math.log(self.fprime)
        return GirsanovWeight(self.regime, n, log_w)


def girsanov_weight(regime, law: MarkedGWLaw, state, tables: Penalty | None = None) -> GirsanovWeight:
    """Martingale density ``B_n`` of ``regime`` at ``state = (n, Z_n, M_n)``."""
    if tables is None:
        tables = Penalty(regime, law)
    elif tables.regime != regime:
        raise RegimeMismatch("tables were prepared for a different regime")
    n, Z, M = state
    return tables.girsanov(n, Z, M)


# -- type vectors ----------------------------------------------------------------

@dataclass(frozen=True)
class TypeDistribution:
    vectors: tuple
    probs: tuple

    def __iter__(self):
        return iter(zip(self.vectors, self.probs))

    def total(self):
        return sum(self.probs)


def node_type_weight(xi: XiTable, t: int, m):
    """``f_t(m, 1) xi_t = sum_j C(t, j) m^(t-j) xi_j``."""
    acc = 0 * xi[0]
    for j in range(t + 1):
        acc = acc + comb(t, j) * m ** (t - j) * xi[j]
    return acc


def gamma_type_distribution(xi: XiTable, ell: int, generation_nodes, M_n, Z_n: int,
                            cap: int = TYPE_VECTOR_CAP) -> TypeDistribution:
    """Joint law of the types of one generation of the weighted tree.

    ``generation_nodes`` lists ``(word, mass)`` in generation order; vectors are
    aligned with that order and sum to ``ell``.
    """
    if Z_n < 1 or len(generation_nodes) != Z_n:
        raise InconsistentMasses(f"expected {Z_n} >= 1 nodes, got {len(generation_nodes)}")
    masses = [m for _, m in generation_nodes]
    total = sum(masses, 0 * masses[0])
    if isinstance(total, Fraction) and isinstance(M_n, (int, Fraction)):
        consistent = total == M_n
    else:
        consistent = abs(float(total) - float(M_n)) <= 1e-9 * max(1.0, float(M_n))
    if not consistent:
        raise InconsistentMasses(f"masses sum to {total}, expected M_n = {M_n}")
    n_vectors = count_compositions(ell, Z_n)
    if n_vectors > cap:
        raise TooManyTypeVectors(f"{n_vectors} type vectors exceed the cap {cap}")
    g = [[node_type_weight(xi, t, m) for t in range(ell + 1)] for m in masses]
    norm = xi[ell] * f_ell_eval(xi, ell, M_n, Z_n)
    vectors, probs = [], []
    for t in compositions(ell, Z_n):
        w = multinomial(t)
        for u, tu in enumerate(t):
            if tu:
                w = w * g[u][tu]
        # type-0 factors are f_0 xi_0 = 1
        vectors.append(t)
        probs.append(w / norm)
    return TypeDistribution(tuple(vectors), tuple(probs))


# -- tilted node laws ------------------------------------------------------------

class NodeLawKind(Enum):
    BASE = "base"
    TYPED = "typed"
    EXPO_NORMAL = "expo-normal"
    EXPO_SPINE = "expo-spine"
    ZERO_NORMAL = "zero-normal"
    ZERO_SPINE = "zero-spine"
    RARY = "rary"


@dataclass(frozen=True)
class TiltedNodeLaw:
    kind: NodeLawKind
    probs: dict  # (k, eta) -> probability, nonzero atoms only

    def __getitem__(self, key):
        return self.probs.get(key, 0)

    def items(self):
        return self.probs.items()

    def total(self):
        return sum(self.probs.values())


def tilted_node_law(kind, law: MarkedGWLaw, **params) -> TiltedNodeLaw:
    """Reproduction-marking law of one node of a tilted tree.

    Parameters by kind: ``typed`` needs ``xi``, ``i`` and ``mass``;
    ``expo-normal`` needs ``s`` and ``kappa``; ``expo-spine`` additionally
    ``fprime``; ``zero-normal`` needs ``kappa``; ``zero-spine`` needs ``kappa``
    and ``fprime``; ``rary`` needs ``s`` and ``r``.
    """
    kind = NodeLawKind(kind)
    probs = {}
    if kind is NodeLawKind.BASE or (kind is NodeLawKind.TYPED and params["i"] == 0):
        probs = dict(law.pairs())
        kind = NodeLawKind.BASE if kind is NodeLawKind.BASE else kind
    elif kind is NodeLawKind.TYPED:
        xi, i, m = params["xi"], params["i"], params["mass"]
        denom = f_ell_eval(xi, i, m, 1)
        for (k, eta), w in law.pairs():
            probs[(k, eta)] = w * f_ell_eval(xi, i, m + eta, k) / denom
    elif kind in (NodeLawKind.EXPO_NORMAL, NodeLawKind.EXPO_SPINE,
                  NodeLawKind.ZERO_NORMAL, NodeLawKind.ZERO_SPINE):
        zero = kind in (NodeLawKind.ZERO_NORMAL, NodeLawKind.ZERO_SPINE)
        s = 0.0 if zero else float(params["s"])
        kappa = float(params["kappa"])
        spine = kind in (NodeLawKind.EXPO_SPINE, NodeLawKind.ZERO_SPINE)
        for (k, eta), w in law.pairs():
            if zero and eta:
                continue
            if spine and k == 0:
                continue
            v = float(w) * (s if eta else 1.0)
            if k != 1:
                v *= kappa ** (k - 1)
            if spine:
                v *= k / float(params["fprime"])
            if v:
                probs[(k, eta)] = v
    elif kind is NodeLawKind.RARY:
        s, r = params["s"], params["r"]
        qr = law.q(r)
        denom = s * qr + 1 - qr
        if not law.p(r) or not denom:
            raise NotNormalizable(f"out-degree {r} cannot carry the r-ary law")
        pm = s * qr / denom
        probs = {(r, 1): pm, (r, 0): 1 - pm}
        probs = {key: v for key, v in probs.items() if v}
    total = sum(probs.values())
    if isinstance(total, Fraction):
        ok = total == 1
    else:
        ok = abs(float(total) - 1.0) <= NORMALIZATION_TOL
    if not ok:
        raise NotNormalizable(f"{kind.value} law sums to {total}")
    return TiltedNodeLaw(kind, probs)


# -- b exponent ------------------------------------------------------------------

B_EXPONENT_TOL = 1e-14
B_EXPONENT_MAX_TERMS = 10_000


def log_iterate(law: MarkedGWLaw, s, t: float, p: int, shift: int | None = None) -> float:
    """``ln f_s^p(t)`` computed in log space (safe when the iterate underflows)."""
    r = law.bounds.r if shift is None else shift
    x = math.log(t)
    for _ in range(p):
        x = r * x + log_gf(law, s, x, shift=r)
    return x


def b_exponent(law: MarkedGWLaw, s, t: float) -> float:
    """``b(t) = ln t + sum_j r^-(j+1) ln(f_s^(j+1)(t) / f_s^j(t)^r)`` for p(0) = 0, r >= 2."""
    law.require_finite()
    r = law.bounds.r
    if law.p(0) != 0 or r < 2:
        raise RegimeMismatch("b exponent needs p(0) = 0 and r >= 2")
    if not 0 < s < 1:
        raise RegimeMismatch(f"s must lie in (0, 1), got {s}")
    if not 0 < t <= 1:
        raise ValueError(f"t must lie in (0, 1], got {t}")
    x = math.log(t)
    total = x
    scale = 1.0
    for _ in range(B_EXPONENT_MAX_TERMS):
        d = log_gf(law, s, x, shift=r)  # ln f(e^x) - r x
        scale /= r
        inc = scale * d
        total += inc
        x = r * x + d
        if abs(inc) < B_EXPONENT_TOL:
            break
    return total


class TypedLaws:
    """Memoized typed node laws and gamma laws for the weighted multitype tree.

    The sampler and the oracle both go through this object, so the tilted
    probabilities they use cannot drift apart.
    """

    def __init__(self, law: MarkedGWLaw, xi: XiTable, ell: int, cap: int = TYPE_VECTOR_CAP):
        if ell < 1 or ell > xi.L:
            raise ValueError(f"ell must lie in [1, {xi.L}]")
        self.law, self.xi, self.ell, self.cap = law, xi, ell, cap
        self._nodes: dict = {}
        self._gammas: dict = {}

    def node_law(self, t: int, mass) -> TiltedNodeLaw:
        key = (t, mass)
        hit = self._nodes.get(key)
        if hit is None:
            hit = tilted_node_law(NodeLawKind.TYPED, self.law, xi=self.xi, i=t, mass=mass)
            self._nodes[key] = hit
        return hit

    def gamma(self, masses: tuple, M_n) -> TypeDistribution:
        key = (masses, M_n)
        hit = self._gammas.get(key)
        if hit is None:
            nodes = [(i, m) for i, m in enumerate(masses)]
            hit = gamma_type_distribution(self.xi, self.ell, nodes, M_n, len(masses), self.cap)
            self._gammas[key] = hit
        return hit

    def generation_probability(self, masses: tuple, M_n, pairs) -> object:
        """``sum_t gamma(t) prod_u p_{t_u}(k_u, eta_u | m_u)`` for one generation."""
        acc = 0
        for vec, g in self.gamma(masses, M_n):
            term = g
            for t, m, pair in zip(vec, masses, pairs):
                term = term * self.node_law(t, m)[pair]
                if not term:
                    break
            acc = acc + term
        return acc


def spine_node_laws(law: MarkedGWLaw, s=None, zero_mark: bool = False, special: bool = True):
    """``(normal, special)`` node laws of the spine tree, for s in (0, 1) or s = 0.

    With ``special=False`` the second entry is ``None``; the normal law alone
    describes the tilted tree of the ``ell = 0`` weights.
    """
    if zero_mark:
        if law.bounds.r_tilde != 0:
            raise RegimeMismatch("zero-mark tilted tree needs p(0)(1 - q(0)) > 0")
        kappa, fprime = kappa_and_derivative(law, 0, zero_mark_mode=True)
        normal = tilted_node_law(NodeLawKind.ZERO_NORMAL, law, kappa=kappa)
        if not special:
            return normal, None
        if fprime <= 0:
            raise RegimeMismatch("zero-mark spine law is not normalizable for this law")
        return normal, tilted_node_law(NodeLawKind.ZERO_SPINE, law, kappa=kappa, fprime=fprime)
    if s is None or not 0 < s < 1:
        raise RegimeMismatch(f"s must lie in (0, 1), got {s}")
    if law.p(0) == 0:
        raise RegimeMismatch("exponential tilted tree needs p(0) > 0")
    kappa, fprime = kappa_and_derivative(law, s)
    normal = tilted_node_law(NodeLawKind.EXPO_NORMAL, law, s=s, kappa=kappa)
    if not special:
        return normal, None
    return normal, tilted_node_law(NodeLawKind.EXPO_SPINE, law, s=s, kappa=kappa, fprime=fprime)
