"""Moment tables of the mark count and the polynomial martingale ingredients.

Every composition sum ``sum_{t_1+..+t_z=i} multinomial * prod c_{t_j}`` is
routed through :func:`markedgw.series.composition_sums`, so a rational law
yields rational tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial

from .errors import NotSubcritical, WrongCriticality
from .laws import MarkedGWLaw
from .series import DEFAULT_MAX_ORDER, check_order, composition_sums

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class _Table:
    values: tuple

    def __getitem__(self, i):
        return self.values[i]

    def __len__(self):
        return len(self.values)

    @property
    def L(self) -> int:
        return len(self.values) - 1

    @property
    def exact(self) -> bool:
        return all(isinstance(v, Fraction) for v in self.values)


@dataclass(frozen=True)
class XiTable(_Table):
    """Moments ``xi_j = E[M_inf^j]`` of the total number of marks (subcritical)."""


@dataclass(frozen=True)
class OmegaTable(_Table):
    """Supercritical growth constants: ``E[M_p^l] ~ mu^(l p) omega_l``.

    ``c_tilde[l]`` is the composition sum whose ratio to ``mu^l - mu`` gives
    ``omega_l`` (index 0 and 1 unused, kept for alignment).
    """

    c_tilde: tuple = ()


@dataclass(frozen=True)
class OmegaTildeTable(_Table):
    """Critical growth constants: ``E[M_p^l] ~ p^(2l-1) omega_tilde_l``."""

    d_tilde: tuple = ()


def _law_numbers(law: MarkedGWLaw, exact: bool | None):
    law.require_finite()
    if exact is None:
        exact = law.exact
    if exact and not law.exact:
        raise ValueError("exact arithmetic needs a law given by rationals")
    cast = (lambda v: v) if exact else float
    p = {k: cast(law.offspring[k]) for k in law.support}
    pq = {k: cast(law.offspring[k] * law.marks[k]) for k in law.support}
    one = Fraction(1) if exact else 1.0
    return p, pq, one


def _expect(weights: dict, g, zero):
    acc = zero
    for k, w in weights.items():
        if w:
            acc = acc + w * g(k)
    return acc


def xi_table(law: MarkedGWLaw, L: int, exact: bool | None = None) -> XiTable:
    """``xi_0..xi_L`` from the first-generation recursion (requires mean < 1).

    ``(1 - mu) xi_l = sum_{j<l} C(l,j) E[M_1 S_j(Z_1)] + E[S_l(Z_1) restricted to parts < l]``
    """
    if L < 1:
        raise ValueError("L must be at least 1")
    check_order(L, max(L, DEFAULT_MAX_ORDER))
    if not law.mean < 1:
        raise NotSubcritical(f"xi table needs a subcritical law, mean is {law.mean}")
    p, pq, one = _law_numbers(law, exact)
    mu = sum((k * w for k, w in p.items()), 0 * one)
    xi = [one]
    for ell in range(1, L + 1):
        c = xi + [0 * one]
        sums = {k: composition_sums(c, k, ell, max_part=ell - 1) for k in p}
        rhs = _expect(p, lambda k: sums[k][ell], 0 * one)
        for j in range(ell):
            rhs = rhs + comb(ell, j) * _expect(pq, lambda k: sums[k][j], 0 * one)
        xi.append(rhs / (one - mu))
    return XiTable(tuple(xi))


def xi_recursion_residual(law: MarkedGWLaw, xi: XiTable) -> float:
    """Largest absolute residual of the xi recursion over the table."""
    p, pq, one = _law_numbers(law, xi.exact and law.exact)
    mu = sum((k * w for k, w in p.items()), 0 * one)
    worst = 0.0
    for ell in range(1, xi.L + 1):
        c = list(xi.values[:ell]) + [0 * one]
        sums = {k: composition_sums(c, k, ell, max_part=ell - 1) for k in p}
        rhs = _expect(p, lambda k: sums[k][ell], 0 * one)
        for j in range(ell):
            rhs = rhs + comb(ell, j) * _expect(pq, lambda k: sums[k][j], 0 * one)
        worst = max(worst, abs(float((one - mu) * xi[ell] - rhs)))
    return worst


def f_ell_eval(xi: XiTable, ell: int, m, z: int):
    """Subcritical martingale state function ``f_l(m, z)``.

    ``f_l(m, z) = (1/xi_l) sum_i C(l,i) m^(l-i) S_i(z; xi)``; ``f_0 = 1`` and
    ``f_l(m, 0) = m^l / xi_l``.
    """
    if ell == 0:
        return xi[0] / xi[0]
    if ell > xi.L:
        raise ValueError(f"xi table only reaches order {xi.L}")
    sums = composition_sums(xi.values, z, ell)
    acc = 0 * xi[0]
    for i in range(ell + 1):
        acc = acc + comb(ell, i) * m ** (ell - i) * sums[i]
    return acc / xi[ell]


def moment_step(law_numbers, moments: list) -> list:
    """``E[M_{p+1}^j]`` for all j from the table of ``E[M_p^j]``."""
    p, pq, one = law_numbers
    L = len(moments) - 1
    sums = {k: composition_sums(moments, k, L) for k in p}
    out = [one]
    for ell in range(1, L + 1):
        acc = _expect(p, lambda k: sums[k][ell], 0 * one)
        for j in range(ell):
            acc = acc + comb(ell, j) * _expect(pq, lambda k: sums[k][j], 0 * one)
        out.append(acc)
    return out


def moment_sequence(law: MarkedGWLaw, p_max: int, L: int, exact: bool | None = None):
    """Yield ``(p, [E[M_p^0], ..., E[M_p^L]])`` for ``p = 0..p_max``."""
    numbers = _law_numbers(law, exact)
    one = numbers[2]
    table = [one] + [0 * one] * L
    yield 0, table
    for p in range(1, p_max + 1):
        table = moment_step(numbers, table)
        yield p, table


def moment_table(law: MarkedGWLaw, p: int, L: int, exact: bool | None = None) -> list:
    for _, table in moment_sequence(law, p, L, exact):
        pass
    return table


def moment_Mp_exact(law: MarkedGWLaw, p: int, ell: int, exact: bool | None = None):
    """``E[M_p^l]`` by iterating the first-generation decomposition ``p`` times."""
    check_order(ell, max(ell, DEFAULT_MAX_ORDER))
    return moment_table(law, p, ell, exact)[ell]


def conditional_moment(law: MarkedGWLaw, M_n, Z_n: int, p: int, ell: int,
                       exact: bool | None = None, moments: list | None = None):
    """``E[M_{n+p}^l | F_n]`` at the state ``(M_n, Z_n)``.

    Pass ``moments`` (the table of ``E[M_p^j]``, j <= l) to skip recomputing it.
    """
    if moments is None:
        moments = moment_table(law, p, ell, exact)
    sums = composition_sums(moments[: ell + 1], Z_n, ell)
    acc = 0 * moments[0]
    for j in range(ell + 1):
        acc = acc + comb(ell, j) * M_n ** (ell - j) * sums[j]
    return acc


def omega_table(law: MarkedGWLaw, L: int, exact: bool | None = None,
                check: bool = True) -> OmegaTable:
    """``check=False`` runs the recursion on any law (used for negative controls)."""
    if check and not law.mean > 1:
        raise WrongCriticality(f"omega table needs a supercritical law, mean is {law.mean}")
    p, pq, one = _law_numbers(law, exact)
    mu = sum((k * w for k, w in p.items()), 0 * one)
    omega = [one, _expect(pq, lambda k: one, 0 * one) / (mu - one)]
    c_tilde = [0 * one, 0 * one]
    for ell in range(2, L + 1):
        c = omega + [0 * one]
        c_l = _expect(p, lambda k: composition_sums(c, k, ell, max_part=ell - 1)[ell], 0 * one)
        c_tilde.append(c_l)
        omega.append(c_l / (mu ** ell - mu))
    return OmegaTable(tuple(omega[: L + 1]), tuple(c_tilde[: L + 1]))


def omega_tilde_table(law: MarkedGWLaw, L: int, exact: bool | None = None,
                      check: bool = True) -> OmegaTildeTable:
    if check and law.mean != 1:
        raise WrongCriticality(f"omega-tilde table needs a critical law, mean is {law.mean}")
    p, pq, one = _law_numbers(law, exact)
    half = one / 2
    pairs = _expect(p, lambda k: k * (k - 1) * half, 0 * one)  # E[Z_1 (Z_1 - 1) / 2]
    omega = [one, _expect(pq, lambda k: one, 0 * one)]
    d_tilde = [0 * one, 0 * one]
    for ell in range(2, L + 1):
        inner = sum((comb(ell, t1) * omega[t1] * omega[ell - t1] for t1 in range(1, ell)),
                    0 * one)
        d = pairs * inner
        d_tilde.append(d)
        omega.append(d / (2 * ell - 1))
    return OmegaTildeTable(tuple(omega[: L + 1]), tuple(d_tilde[: L + 1]))


def p_ell_eval(omega: OmegaTable, ell: int, z: int):
    """Supercritical martingale polynomial ``P_l(z) = S_l(z; omega) / omega_l``."""
    if ell > omega.L:
        raise ValueError(f"omega table only reaches order {omega.L}")
    return composition_sums(omega.values, z, ell)[ell] / omega[ell]


def hilbert_eval(ell: int, x):
    """``H_l(x) = x (x-1) ... (x-l+1) / l!`` with ``H_0 = 1``."""
    acc = 1
    for j in range(ell):
        acc = acc * (x - j)
    if isinstance(acc, int):
        return Fraction(acc, factorial(ell))
    return acc / factorial(ell)
