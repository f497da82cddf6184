"""Truncated exponential series and Faà di Bruno coefficient tables.

Both the moment recursions and the generating-function jets reduce to sums
over compositions or partitions of a small integer.  The helpers here work
on plain Python numbers, so ``Fraction`` inputs give exact results.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import comb, factorial

from .errors import OrderTooLarge

DEFAULT_MAX_ORDER = 6


def _scale(x, n: int):
    # int / int would silently drop to float
    return Fraction(x, n) if isinstance(x, int) else x / n


def _mul_trunc(a: list, b: list, L: int) -> list:
    out = [0] * (L + 1)
    for i, ai in enumerate(a):
        if not ai:
            continue
        for j in range(L + 1 - i):
            bj = b[j]
            if bj:
                out[i + j] = out[i + j] + ai * bj
    return out


def _pow_trunc(a: list, z: int, L: int) -> list:
    result = [1] + [0] * L
    base = list(a)
    while z:
        if z & 1:
            result = _mul_trunc(result, base, L)
        z >>= 1
        if z:
            base = _mul_trunc(base, base, L)
    return result


def composition_sums(c, z: int, L: int, max_part: int | None = None) -> list:
    """``S_i = sum over t_1+..+t_z = i of multinomial(i; t) * prod c[t_j]`` for i <= L.

    Evaluated as ``i! [x^i] (sum_j c_j x^j / j!)^z``.  Parts larger than
    ``max_part`` are excluded.  ``z = 0`` gives the empty composition only.
    """
    top = L if max_part is None else min(L, max_part)
    egf = [_scale(c[j], factorial(j)) if j <= top else 0 for j in range(L + 1)]
    powered = _pow_trunc(egf, z, L)
    return [powered[i] * factorial(i) for i in range(L + 1)]


def composition_sums_naive(c, z: int, L: int, max_part: int | None = None) -> list:
    """Direct enumeration of the same sums, for cross-checking."""
    out = [0] * (L + 1)
    for i in range(L + 1):
        for t in compositions(i, z):
            if max_part is not None and any(tj > max_part for tj in t):
                continue
            term = multinomial(t)
            for tj in t:
                term = term * c[tj]
            out[i] = out[i] + term
    return out


def compositions(total: int, parts: int):
    """All ordered tuples of ``parts`` nonnegative integers summing to ``total``."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in compositions(total - first, parts - 1):
            yield (first,) + rest


def count_compositions(total: int, parts: int) -> int:
    if parts == 0:
        return 1 if total == 0 else 0
    return comb(total + parts - 1, parts - 1)


def multinomial(t) -> int:
    out = factorial(sum(t))
    for tj in t:
        out //= factorial(tj)
    return out


def _partitions(n: int, largest: int):
    if n == 0:
        yield ()
        return
    for first in range(min(n, largest), 0, -1):
        for rest in _partitions(n - first, first):
            yield (first,) + rest


@lru_cache(maxsize=None)
def bell_table(n: int) -> tuple:
    """Faà di Bruno terms for the n-th derivative of a composition.

    Each entry is ``(k, coeff, mults)``: ``k`` blocks, integer coefficient
    ``n! / prod(m_j! (j!)^m_j)``, and ``mults[j-1] = m_j`` the number of
    blocks of size ``j``.  Then ``(f o h)^(n) = sum coeff * f^(k)(h) * prod h^(j)^m_j``.
    """
    rows = []
    for part in _partitions(n, n):
        mults = [0] * n
        for size in part:
            mults[size - 1] += 1
        denom = 1
        for j, m in enumerate(mults, start=1):
            denom *= factorial(m) * factorial(j) ** m
        rows.append((len(part), factorial(n) // denom, tuple(mults)))
    return tuple(rows)


BELL_TABLES = tuple(bell_table(n) for n in range(DEFAULT_MAX_ORDER + 1))


def check_order(order: int, max_order: int = DEFAULT_MAX_ORDER) -> None:
    if order < 0:
        raise ValueError("derivative order must be nonnegative")
    if order > max_order:
        raise OrderTooLarge(f"order {order} exceeds the configured maximum {max_order}")


def compose_jet(outer_derivs: list, inner: list) -> list:
    """Jet of ``f o h`` from ``f^(k)(h(t))`` (k = 0..L) and the jet of ``h`` at t."""
    L = len(inner) - 1
    out = [outer_derivs[0]]
    for n in range(1, L + 1):
        acc = 0
        for k, coeff, mults in bell_table(n):
            term = coeff * outer_derivs[k]
            for j, m in enumerate(mults, start=1):
                if m:
                    term = term * inner[j] ** m
            acc = acc + term
        out.append(acc)
    return out
