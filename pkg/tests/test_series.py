from fractions import Fraction as F

import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from markedgw.errors import OrderTooLarge
from markedgw.series import (
    bell_table,
    check_order,
    compose_jet,
    composition_sums,
    composition_sums_naive,
    compositions,
    count_compositions,
    multinomial,
)

small_fractions = st.fractions(min_value=0, max_value=5, max_denominator=7)


@given(st.lists(small_fractions, min_size=5, max_size=5), st.integers(0, 4), st.integers(0, 4))
def test_composition_sums_match_enumeration(c, z, L):
    assert composition_sums(c, z, L) == composition_sums_naive(c, z, L)


@given(st.lists(small_fractions, min_size=5, max_size=5), st.integers(0, 4),
       st.integers(1, 4), st.integers(0, 3))
def test_truncated_composition_sums(c, z, L, max_part):
    assert composition_sums(c, z, L, max_part) == composition_sums_naive(c, z, L, max_part)


def test_composition_sums_stay_exact():
    out = composition_sums([1, 1, 1], 3, 2)
    assert all(isinstance(v, F) for v in out)
    # all-ones weights count words: z^i
    assert out == [1, 3, 9]


@given(st.integers(0, 6), st.integers(0, 5))
def test_composition_count(total, parts):
    assert len(list(compositions(total, parts))) == count_compositions(total, parts)


def test_multinomial():
    assert multinomial((2, 1, 1)) == 12
    assert multinomial(()) == 1


@pytest.mark.parametrize("n", range(1, 7))
def test_bell_table_counts_set_partitions(n):
    assert sum(coeff for _, coeff, _ in bell_table(n)) == sp.bell(n)


@pytest.mark.parametrize("n", range(1, 7))
def test_bell_table_matches_sympy_bell_polynomials(n):
    xs = sp.symbols(f"x1:{n + 1}")
    for k in range(1, n + 1):
        ours = sum(coeff * sp.prod([xs[j] ** m for j, m in enumerate(mults)])
                   for kk, coeff, mults in bell_table(n) if kk == k)
        assert sp.expand(ours - sp.bell(n, k, xs[: n - k + 1])) == 0


def test_compose_jet_against_sympy():
    t = sp.symbols("t")
    outer = sp.exp(sp.sin(t)) + t**3
    inner = sp.Rational(1, 3) * t**2 + sp.cos(t)
    x0 = sp.Rational(2, 5)
    h0 = inner.subs(t, x0)
    f_jet = [float(sp.diff(outer, t, k).subs(t, h0)) for k in range(6)]
    h_jet = [float(sp.diff(inner, t, k).subs(t, x0)) for k in range(6)]
    expected = [float(sp.diff(outer.subs(t, inner), t, k).subs(t, x0)) for k in range(6)]
    assert compose_jet(f_jet, h_jet) == pytest.approx(expected, rel=1e-12)


def test_order_guard():
    check_order(6)
    with pytest.raises(OrderTooLarge):
        check_order(7)
    with pytest.raises(ValueError):
        check_order(-1)
