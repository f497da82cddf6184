import itertools
import math
from fractions import Fraction as F

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from markedgw.errors import InconsistentMasses, RegimeMismatch, TooManyTypeVectors
from markedgw.laws import gen_fn_eval, validate_law
from markedgw.moments import xi_table
from markedgw.oracle import enumerate_truncated
from markedgw.penalty import (
    ExpoPositive,
    ExpoRary,
    ExpoZero,
    ExpoZeroRary,
    NodeLawKind,
    Penalty,
    PolyCrit,
    PolySub,
    PolySuper,
    TypedLaws,
    alpha_r,
    b_exponent,
    gamma_type_distribution,
    girsanov_weight,
    kappa_and_derivative,
    kappa_solve,
    log_iterate,
    regime_from_tag,
    spine_node_laws,
    tilted_node_law,
)

from conftest import make_law
from identities import next_generation_gap

ADMISSIBLE = [
    ("A", PolySub(1)), ("A", PolySub(2)), ("A", PolySub(3)),
    ("D", PolyCrit()), ("C", PolySuper(1)), ("C", PolySuper(2)),
    ("A", ExpoPositive(0.5, 0)), ("A", ExpoPositive(0.5, 2)),
    ("F", ExpoRary(F(1, 2))), ("A", ExpoZero(0)), ("G", ExpoZero(1)),
    ("F", ExpoZeroRary()),
]


def test_regime_tags():
    assert regime_from_tag("poly-sub", 2) == PolySub(2)
    assert regime_from_tag("expo", 1, 0.5) == ExpoPositive(0.5, 1)
    with pytest.raises(ValueError):
        regime_from_tag("expo")
    with pytest.raises(ValueError):
        regime_from_tag("poly-sub", 1, 0.5)
    with pytest.raises(ValueError):
        regime_from_tag("nonsense")


# -- fixed points ----------------------------------------------------------------

def test_kappa_without_leaves(law_f):
    assert kappa_solve(law_f, 0.5) == 0


def test_kappa_law_b(law_b):
    assert abs(kappa_solve(law_b, 0.5) - (2 - math.sqrt(3))) < 1e-10
    for s in (0.1, 0.3, 0.9):
        assert kappa_solve(law_b, s) == pytest.approx((1 - math.sqrt(1 - s * s)) / s, abs=1e-13)


@settings(max_examples=60)
@given(st.sampled_from(["A", "B", "C", "D", "G", "H"]), st.floats(0, 0.99))
def test_kappa_is_a_fixed_point(name, s):
    law = make_law(name, exact=False)
    k = kappa_solve(law, s)
    assert 0 <= k <= 1
    assert abs(gen_fn_eval(law, s, k) - k) < 1e-12


@pytest.mark.parametrize("name", ["A", "B", "C", "D", "G", "H"])
def test_kappa_increases_with_s(name):
    law = make_law(name, exact=False)
    values = [kappa_solve(law, i / 40) for i in range(40)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_zero_mark_fixed_point(law_a):
    # psi(t) = 3/5 for law A, since every binary node is marked
    k, d = kappa_and_derivative(law_a, 0, zero_mark_mode=True)
    assert k == pytest.approx(0.6, abs=1e-14)
    assert d == 0


# -- weights ---------------------------------------------------------------------

@pytest.mark.parametrize("name,regime", ADMISSIBLE)
def test_root_weight_is_one(name, regime):
    assert Penalty(regime, make_law(name)).weight(0, 1, 0) == pytest.approx(1, abs=1e-15)


def test_critical_weight(law_d):
    assert girsanov_weight(PolyCrit(), law_d, (4, 3, 2)).value == 3


def test_subcritical_weight(law_a):
    assert girsanov_weight(PolySub(1), law_a, (2, 2, 1)).value == F(5, 2)


def test_rary_weight(law_f):
    w = girsanov_weight(ExpoRary(F(1, 2)), law_f, (1, 2, 1))
    assert alpha_r(law_f, F(1, 2), 2) == F(9, 20)
    assert w.value == F(10, 9)
    assert girsanov_weight(ExpoRary(F(1, 2)), law_f, (1, 3, 1)).value == 0


def test_rary_weight_in_log_space(law_f):
    w = girsanov_weight(ExpoRary(0.5), law_f, (12, 2**12, 100))
    expected = 100 * math.log(0.5) - (2**12 - 1) * math.log(0.45)
    assert w.log_value == pytest.approx(expected, rel=1e-14)
    assert w.value == math.inf


def test_unit_degree_weights():
    law = validate_law({1: F(1, 2), 2: F(1, 2)}, {1: F(1, 2), 2: F(0)})
    # alpha_1(s) = p(1)(s q(1) + 1 - q(1)) = 3/8 at s = 1/2
    assert girsanov_weight(ExpoRary(F(1, 2)), law, (3, 1, 2)).value == F(1, 4) / F(3, 8) ** 3
    law = validate_law({1: F(1, 2), 2: F(1, 2)}, {1: F(1, 2), 2: F(1)})
    assert girsanov_weight(ExpoZeroRary(), law, (3, 1, 0)).value == 64


def test_zero_mark_rary_weight(law_f):
    # p_0(2, 0) = 3/10
    pen = Penalty(ExpoZeroRary(), law_f)
    assert pen.weight(1, 2, 0) == F(10, 3)
    assert pen.weight(2, 4, 0) == F(10, 3) ** 3
    assert pen.weight(2, 4, 1) == 0


def test_exponential_weights(law_a):
    s = 0.5
    k, d = kappa_and_derivative(law_a, s)
    assert Penalty(ExpoPositive(s, 0), law_a).weight(2, 3, 1) == pytest.approx(s * k**2, rel=1e-14)
    assert Penalty(ExpoPositive(s, 1), law_a).weight(2, 3, 1) == pytest.approx(
        s * 3 * k**2 / d**2, rel=1e-14)
    assert Penalty(ExpoPositive(s, 1), law_a).weight(2, 0, 1) == 0


def test_zero_mark_weights(law_g):
    k, d = kappa_and_derivative(law_g, 0, zero_mark_mode=True)
    pen = Penalty(ExpoZero(1), law_g)
    assert pen.weight(2, 3, 0) == pytest.approx(3 * k**2 / d**2, rel=1e-14)
    assert pen.weight(2, 3, 1) == 0


@pytest.mark.parametrize("name,regime", [
    ("A", ExpoRary(0.5)), ("F", ExpoPositive(0.5)), ("A", PolyCrit()),
    ("D", PolySub(1)), ("A", PolySuper(1)), ("A", ExpoZeroRary()), ("F", ExpoZero()),
    ("A", ExpoZero(1)), ("A", ExpoPositive(1.0)), ("B", ExpoZero()),
])
def test_inadmissible_regimes(name, regime):
    with pytest.raises(RegimeMismatch):
        Penalty(regime, make_law(name))


# -- type vectors ----------------------------------------------------------------

def test_gamma_uniform_without_marks(law_a):
    xi = xi_table(law_a, 1)
    nodes = [((i,), F(0)) for i in range(1, 5)]
    dist = gamma_type_distribution(xi, 1, nodes, F(0), 4)
    assert sorted(dist.probs) == [F(1, 4)] * 4


def test_gamma_single_type(law_a):
    xi = xi_table(law_a, 1)
    masses = [F(0), F(1, 2), F(3, 2)]
    M = sum(masses)
    dist = gamma_type_distribution(xi, 1, list(enumerate(masses)), M, 3)
    for vec, prob in dist:
        u = vec.index(1)
        assert prob == (1 + masses[u] / 2) / (3 + M / 2)


@settings(max_examples=60)
@given(st.integers(1, 4), st.integers(1, 3), st.data())
def test_gamma_normalizes(z, ell, data):
    law = make_law("A", exact=data.draw(st.booleans()))
    xi = xi_table(law, ell)
    masses = data.draw(st.lists(st.fractions(0, 4, max_denominator=9), min_size=z, max_size=z))
    if not xi.exact:
        masses = [float(m) for m in masses]
    dist = gamma_type_distribution(xi, ell, list(enumerate(masses)), sum(masses), z)
    assert abs(float(dist.total()) - 1) < 1e-10
    assert all(sum(v) == ell for v in dist.vectors)


def test_gamma_rejects_bad_input(law_a):
    xi = xi_table(law_a, 2)
    with pytest.raises(InconsistentMasses):
        gamma_type_distribution(xi, 1, [(0, F(1))], F(2), 1)
    with pytest.raises(InconsistentMasses):
        gamma_type_distribution(xi, 1, [], F(0), 0)
    with pytest.raises(TooManyTypeVectors):
        gamma_type_distribution(xi, 2, [(i, F(0)) for i in range(10)], F(0), 10, cap=20)


@pytest.mark.parametrize("ell", [1, 2, 3])
def test_next_generation_identity(law_a, ell):
    measure = enumerate_truncated(law_a, 2)
    for tree, _ in measure:
        for n in (0, 1):
            if tree.Z(n):
                assert next_generation_gap(law_a, ell, tree, n) == 0


def test_generation_probability_is_a_law(law_a):
    typed = TypedLaws(law_a, xi_table(law_a, 2), 2)
    masses = (F(1, 3), F(0), F(2, 3))
    total = F(0)
    for pairs in itertools.product([pair for pair, _ in law_a.pairs()], repeat=3):
        total += typed.generation_probability(masses, F(1), pairs)
    assert total == 1


# -- tilted node laws ------------------------------------------------------------

def test_type_zero_keeps_base_law(law_a):
    xi = xi_table(law_a, 2)
    law = tilted_node_law(NodeLawKind.TYPED, law_a, xi=xi, i=0, mass=F(5))
    assert dict(law.items()) == dict(law_a.pairs())


@pytest.mark.parametrize("i", [1, 2, 3])
def test_typed_node_cannot_die_unmarked(law_a, i):
    xi = xi_table(law_a, 3)
    law = tilted_node_law(NodeLawKind.TYPED, law_a, xi=xi, i=i, mass=F(0))
    assert law[(0, 0)] == 0
    assert law.total() == 1


def test_typed_law_at_mass_zero(law_h):
    xi = xi_table(law_h, 1)
    law = tilted_node_law(NodeLawKind.TYPED, law_h, xi=xi, i=1, mass=F(0))
    for (k, e), w in law_h.pairs():
        assert law[(k, e)] == w * (k + e / xi[1])


@pytest.mark.parametrize("name,s", [("A", 0.5), ("B", 0.3), ("G", 0.7), ("H", 0.2)])
def test_spine_laws_normalize(name, s):
    law = make_law(name, exact=False)
    normal, special = spine_node_laws(law, s)
    assert normal.total() == pytest.approx(1, abs=1e-12)
    assert special.total() == pytest.approx(1, abs=1e-12)
    assert all(k > 0 for k, _ in dict(special.items()))


def test_zero_mark_laws_have_no_marks(law_g):
    normal, special = spine_node_laws(law_g, zero_mark=True)
    assert all(e == 0 for _, e in dict(normal.items()))
    assert all(e == 0 and k > 0 for k, e in dict(special.items()))


def test_rary_mark_probability(law_f):
    law = tilted_node_law(NodeLawKind.RARY, law_f, s=F(1, 2), r=2)
    assert law[(2, 1)] == F(1, 3)
    assert law[(2, 0)] == F(2, 3)


# -- b exponent ------------------------------------------------------------------

@mpmath.workdps(60)
def _mp_b(law, s, t, terms=80):
    s = mpmath.mpf(s)
    coeffs = [(k, mpmath.mpf(law.p(k).numerator) / law.p(k).denominator,
               mpmath.mpf(law.q(k).numerator) / law.q(k).denominator) for k in law.support]
    f = lambda x: sum(p * (s * q + 1 - q) * x**k for k, p, q in coeffs)  # noqa: E731
    r = law.bounds.r
    x = mpmath.mpf(t)
    total = mpmath.log(x)
    for j in range(terms):
        y = f(x)
        total += mpmath.log(y / x**r) / mpmath.mpf(r) ** (j + 1)
        x = y
    return total


@pytest.mark.parametrize("t", [0.1, 0.5, 0.9, 1.0])
def test_b_exponent_matches_high_precision(law_f, t):
    b = b_exponent(law_f, 0.5, t)
    assert b < 0
    assert b == pytest.approx(float(_mp_b(law_f, 0.5, t)), rel=1e-12)


def test_b_exponent_needs_regular_law(law_a):
    with pytest.raises(RegimeMismatch):
        b_exponent(law_a, 0.5, 0.5)


def test_log_iterate_matches_direct(law_f):
    for p in range(1, 5):
        direct = float(gen_fn_eval(law_f, F(1, 2), F(4, 5), p))
        assert log_iterate(law_f, 0.5, 0.8, p) == pytest.approx(math.log(direct), rel=1e-13)
