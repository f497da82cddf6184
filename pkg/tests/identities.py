"""Brute-force identities shared by the unit and acceptance tests."""
import itertools
from fractions import Fraction

from markedgw.moments import f_ell_eval, xi_table
from markedgw.series import multinomial
from markedgw.tree import compute_masses


def next_generation_gap(law, ell, tree, n):
    """Both sides of the one-generation identity for f_l, at generation n of tree.

    ``xi_l f_l(M_{n+1}, Z_{n+1})`` against the sum over type vectors of the
    product of ``xi_{t_u} f_{t_u}(m_u + eta_u, k_u)``.
    """
    xi = xi_table(law, ell)
    masses = compute_masses(tree)
    gen = tree.generation(n)
    rhs = Fraction(0)
    for t in itertools.product(range(ell + 1), repeat=len(gen)):
        if sum(t) != ell:
            continue
        term = Fraction(multinomial(t))
        for u, tu in zip(gen, t):
            k, e = tree.nodes[u]
            term *= f_ell_eval(xi, tu, masses[u] + e, k) * xi[tu]
        rhs += term
    lhs = f_ell_eval(xi, ell, tree.M(n + 1), tree.Z(n + 1)) * xi[ell]
    return lhs - rhs
