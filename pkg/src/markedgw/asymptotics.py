"""Convergence diagnostics for growth rates of moments and of iterated generating functions.

The limits involved are only known to exist, so each check tabulates a
normalized sequence and reports whether it has stopped moving.  Where a
closed-form limit is available it is recorded alongside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import WrongCriticality
from .laws import MarkedGWLaw, gf_coefficients, log_gf, poly_derivs
from .moments import moment_sequence, omega_table, omega_tilde_table
from .penalty import alpha_r, b_exponent, kappa_and_derivative, log_iterate
from .series import DEFAULT_MAX_ORDER, bell_table, check_order, compose_jet

STABILIZATION_THRESHOLD = 1e-3
STABILIZATION_WINDOW = 5


@dataclass(frozen=True)
class Row:
    p: int
    value: float
    predicted: float
    ratio: float


@dataclass
class ConvergenceReport:
    """Tabulated sequence plus a verdict on the ``ratio`` column.

    ``stabilized`` means the last ``window`` relative changes of the ratio are
    all below ``threshold``.  ``diverged`` means they all exceed it while the
    ratio moves monotonically (or the ratio stops being finite).
    """

    kind: str
    rows: list
    threshold: float = STABILIZATION_THRESHOLD
    window: int = STABILIZATION_WINDOW
    limit: float | None = None
    notes: dict = field(default_factory=dict)

    def relative_changes(self) -> list:
        out = []
        for a, b in zip(self.rows, self.rows[1:]):
            scale = abs(b.ratio) if b.ratio else 1.0
            out.append(abs(b.ratio - a.ratio) / scale)
        return out

    @property
    def verdict(self) -> str:
        ratios = [r.ratio for r in self.rows]
        if any(not math.isfinite(x) for x in ratios):
            return "diverged"
        changes = self.relative_changes()
        if len(changes) < self.window:
            return "inconclusive"
        tail = changes[-self.window:]
        if max(tail) < self.threshold:
            return "stabilized"
        last = ratios[-self.window - 1:]
        steps = [b - a for a, b in zip(last, last[1:])]
        monotone = all(d > 0 for d in steps) or all(d < 0 for d in steps)
        if min(tail) >= self.threshold and monotone:
            return "diverged"
        return "inconclusive"

    @property
    def final(self) -> Row:
        return self.rows[-1]

    def limit_gap(self) -> float | None:
        if self.limit is None:
            return None
        return abs(self.final.ratio - self.limit)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "verdict": self.verdict,
            "threshold": self.threshold,
            "window": self.window,
            "p_max": self.final.p if self.rows else None,
            "final_ratio": self.final.ratio if self.rows else None,
            "limit": self.limit,
            "limit_gap": self.limit_gap(),
            **self.notes,
        }


def _safe_div(a: float, b: float) -> float:
    if b == 0 or not math.isfinite(b):
        return math.nan
    return a / b


def check_moment_growth(law: MarkedGWLaw, ell: int, p_max: int, regime: str | None = None,
                        strict: bool = True, exact: bool | None = None) -> ConvergenceReport:
    """``E[M_p^l]`` normalized by ``mu^(l p)`` (supercritical) or ``p^(2l-1)`` (critical).

    ``regime`` defaults to the law's own criticality.  Asking for the other
    one raises :class:`WrongCriticality` unless ``strict=False``, which runs
    the mismatched normalization anyway (a negative control).
    """
    check_order(ell, max(ell, DEFAULT_MAX_ORDER))
    crit = law.criticality
    regime = regime or crit
    if regime not in ("supercritical", "critical"):
        raise WrongCriticality(f"moment growth is tabulated for supercritical or critical laws, not {regime}")
    if strict and regime != crit:
        raise WrongCriticality(f"law is {crit}, checker expects {regime}")
    mu = float(law.mean)
    try:
        if regime == "supercritical":
            predicted = float(omega_table(law, ell, exact=exact, check=False)[ell])
        else:
            predicted = float(omega_tilde_table(law, ell, exact=exact, check=False)[ell])
    except ZeroDivisionError:
        predicted = math.nan
    rows = []
    for p, table in moment_sequence(law, p_max, ell, exact):
        if p == 0:
            continue
        if regime == "supercritical":
            norm = float(table[ell]) / mu ** (ell * p)
        else:
            norm = float(table[ell] / p ** (2 * ell - 1))
        rows.append(Row(p, norm, predicted, _safe_div(norm, predicted)))
    return ConvergenceReport(f"moment-growth/{regime}", rows, limit=1.0,
                             notes={"ell": ell, "law_criticality": crit})


# -- iterated generating functions ------------------------------------------------

def log_scaled_jet(law: MarkedGWLaw, s, t: float, p: int, order: int):
    """``(ln f^p(t), [1, rho_1, .., rho_order])`` with ``rho_i = (f^p)^(i)(t) / f^p(t)``.

    Dividing Faa di Bruno by ``f(g)`` gives
    ``rho'_n = sum coeff * A_k * prod rho_j^m_j`` with
    ``A_k = f^(k)(g) g^k / f(g)``, the mean of the falling factorial ``(K)_k``
    under weights ``c_K g^K / f(g)``.  Those weights are formed in log space,
    so ``g`` may underflow freely.
    """
    check_order(order, max(order, DEFAULT_MAX_ORDER))
    coeffs = {k: float(c) for k, c in gf_coefficients(law, s).items() if c > 0}
    x = math.log(t)
    rho = [1.0] + ([1.0 / t] if order >= 1 else []) + [0.0] * max(0, order - 1)
    for _ in range(p):
        logs = {k: math.log(c) + k * x for k, c in coeffs.items()}
        top = max(logs.values())
        weights = {k: math.exp(v - top) for k, v in logs.items()}
        total = math.fsum(weights.values())
        A = [math.fsum(w * math.perm(k, i) for k, w in weights.items()) / total
             for i in range(order + 1)]
        new = [1.0]
        for n in range(1, order + 1):
            acc = 0.0
            for k, coeff, mults in bell_table(n):
                term = coeff * A[k]
                for j, m in enumerate(mults, start=1):
                    if m:
                        term *= rho[j] ** m
                acc += term
            new.append(acc)
        x = log_gf(law, s, x)
        rho = new
    return x, rho


def _jet_step(coeffs: dict, jet: list) -> list:
    return compose_jet(poly_derivs(coeffs, jet[0], len(jet) - 1), jet)


def check_gf_asymptotics(law: MarkedGWLaw, s, t: float, ell: int, p_max: int) -> ConvergenceReport:
    """Growth of ``(f_s^p)^(l)(t)`` in ``p``; the normalization follows the smallest out-degree.

    * ``p(0) > 0``: ratio to ``f_s'(kappa)^p`` (to ``kappa`` itself when l = 0).
    * ``r = 1``: ratio to ``f_s'(0)^p``.
    * ``r >= 2``: the ratio column holds the log gap
      ``ln (f_s^p)^(l)(t) - (r^p b(t) + p l ln r)``.
    """
    law.require_finite()
    check_order(ell, max(ell, DEFAULT_MAX_ORDER))
    if not 0 < t <= 1:
        raise ValueError(f"t must lie in (0, 1], got {t}")
    s = float(s)
    r = law.bounds.r
    coeffs = {k: float(c) for k, c in gf_coefficients(law, s).items()}
    rows = []
    notes = {"ell": ell, "s": s, "t": t, "r": r}
    if law.p(0) > 0 or r == 1:
        if law.p(0) > 0:
            kappa, slope = kappa_and_derivative(law, s)
            kind = "gf/positive-extinction"
            notes["kappa"] = kappa
        else:
            slope = float(alpha_r(law, s, 1))
            kind = "gf/r=1"
        notes["slope"] = slope
        limit = None
        jet = [t, 1.0] + [0.0] * (ell - 1) if ell >= 1 else [t]
        for p in range(1, p_max + 1):
            jet = _jet_step(coeffs, jet)
            if ell == 0 and law.p(0) > 0:
                predicted = kappa
            else:
                predicted = slope**p
            rows.append(Row(p, jet[ell], predicted, _safe_div(jet[ell], predicted)))
        if ell == 0 and law.p(0) > 0:
            limit = 1.0
        return ConvergenceReport(kind, rows, limit=limit, notes=notes)

    b = b_exponent(law, s, t)
    notes["b"] = b
    limit = -math.log(float(alpha_r(law, s, r))) / (r - 1) if ell == 0 else None
    for p in range(1, p_max + 1):
        if ell == 0:
            value = log_iterate(law, s, t, p)
        else:
            x, rho = log_scaled_jet(law, s, t, p, ell)
            value = x + math.log(rho[ell])
        predicted = r**p * b + p * ell * math.log(r)
        rows.append(Row(p, value, predicted, value - predicted))
    return ConvergenceReport("gf/regular", rows, limit=limit, notes=notes)
