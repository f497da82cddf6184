"""``markedgw`` command line: validate, sample, moments, kappa, verify, asymptotics.

Machine-readable results (JSON or CSV) go to stdout or the requested file;
diagnostics go to stderr.  Exit codes: 0 success, 1 failed verification,
2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, fields
from fractions import Fraction

from .asymptotics import check_gf_asymptotics, check_moment_growth
from .errors import InvalidLaw, MarkedGWError
from .laws import MarkedGWLaw, load_law, parse_number
from .moments import moment_sequence, omega_table, omega_tilde_table, xi_table
from .oracle import (
    TiltedLaw,
    check_change_of_measure,
    check_martingale,
    count_truncated,
    residual_histogram,
)
from .penalty import (
    REGIME_TAGS,
    ExpoPositive,
    ExpoRary,
    kappa_and_derivative,
    regime_from_tag,
    spine_node_laws,
)
from .sampler import (
    SpineSampler,
    TauSampler,
    degenerate_node_law,
    sample_batch,
    sample_mgw,
    sample_tilted_mgw,
)
from .tree import dumps_line, format_fraction

OK, FAILED, USAGE = 0, 1, 2
DEFAULT_SEED = 20240601
MAX_VERIFY_TREES = 10**6

MEASURES = (
    "base", "poly-ell", "expo", "expo-spine", "expo-rary",
    "zero-mark", "zero-mark-spine", "zero-mark-rary",
)


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    law: str
    regime: str | None = None
    measure: str | None = None
    ell: int | None = None
    s: str | None = None
    t: float | None = None
    depth: int | None = None
    count: int | None = None
    seed: int | None = None
    out: str | None = None
    verdict: str | None = None
    exact: bool = False
    zero_mark: bool = False
    p_max: int | None = None
    kind: str | None = None
    strict: bool = True
    max_trees: int = 10**6

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        data = json.loads(text)
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_namespace(cls, ns: argparse.Namespace) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in vars(ns).items() if k in names})

    def s_value(self):
        if self.s is None:
            return None
        try:
            value = parse_number(self.s)
        except InvalidLaw:
            raise UsageError(f"cannot parse --s {self.s!r}") from None
        return value

    def check(self) -> None:
        """Reject incompatible flag combinations before any work is done."""
        s = self.s_value()
        if s is not None and not 0 <= s < 1:
            raise UsageError("--s must lie in [0, 1)")
        if self.depth is not None and self.depth < 0:
            raise UsageError("--depth must be nonnegative")
        if self.count is not None and self.count < 1:
            raise UsageError("--count must be positive")
        if self.ell is not None and self.ell < 0:
            raise UsageError("--ell must be nonnegative")
        if self.p_max is not None and self.p_max < 1:
            raise UsageError("--p-max must be positive")
        if self.command == "sample":
            needs_s = self.measure in ("expo", "expo-spine", "expo-rary")
            if needs_s and s is None:
                raise UsageError(f"--measure {self.measure} needs --s")
            if not needs_s and s is not None:
                raise UsageError(f"--measure {self.measure} does not take --s")
            if self.measure == "poly-ell" and not self.ell:
                raise UsageError("--measure poly-ell needs --ell >= 1")
            if needs_s and not 0 < s < 1:
                raise UsageError("--s must lie in (0, 1) for exponential measures")
        if self.command == "verify":
            cls = REGIME_TAGS[self.regime]
            if cls in (ExpoPositive, ExpoRary):
                if s is None or not 0 < s < 1:
                    raise UsageError(f"--regime {self.regime} needs --s in (0, 1)")
            elif s is not None:
                raise UsageError(f"--regime {self.regime} does not take --s")
            if self.depth > 3:
                raise UsageError("--depth is limited to 3 for exact verification")
        if self.command == "kappa" and self.zero_mark and s is not None:
            raise UsageError("--zero-mark fixes s = 0; drop --s")
        if self.command == "kappa" and not self.zero_mark and s is None:
            raise UsageError("kappa needs --s (or --zero-mark)")
        if self.command == "asymptotics" and self.kind == "gf":
            if s is None:
                raise UsageError("--kind gf needs --s")
            if self.t is None or not 0 < self.t <= 1:
                raise UsageError("--kind gf needs --t in (0, 1]")


# -- output helpers --------------------------------------------------------------

def write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".markedgw-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(text: str, path: str | None = None, stream=None) -> None:
    if path:
        write_atomic(path, text)
    else:
        (stream or sys.stdout).write(text)


def _number(x):
    if isinstance(x, Fraction):
        return format_fraction(x)
    return repr(float(x))


def _json_float(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _clean(obj):
    """JSON has no NaN or infinity; map them to null."""
    if isinstance(obj, float):
        return _json_float(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def note(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load(cfg: RunConfig) -> MarkedGWLaw:
    try:
        return load_law(cfg.law)
    except FileNotFoundError:
        raise UsageError(f"law file {cfg.law!r} not found") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"law file {cfg.law!r} is not valid JSON: {exc}") from None


# -- subcommands ------------------------------------------------------------------

def cmd_validate(cfg: RunConfig) -> int:
    try:
        law = _load(cfg)
    except InvalidLaw as exc:
        note(f"invalid law: {exc}")
        print(json.dumps({"valid": False, "error": type(exc).__name__, "message": str(exc)}))
        return FAILED
    out = {
        "valid": True,
        "mu": _number(law.mean),
        "r": law.bounds.r,
        "r_tilde": law.bounds.r_tilde,
        "criticality": law.criticality,
        "mark_mean": _number(law.mark_mean()),
        "exact": law.exact,
    }
    print(json.dumps(out))
    return OK


def _sampler(cfg: RunConfig, law: MarkedGWLaw):
    s, depth, m = cfg.s_value(), cfg.depth, cfg.measure
    if m == "base":
        return lambda rng: (sample_mgw(law, depth, rng), None)
    if m == "poly-ell":
        tau = TauSampler(law, None, cfg.ell)
        return lambda rng: _typed(tau.sample(depth, rng))
    if m in ("expo", "zero-mark"):
        normal, _ = spine_node_laws(law, s, zero_mark=m == "zero-mark", special=False)
        return lambda rng: (sample_tilted_mgw(normal, depth, rng), None)
    if m in ("expo-spine", "zero-mark-spine"):
        spine = SpineSampler(law, s, zero_mark=m == "zero-mark-spine")
        return lambda rng: _typed(spine.sample(depth, rng))
    node = degenerate_node_law(law, s, zero_mark=m == "zero-mark-rary")
    return lambda rng: (sample_tilted_mgw(node, depth, rng), None)


def _typed(sample):
    return sample.tree, sample.types


def cmd_sample(cfg: RunConfig) -> int:
    law = _load(cfg)
    if cfg.seed is None:
        cfg.seed = DEFAULT_SEED
    note(f"sampling {cfg.count} trees, measure {cfg.measure}, seed {cfg.seed}")
    draw = _sampler(cfg, law)
    samples = sample_batch(draw, cfg.count, cfg.seed)
    text = "".join(dumps_line(tree, types) + "\n" for tree, types in samples)
    if cfg.out:
        write_atomic(cfg.out, text)
        print(json.dumps({"out": cfg.out, "count": cfg.count, "seed": cfg.seed,
                          "measure": cfg.measure, "depth": cfg.depth}))
    else:
        sys.stdout.write(text)
    return OK


def cmd_moments(cfg: RunConfig) -> int:
    law = _load(cfg)
    L = cfg.ell or 1
    crit = law.criticality
    if cfg.exact and not law.exact:
        raise UsageError("--exact needs a law given by rationals")
    exact = cfg.exact or None
    if crit == "subcritical":
        table = xi_table(law, L, exact=exact)
        predict = lambda ell, p: table[ell]  # noqa: E731
    elif crit == "supercritical":
        table = omega_table(law, L, exact=exact)
        predict = lambda ell, p: law.mean ** (ell * p) * table[ell]  # noqa: E731
    else:
        table = omega_tilde_table(law, L, exact=exact)
        predict = lambda ell, p: p ** (2 * ell - 1) * table[ell]  # noqa: E731
    p_max = cfg.p_max or 25
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["regime", "ell", "p", "exact_value", "asymptotic_prediction", "ratio"])
    for p, moments in moment_sequence(law, p_max, L, exact):
        if p == 0:
            continue
        for ell in range(1, L + 1):
            value, pred = moments[ell], predict(ell, p)
            ratio = float(value) / float(pred) if pred else math.nan
            writer.writerow([crit, ell, p, _number(value), _number(pred), repr(ratio)])
    emit(buf.getvalue(), cfg.out)
    return OK


def cmd_kappa(cfg: RunConfig) -> int:
    law = _load(cfg)
    s = 0 if cfg.zero_mark else cfg.s_value()
    kappa, deriv = kappa_and_derivative(law, s, zero_mark_mode=cfg.zero_mark)
    print('{"kappa": %s, "derivative": %s, "s": %s, "zero_mark": %s}' % (
        format(kappa, ".17g"), format(deriv, ".17g"), format(float(s), ".17g"),
        json.dumps(cfg.zero_mark)))
    return OK


def cmd_verify(cfg: RunConfig) -> int:
    law = _load(cfg)
    if cfg.exact and not law.exact:
        raise UsageError("--exact needs a law given by rationals")
    cls = REGIME_TAGS[cfg.regime]
    ell = cfg.ell
    if ell is None:
        ell = 1 if cls.tag.startswith("poly") else 0
    regime = regime_from_tag(cfg.regime, ell=ell, s=cfg.s_value())
    exact = bool(cfg.exact)
    checks = {}
    residuals = []
    mart = check_martingale(law, regime, cfg.depth, exact=exact)
    checks["martingale"] = {"max_residual": mart.max_residual, "states": mart.n_states,
                            "pass": mart.passed}
    residuals += mart.residuals
    passed = mart.passed
    try:
        TiltedLaw(law, regime, exact=exact)
        has_tilted = True
    except MarkedGWError:
        has_tilted = False
    n_trees = count_truncated(law, cfg.depth)
    if has_tilted and n_trees > cfg.max_trees:
        checks["change_of_measure"] = {"skipped": f"{n_trees} trees exceed --max-trees"}
        note(f"change-of-measure check skipped: {n_trees} trees exceed --max-trees {cfg.max_trees}")
    elif has_tilted:
        com = check_change_of_measure(law, regime, cfg.depth, exact=exact)
        checks["change_of_measure"] = {
            "max_gap": com.max_gap, "trees": com.n_trees,
            "weighted_mass": _json_float(com.weighted_mass),
            "tilted_mass": _json_float(com.tilted_mass),
            "regular_mass": None if com.regular_mass is None else _json_float(com.regular_mass),
            "pass": com.passed,
        }
        residuals += com.gaps
        passed = passed and com.passed
    report = {
        "regime": cfg.regime,
        "ell": ell,
        "s": cfg.s,
        "depth": cfg.depth,
        "exact": exact,
        "max_gap": max(residuals, default=0.0),
        "residuals_histogram": residual_histogram(residuals),
        "checks": checks,
        "pass": passed,
    }
    print(json.dumps(_clean(report)))
    if not passed:
        note("verification failed")
    return OK if passed else FAILED


def cmd_asymptotics(cfg: RunConfig) -> int:
    law = _load(cfg)
    ell = cfg.ell if cfg.ell is not None else 1
    if cfg.kind == "moments":
        report = check_moment_growth(law, ell, cfg.p_max or 25, regime=cfg.regime,
                                     strict=cfg.strict)
    else:
        report = check_gf_asymptotics(law, cfg.s_value(), cfg.t, ell, cfg.p_max or 60)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["p", "value", "predicted", "ratio"])
    for row in report.rows:
        writer.writerow([row.p, repr(row.value), repr(row.predicted), repr(row.ratio)])
    emit(buf.getvalue(), cfg.out)
    verdict = report.to_json()
    gap = report.limit_gap()
    ok = report.verdict == "stabilized" or (gap is not None and gap < report.threshold)
    verdict["pass"] = ok
    text = json.dumps(_clean(verdict)) + "\n"
    emit(text, cfg.verdict, stream=sys.stderr)
    return OK if ok else FAILED


COMMANDS = {
    "validate": cmd_validate,
    "sample": cmd_sample,
    "moments": cmd_moments,
    "kappa": cmd_kappa,
    "verify": cmd_verify,
    "asymptotics": cmd_asymptotics,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="markedgw", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def law_arg(p):
        p.add_argument("--law", required=True, help="law file (JSON with keys p and q)")

    p = sub.add_parser("validate", help="check a law and print mu, r, r-tilde")
    law_arg(p)

    p = sub.add_parser("sample", help="sample trees under the base or a tilted measure")
    law_arg(p)
    p.add_argument("--measure", choices=MEASURES, default="base")
    p.add_argument("--ell", type=int)
    p.add_argument("--s")
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = sub.add_parser("moments", help="CSV of E[M_p^l] against its asymptotic prediction")
    law_arg(p)
    p.add_argument("--ell", type=int, default=1, help="largest moment order")
    p.add_argument("--p-max", type=int)
    p.add_argument("--exact", action="store_true")
    p.add_argument("--out")

    p = sub.add_parser("kappa", help="fixed point of f_s (or psi) and the slope there")
    law_arg(p)
    p.add_argument("--s")
    p.add_argument("--zero-mark", action="store_true")

    p = sub.add_parser("verify", help="exact change-of-measure and martingale checks")
    law_arg(p)
    p.add_argument("--regime", choices=sorted(REGIME_TAGS), required=True)
    p.add_argument("--ell", type=int)
    p.add_argument("--s")
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--exact", action="store_true")
    p.add_argument("--max-trees", type=int, default=MAX_VERIFY_TREES,
                   help="skip the tree-by-tree comparison above this many trees")

    p = sub.add_parser("asymptotics", help="convergence diagnostics (CSV plus JSON verdict)")
    law_arg(p)
    p.add_argument("--kind", choices=("moments", "gf"), default="moments")
    p.add_argument("--regime", choices=("supercritical", "critical"),
                   help="normalization for --kind moments (default: the law's own)")
    p.add_argument("--no-strict", dest="strict", action="store_false",
                   help="allow a mismatched --regime (negative control)")
    p.add_argument("--ell", type=int)
    p.add_argument("--s")
    p.add_argument("--t", type=float)
    p.add_argument("--p-max", type=int)
    p.add_argument("--out")
    p.add_argument("--verdict", help="file for the JSON verdict (default: stderr)")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else OK
    cfg = RunConfig.from_namespace(ns)
    try:
        cfg.check()
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        note(f"usage error: {exc}")
        return USAGE
    except MarkedGWError as exc:
        note(f"{type(exc).__name__}: {exc}")
        return USAGE
    except OSError as exc:
        note(f"I/O error: {exc}")
        return USAGE


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
