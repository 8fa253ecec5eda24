"""Output-size bounds: the polymatroid LP with its dual certificate, the AGM and
PANDA restrictions, and closed-form bounds for the two-way join and the triangle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .entropy_lp import (
    EQ,
    LinearConstraint,
    LinearProgram,
    build_lp,
    shannon_constraints,
    statistic_terms,
)
from .query_model import Conditional, Query, VarSet
from .simplex import ACCEPT_TOL, GAP_TOL, Residuals, Status, check_solution, solve
from .stats_engine import (
    AbstractStatistic,
    ConcreteStatistic,
    NormOrder,
    Relation,
    StatisticsSet,
    check_schema,
    format_norm,
    statistic_value,
)

CERT_COEF_TOL = 1e-7


class BoundError(ValueError):
    pass


@dataclass(frozen=True)
class BoundCertificate:
    """Weights w_i proving ``Σ w_i h(τ_i) >= h(X)`` over polymatroids.

    ``shannon_duals`` are the multipliers on the rows of
    ``shannon_constraints(n)``; ``None`` means they were not supplied and
    must be searched for when verifying.
    """

    weights: tuple[float, ...]
    log_bound: float
    shannon_duals: Optional[tuple[float, ...]] = None

    def formula(self, q: Query, stats: StatisticsSet, tol: float = 1e-9) -> str:
        parts = []
        for w, s in zip(self.weights, stats):
            if w > tol:
                parts.append(f"{s.label(q)}^{_num(w)}")
        return " * ".join(parts) if parts else "1"


@dataclass(frozen=True)
class BoundReport:
    log_bound: float
    method: str
    certificate: Optional[BoundCertificate] = None
    diagnostic: str = ""
    estimate: bool = False
    residuals: Optional[Residuals] = field(default=None, compare=False)

    @property
    def linear_bound(self) -> float:
        if self.log_bound == -math.inf:
            return 0.0
        try:
            return 2.0**self.log_bound
        except OverflowError:
            return math.inf

    @property
    def unbounded(self) -> bool:
        return self.log_bound == math.inf

    def to_json(self, q: Optional[Query] = None, stats: Optional[StatisticsSet] = None) -> dict:
        out: dict = {
            "method": self.method,
            "log2_bound": _json_float(self.log_bound),
            "bound": _json_float(self.linear_bound),
        }
        if self.estimate:
            out["estimate"] = True
        if self.certificate is not None:
            cert: dict = {"weights": [_clean(w) for w in self.certificate.weights]}
            if q is not None and stats is not None:
                cert["formula"] = self.certificate.formula(q, stats)
            if self.certificate.shannon_duals is not None:
                cert["shannon_duals"] = [_clean(m) for m in self.certificate.shannon_duals]
            out["certificate"] = cert
        else:
            out["certificate"] = None
        if self.diagnostic:
            out["diagnostic"] = self.diagnostic
        return out


def _clean(x: float) -> float:
    return round(float(x), 12) + 0.0


def _num(x: float) -> str:
    return f"{x:.6g}"


def _json_float(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return _clean(x) if abs(x) < 1e12 else float(x)


# --- polymatroid bound -----------------------------------------------------


def _unbounded_diagnostic(q: Query, lp: LinearProgram, ray: Optional[np.ndarray]) -> str:
    if ray is None:
        return "the linear program is unbounded"
    grows = [k for k in range(lp.n_vars) if ray[k] > 1e-9 and k]
    if not grows:
        return "the linear program is unbounded"
    k = min(grows, key=lambda b: (bin(b).count("1"), b))
    return f"h({q.label(VarSet(k))}) is not constrained by any statistic; the bound is infinite"


def polymatroid_bound(q: Query, stats: StatisticsSet, method: str = "polymatroid") -> BoundReport:
    """max h(X) over polymatroids satisfying ``stats``, with the dual certificate."""
    stats.validate(q)
    for i, s in enumerate(stats):
        if s.log_b == -math.inf:
            return BoundReport(
                -math.inf, method, diagnostic=f"statistic {i} ({s.label(q)}) certifies an empty relation"
            )
    lp = build_lp(q, stats)
    sol = solve(lp)
    if sol.status is Status.UNBOUNDED:
        return BoundReport(math.inf, method, diagnostic=_unbounded_diagnostic(q, lp, sol.ray))
    if sol.status is Status.INFEASIBLE:
        return BoundReport(
            -math.inf, method, diagnostic="no nonempty database satisfies these statistics"
        )
    n_sh = len(lp.constraints) - len(stats)
    duals = sol.duals
    weights = tuple(float(w) for w in duals[n_sh:])
    shannon = tuple(float(m) for m in duals[:n_sh])
    cert_value = math.fsum(w * s.log_b for w, s in zip(weights, stats))
    cert = BoundCertificate(weights, cert_value, shannon)
    return BoundReport(sol.objective, method, cert, residuals=check_solution(lp, sol))


@dataclass(frozen=True)
class CertificateCheck:
    valid: bool
    max_violation: float
    violated: Optional[str]
    gap: float
    message: str

    def __bool__(self) -> bool:
        return self.valid


def _dense_rows(rows: Sequence[LinearConstraint], size: int) -> np.ndarray:
    A = np.zeros((len(rows), size))
    for i, r in enumerate(rows):
        for k, c in r.terms.items():
            A[i, k] = c
    return A


def _find_shannon_multipliers(residual: np.ndarray, n: int) -> tuple[float, np.ndarray]:
    """max over polymatroids with h(X) <= 1 of ``residual · h``.

    The weighted inequality is Shannon-valid iff this maximum is 0.
    """
    size = 1 << n
    rows = shannon_constraints(n) + [LinearConstraint({size - 1: 1.0}, "<=", 1.0, "normalize")]
    obj = {k: float(c) for k, c in enumerate(residual) if c != 0}
    sol = solve(LinearProgram(size, obj, rows))
    if sol.status is not Status.OPTIMAL:
        return math.inf, np.zeros(size)
    return sol.objective, sol.primal


def verify_certificate(q: Query, stats: StatisticsSet, cert: BoundCertificate) -> CertificateCheck:
    """Check that the weighted statistics dominate h(X) over all polymatroids.

    With Shannon multipliers the check is algebraic: ``Σ w_i·row_i + Σ μ_k·row_k``
    must dominate the objective row coefficient-wise. Without them the
    weighted inequality is tested by a small auxiliary LP.
    """
    if len(cert.weights) != len(stats):
        raise BoundError(f"certificate has {len(cert.weights)} weights for {len(stats)} statistics")
    size = 1 << q.n
    sh = shannon_constraints(q.n)
    objective = np.zeros(size)
    objective[size - 1] = 1.0
    w = np.asarray(cert.weights, dtype=float)
    stat_rows = np.zeros((len(stats), size))
    for i, s in enumerate(stats):
        for k, c in statistic_terms(s).items():
            stat_rows[i, k] = c
    combo = w @ stat_rows if len(stats) else np.zeros(size)

    if (w < -CERT_COEF_TOL).any():
        i = int(np.argmin(w))
        return CertificateCheck(False, float(-w[i]), f"weight[{i}]", math.nan, f"negative weight w[{i}] = {w[i]:.3g}")

    if cert.shannon_duals is not None:
        if len(cert.shannon_duals) != len(sh):
            raise BoundError(f"expected {len(sh)} Shannon multipliers, got {len(cert.shannon_duals)}")
        mu = np.asarray(cert.shannon_duals, dtype=float)
        for k, row in enumerate(sh):
            if row.relation != EQ and mu[k] < -CERT_COEF_TOL:
                return CertificateCheck(
                    False, float(-mu[k]), f"shannon[{k}]", math.nan, f"negative multiplier on {row.tag} row {k}"
                )
        combo = combo + mu @ _dense_rows(sh, size)
        slack = combo - objective
        j = int(np.argmin(slack))
        worst = float(-slack[j])
        if worst > CERT_COEF_TOL:
            name = f"h({q.label(VarSet(j))})"
            return CertificateCheck(
                False, worst, name, math.nan, f"coefficient of {name} is short by {worst:.3g}"
            )
    else:
        worst, h = _find_shannon_multipliers(objective - combo, q.n)
        if worst > CERT_COEF_TOL:
            return CertificateCheck(
                False, worst, "h(" + q.label(q.head) + ")", math.nan,
                f"weighted statistics do not dominate h({q.label(q.head)}) on some polymatroid (excess {worst:.3g})",
            )

    value = math.fsum(float(x) * s.log_b for x, s in zip(cert.weights, stats))
    gap = abs(value - cert.log_bound)
    if gap > GAP_TOL:
        return CertificateCheck(False, 0.0, "log_bound", gap, f"Σ w_i b_i = {value:.9g} differs from {cert.log_bound:.9g}")
    return CertificateCheck(True, max(worst, 0.0) + 0.0, None, gap, "valid")


_KEEP = {
    "agm": lambda s: s.p == 1 and not s.cond.u,
    "panda": lambda s: s.p == 1 or math.isinf(s.p),
}


def _restricted(q: Query, stats: StatisticsSet, method: str) -> BoundReport:
    # Solve on the kept subset, then report weights against the full list
    # (zero for dropped statistics) so certificates stay index-compatible.
    keep = _KEEP[method]
    idx = [i for i, s in enumerate(stats) if keep(s)]
    report = polymatroid_bound(q, StatisticsSet(tuple(stats[i] for i in idx)), method)
    if report.certificate is None:
        return report
    w = [0.0] * len(stats)
    for i, wi in zip(idx, report.certificate.weights):
        w[i] = wi
    cert = BoundCertificate(tuple(w), report.certificate.log_bound, report.certificate.shannon_duals)
    return replace(report, certificate=cert)


def agm_bound(q: Query, stats: StatisticsSet) -> BoundReport:
    """Polymatroid bound from cardinality statistics only."""
    return _restricted(q, stats, "agm")


def panda_bound(q: Query, stats: StatisticsSet) -> BoundReport:
    """Polymatroid bound from ℓ1 and ℓ∞ statistics only."""
    return _restricted(q, stats, "panda")


def bound(q: Query, stats: StatisticsSet, method: str = "lp") -> BoundReport:
    if method in ("lp", "polymatroid"):
        return polymatroid_bound(q, stats)
    if method == "agm":
        return agm_bound(q, stats)
    if method == "panda":
        return panda_bound(q, stats)
    raise BoundError(f"unknown method {method!r}")


# --- closed forms ----------------------------------------------------------

# Norm keys: (role, v, u, p) where role names an atom of the canonical shape
# and v, u are sorted letters over the canonical variables X, Y, Z.
NormKey = tuple[str, str, str, float]

CLOSED_FORMS = {
    "join": ("traditional", "panda_join", "l2_join", "lpq_join"),
    "triangle": ("agm_triangle", "panda_triangle", "l2_triangle", "l3_triangle"),
}


def _k(role: str, v: str, u: str, p: float) -> NormKey:
    return (role, "".join(sorted(v)), "".join(sorted(u)), float(p))


def _need(norms: Mapping[NormKey, float], role: str, v: str, u: str, p: float) -> float:
    key = _k(role, v, u, p)
    if key not in norms:
        label = f"||deg_{role}({key[1]}|{key[2]})||_{format_norm(p)}"
        raise BoundError(f"closed form needs {label}")
    return norms[key]


def closed_form(
    shape: str,
    formula: str,
    norms: Mapping[NormKey, float],
    p: Optional[NormOrder] = None,
    q: Optional[NormOrder] = None,
) -> BoundReport:
    """Evaluate one closed-form bound in bits from log2 norms.

    Join shape: R(X,Y) ⋈ S(Y,Z). Triangle shape: R(X,Y), S(Y,Z), T(Z,X).
    ``traditional`` is the textbook estimate and is flagged as such.
    """
    if shape not in CLOSED_FORMS or formula not in CLOSED_FORMS[shape]:
        raise BoundError(f"unknown closed form {shape}/{formula}")
    g = lambda *a: _need(norms, *a)  # noqa: E731
    if formula == "traditional":
        val = g("R", "XY", "", 1) + g("S", "YZ", "", 1) - max(g("R", "Y", "", 1), g("S", "Y", "", 1))
        return BoundReport(val, formula, estimate=True)
    if formula == "panda_join":
        val = min(g("S", "YZ", "", 1) + g("R", "X", "Y", math.inf), g("R", "XY", "", 1) + g("S", "Z", "Y", math.inf))
    elif formula == "l2_join":
        val = g("R", "X", "Y", 2) + g("S", "Z", "Y", 2)
    elif formula == "lpq_join":
        if p is None or q is None:
            raise BoundError("lpq_join needs both p and q")
        if not q > 1:
            raise BoundError(f"lpq_join needs q > 1, got q = {q}")
        inv_p = 0.0 if math.isinf(p) else 1.0 / p
        inv_q = 0.0 if math.isinf(q) else 1.0 / q
        if inv_p + inv_q > 1 + 1e-12:
            raise BoundError(f"lpq_join needs 1/p + 1/q <= 1, got p = {p}, q = {q}")
        a = inv_p / (1.0 - inv_q)  # q / (p (q - 1))
        val = g("R", "X", "Y", p) + a * g("S", "Z", "Y", q) + (1.0 - a) * g("S", "YZ", "", 1)
        return BoundReport(val, f"lpq_join(p={format_norm(p)},q={format_norm(q)})")
    elif formula == "agm_triangle":
        val = 0.5 * (g("R", "XY", "", 1) + g("S", "YZ", "", 1) + g("T", "XZ", "", 1))
    elif formula == "panda_triangle":
        val = g("R", "XY", "", 1) + g("S", "Z", "Y", math.inf)
    elif formula == "l2_triangle":
        val = (2 * g("R", "Y", "X", 2) + 2 * g("S", "Z", "Y", 2) + 2 * g("T", "X", "Z", 2)) / 3
    else:  # l3_triangle
        val = (3 * g("R", "Y", "X", 3) + 3 * g("S", "Y", "Z", 3) + 5 * g("T", "XZ", "", 1)) / 6
    return BoundReport(val, formula)


@dataclass(frozen=True)
class ShapeBinding:
    """How a query instantiates a canonical shape.

    ``roles`` maps R, S, T to atom indices; ``letters`` maps X, Y, Z to query
    variable indices.
    """

    shape: str
    roles: dict
    letters: dict

    def varset(self, letters: str) -> VarSet:
        return VarSet.of(self.letters[c] for c in letters)


def match_shape(q: Query) -> Optional[ShapeBinding]:
    """Recognize a two-atom join on one variable, or a triangle of binary atoms."""
    atoms = q.atoms
    if q.n == 3 and len(atoms) == 2 and all(a.arity == 2 for a in atoms):
        shared = atoms[0].varset & atoms[1].varset
        if len(shared) == 1:
            y = next(iter(shared))
            x = next(iter(atoms[0].varset - shared))
            z = next(iter(atoms[1].varset - shared))
            return ShapeBinding("join", {"R": 0, "S": 1}, {"X": x, "Y": y, "Z": z})
    if q.n == 3 and len(atoms) == 3 and all(a.arity == 2 for a in atoms):
        sets = [a.varset for a in atoms]
        if len(set(s.bits for s in sets)) == 3:
            x, y = (v.index for v in atoms[0].vars)
            z = next(iter(q.head - sets[0]))
            s_idx = next(j for j in (1, 2) if sets[j] == VarSet.of([y, z]))
            t_idx = 3 - s_idx
            return ShapeBinding("triangle", {"R": 0, "S": s_idx, "T": t_idx}, {"X": x, "Y": y, "Z": z})
    return None


def shape_norms(
    q: Query,
    db: Union[Mapping[str, Relation], Iterable[Relation]],
    binding: ShapeBinding,
    p_set: Iterable[NormOrder],
) -> dict[NormKey, float]:
    """log2 norms of every simple statistic on the shape's atoms, keyed canonically."""
    db = check_schema(db, q)
    inverse = {idx: letter for letter, idx in binding.letters.items()}
    ps = sorted(set(float(p) for p in p_set) | {1.0, math.inf})
    norms: dict[NormKey, float] = {}
    for role, j in binding.roles.items():
        atom = q.atoms[j]
        letters = [inverse[v.index] for v in atom.vars]
        whole = "".join(letters)
        norms[_k(role, whole, "", 1)] = statistic_value(q, db, j, AbstractStatistic(Conditional(VarSet(), atom.varset), 1.0))
        for c in letters:
            vs = binding.varset(c)
            norms[_k(role, c, "", 1)] = statistic_value(q, db, j, AbstractStatistic(Conditional(VarSet(), vs), 1.0))
        for c in letters:
            u = binding.varset(c)
            rest = "".join(l for l in letters if l != c)
            for p in ps:
                st = AbstractStatistic(Conditional(u, atom.varset - u), p)
                norms[_k(role, rest, c, p)] = statistic_value(q, db, j, st)
    return norms


def applicable_closed_forms(
    q: Query,
    db: Union[Mapping[str, Relation], Iterable[Relation]],
    p_set: Iterable[NormOrder] = (1, 2, 3, math.inf),
    include_estimates: bool = True,
) -> list[BoundReport]:
    """Every closed form that applies to ``q``, evaluated on ``db``."""
    binding = match_shape(q)
    if binding is None:
        return []
    ps = sorted(set(float(p) for p in p_set))
    norms = shape_norms(q, db, binding, set(ps) | {2.0, 3.0})
    if any(v == -math.inf for v in norms.values()):
        return []
    out = []
    for f in CLOSED_FORMS[binding.shape]:
        if f == "traditional" and not include_estimates:
            continue
        if f == "lpq_join":
            for p in ps:
                for qq in ps:
                    if not qq > 1 or (p == 2 and qq == 2):
                        continue
                    if (0 if math.isinf(p) else 1 / p) + (0 if math.isinf(qq) else 1 / qq) > 1 + 1e-12:
                        continue
                    out.append(closed_form("join", f, norms, p, qq))
            continue
        out.append(closed_form(binding.shape, f, norms))
    return out


def _formula_keys(formula: str, p: Optional[float], q: Optional[float]) -> list[NormKey]:
    inf = math.inf
    table = {
        "traditional": [("R", "XY", "", 1), ("S", "YZ", "", 1), ("R", "Y", "", 1), ("S", "Y", "", 1)],
        "panda_join": [("S", "YZ", "", 1), ("R", "X", "Y", inf), ("R", "XY", "", 1), ("S", "Z", "Y", inf)],
        "l2_join": [("R", "X", "Y", 2), ("S", "Z", "Y", 2)],
        "lpq_join": [("R", "X", "Y", p), ("S", "Z", "Y", q), ("S", "YZ", "", 1)],
        "agm_triangle": [("R", "XY", "", 1), ("S", "YZ", "", 1), ("T", "XZ", "", 1)],
        "panda_triangle": [("R", "XY", "", 1), ("S", "Z", "Y", inf)],
        "l2_triangle": [("R", "Y", "X", 2), ("S", "Z", "Y", 2), ("T", "X", "Z", 2)],
        "l3_triangle": [("R", "Y", "X", 3), ("S", "Y", "Z", 3), ("T", "XZ", "", 1)],
    }
    return [_k(*key) for key in table[formula]]


def closed_form_statistics(
    q: Query,
    db: Union[Mapping[str, Relation], Iterable[Relation]],
    binding: ShapeBinding,
    formula: str,
    p: Optional[NormOrder] = None,
    qq: Optional[NormOrder] = None,
) -> StatisticsSet:
    """The concrete statistics a closed form reads, measured on ``db``."""
    db = check_schema(db, q)
    out = []
    for role, v, u, pn in _formula_keys(formula, p, qq):
        j = binding.roles[role]
        cond = Conditional(binding.varset(u), binding.varset(v))
        st = AbstractStatistic(cond, pn)
        out.append(ConcreteStatistic(st, j, statistic_value(q, db, j, st)))
    return StatisticsSet(tuple(out))
