"""The polymatroid-bound linear program.

One LP variable per subset of query variables (indexed by bitmask). The
program maximizes h(full set) over polymatroids satisfying every statistic
constraint ``(1/p) h(U) + h(V|U) <= log2 B``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Optional

from .query_model import MAX_VARIABLES, Query, VarSet
from .stats_engine import ConcreteStatistic, StatisticsSet

LE, GE, EQ = "<=", ">=", "="

TAG_MONOTONE = "shannon-monotone"
TAG_SUBMODULAR = "shannon-submodular"
TAG_ZERO = "zero-empty"


def statistic_tag(index: int) -> str:
    return f"statistic({index})"


@dataclass(frozen=True)
class LinearConstraint:
    terms: dict[int, float]
    relation: str
    rhs: float
    tag: str = ""

    def __post_init__(self):
        if self.relation not in (LE, GE, EQ):
            raise ValueError(f"bad relation {self.relation!r}")
        if not math.isfinite(self.rhs):
            raise ValueError(f"constraint {self.tag}: rhs must be finite, got {self.rhs}")
        object.__setattr__(self, "terms", {k: float(c) for k, c in sorted(self.terms.items()) if c != 0})

    def value(self, x) -> float:
        return math.fsum(c * x[k] for k, c in self.terms.items())

    @property
    def is_statistic(self) -> bool:
        return self.tag.startswith("statistic(")


@dataclass
class LinearProgram:
    """``maximize objective·x`` subject to ``constraints`` and ``x >= 0``."""

    n_vars: int
    objective: dict[int, float]
    constraints: list[LinearConstraint]
    sense: str = "max"
    names: Optional[list[str]] = field(default=None, repr=False)

    def __post_init__(self):
        if self.sense != "max":
            raise ValueError("only maximization programs are built here")
        for k in self.objective:
            if not 0 <= k < self.n_vars:
                raise ValueError(f"objective index {k} out of range")

    def name(self, k: int) -> str:
        return self.names[k] if self.names else f"x{k}"

    def rows_tagged(self, pred: Callable[[str], bool]) -> list[int]:
        return [i for i, c in enumerate(self.constraints) if pred(c.tag)]

    def to_text(self) -> str:
        """Human-readable dump, one constraint per line; not an interchange format."""

        def fmt(terms: dict[int, float]) -> str:
            parts = []
            for k, c in terms.items():
                sign = "-" if c < 0 else "+"
                mag = abs(c)
                coef = "" if mag == 1 else f"{mag:g}*"
                parts.append(f"{sign} {coef}h({self.name(k)})")
            s = " ".join(parts) or "0"
            if s.startswith("+ "):
                return s[2:]
            return "-" + s[2:] if s.startswith("- ") else s

        lines = [f"maximize {fmt(self.objective)}", "subject to"]
        for c in self.constraints:
            lines.append(f"  {fmt(c.terms)} {c.relation} {c.rhs:.12g}    [{c.tag}]")
        lines.append("  h(.) >= 0")
        return "\n".join(lines)


def shannon_constraints(n: int) -> list[LinearConstraint]:
    """h(∅) = 0 plus elemental monotonicity and submodularity, in ``<=`` form.

    Row count is ``1 + n + C(n, 2) * 2**(n - 2)``.
    """
    if not 1 <= n <= MAX_VARIABLES:
        raise ValueError(f"variable count must be in [1, {MAX_VARIABLES}], got {n}")
    full = (1 << n) - 1
    rows = [LinearConstraint({0: 1.0}, EQ, 0.0, TAG_ZERO)]
    for i in range(n):
        rest = full ^ (1 << i)
        rows.append(LinearConstraint({rest: 1.0, full: -1.0}, LE, 0.0, TAG_MONOTONE))
    for i, j in combinations(range(n), 2):
        others = [k for k in range(n) if k not in (i, j)]
        for r in range(len(others) + 1):
            for combo in combinations(others, r):
                a = sum(1 << k for k in combo)
                # h(A) + h(A∪ij) - h(A∪i) - h(A∪j) <= 0
                terms = {a: 1.0, a | 1 << i | 1 << j: 1.0, a | 1 << i: -1.0, a | 1 << j: -1.0}
                rows.append(LinearConstraint(terms, LE, 0.0, TAG_SUBMODULAR))
    return rows


def statistic_terms(s: ConcreteStatistic) -> dict[int, float]:
    """Coefficients of ``(1/p) h(U) + h(UV) - h(U)``; h(∅) terms are dropped."""
    u, uv = s.cond.u.bits, s.cond.uv.bits
    inv_p = 0.0 if math.isinf(s.p) else 1.0 / s.p
    terms: dict[int, float] = {uv: 1.0}
    if u and u != uv:
        terms[u] = terms.get(u, 0.0) + inv_p - 1.0
    elif u == uv:
        terms = {u: inv_p}
    return {k: c for k, c in terms.items() if c != 0}


def statistic_constraint(s: ConcreteStatistic, index: int = 0) -> LinearConstraint:
    return LinearConstraint(statistic_terms(s), LE, s.log_b, statistic_tag(index))


def build_lp(q: Query, stats: StatisticsSet) -> LinearProgram:
    stats.validate(q)
    size = 1 << q.n
    names = [q.label(VarSet(b)) for b in range(size)]
    constraints = shannon_constraints(q.n)
    constraints += [statistic_constraint(s, i) for i, s in enumerate(stats)]
    return LinearProgram(size, {size - 1: 1.0}, constraints, "max", names)
