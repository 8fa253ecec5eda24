"""Ground truth at desk scale.

Exact join evaluation, empirical entropy vectors of relations, the lifted
relations R_p, and the degree-stratified partitioner with its strong
satisfaction check.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Mapping, Optional, Sequence, Union

from .query_model import Query
from .stats_engine import (
    NormOrder,
    Relation,
    StatisticsError,
    StatisticsSet,
    atom_columns,
    check_schema,
    degree_counts,
    degree_sequence,
    log_lp_norm,
    satisfaction_report,
)

DEFAULT_OUTPUT_CAP = 10**7
_EPS = 1e-9


class OracleCapExceeded(RuntimeError):
    pass


# --- join evaluation -------------------------------------------------------


class _JoinPlan:
    """Generic-join search over the query's variable order.

    For every atom and every variable it binds, a hash index maps the values
    of the atom's earlier variables to the admissible values of that variable.
    """

    def __init__(self, q: Query, db: Mapping[str, Relation]):
        self.q = q
        self.n = q.n
        # steps[k]: list of (index, key_vars) for atoms containing variable k
        self.steps: list[list[tuple[dict, tuple[int, ...]]]] = [[] for _ in range(q.n)]
        self.empty = False
        for atom in q.atoms:
            rel = db[atom.relation]
            if not rel.tuples:
                self.empty = True
            order = sorted(range(atom.arity), key=lambda pos: atom.vars[pos].index)
            for depth, pos in enumerate(order):
                prev = order[:depth]
                index: dict[tuple, set] = defaultdict(set)
                for t in rel.tuples:
                    index[tuple(t[i] for i in prev)].add(t[pos])
                key_vars = tuple(atom.vars[i].index for i in prev)
                self.steps[atom.vars[pos].index].append((dict(index), key_vars))

    def candidates(self, k: int, binding: list) -> set:
        sets = []
        for index, key_vars in self.steps[k]:
            s = index.get(tuple(binding[i] for i in key_vars))
            if not s:
                return set()
            sets.append(s)
        sets.sort(key=len)
        out = set(sets[0])
        for s in sets[1:]:
            out &= s
            if not out:
                break
        return out

    def count(self, cap: Optional[int]) -> int:
        if self.empty:
            return 0
        binding: list = [None] * self.n
        total = 0

        def go(k: int) -> None:
            nonlocal total
            cands = self.candidates(k, binding)
            if k == self.n - 1:
                total += len(cands)
                if cap is not None and total > cap:
                    raise OracleCapExceeded(f"join output exceeds {cap} tuples")
                return
            for val in cands:
                binding[k] = val
                go(k + 1)

        go(0)
        return total

    def enumerate(self, cap: Optional[int]) -> list[tuple]:
        if self.empty:
            return []
        binding: list = [None] * self.n
        out: list[tuple] = []

        def go(k: int) -> None:
            for val in sorted(self.candidates(k, binding)):
                binding[k] = val
                if k == self.n - 1:
                    out.append(tuple(binding))
                    if cap is not None and len(out) > cap:
                        raise OracleCapExceeded(f"join output exceeds {cap} tuples")
                else:
                    go(k + 1)

        go(0)
        return out


def evaluate_join(
    q: Query,
    db: Union[Mapping[str, Relation], Iterable[Relation]],
    cap: Optional[int] = DEFAULT_OUTPUT_CAP,
) -> Relation:
    """Materialize Q(db) over the head variables."""
    db = check_schema(db, q)
    rows = _JoinPlan(q, db).enumerate(cap)
    return Relation(q.name, tuple(v.name for v in q.variables), tuple(rows))


def join_size(
    q: Query,
    db: Union[Mapping[str, Relation], Iterable[Relation]],
    cap: Optional[int] = DEFAULT_OUTPUT_CAP,
) -> int:
    """|Q(db)| without materializing the output."""
    db = check_schema(db, q)
    return _JoinPlan(q, db).count(cap)


# --- entropy ---------------------------------------------------------------


@dataclass(frozen=True)
class EntropyVector:
    """Joint entropies in bits; ``values[mask]`` is the entropy of the columns in ``mask``."""

    names: tuple[str, ...]
    values: tuple[float, ...]

    def __getitem__(self, mask: int) -> float:
        return self.values[mask]

    def h(self, *names: str) -> float:
        return self.values[self.mask(names)]

    def mask(self, names: Iterable[str]) -> int:
        m = 0
        for x in names:
            m |= 1 << self.names.index(x)
        return m

    def cond(self, v: Iterable[str], u: Iterable[str] = ()) -> float:
        u = tuple(u)
        return self.h(*u, *v) - self.h(*u)


def _entropy_of_counts(counts: Iterable[int], total: int) -> float:
    # H = log N - (1/N) Σ c log c
    s = math.fsum(c * math.log2(c) for c in counts if c > 1)
    return max(0.0, math.log2(total) - s / total)


def empirical_entropy(r: Relation, varmap: Optional[Mapping[str, int]] = None) -> EntropyVector:
    """Entropy vector of the uniform distribution over the tuples of ``r``.

    ``varmap`` assigns each attribute a bit position; by default attribute
    ``i`` is bit ``i``.
    """
    if not r.tuples:
        raise StatisticsError(f"relation {r.name} is empty; its uniform distribution is undefined")
    varmap = dict(varmap) if varmap is not None else {c: i for i, c in enumerate(r.columns)}
    k = max(varmap.values()) + 1 if varmap else 0
    names = [""] * k
    for attr, bit in varmap.items():
        names[bit] = attr
    cols = [r.columns.index(names[b]) for b in range(k)]
    total = len(r.tuples)
    values = [0.0] * (1 << k)
    for mask in range(1, 1 << k):
        pos = [cols[b] for b in range(k) if mask >> b & 1]
        counts = Counter(tuple(t[i] for i in pos) for t in r.tuples)
        values[mask] = _entropy_of_counts(counts.values(), total)
    return EntropyVector(tuple(names), tuple(values))


def entropy_statistic_value(e: EntropyVector, u: Sequence[str], v: Sequence[str], p: NormOrder) -> float:
    """``(1/p) h(U) + h(V|U)`` on an entropy vector."""
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    return inv_p * e.h(*u) + e.cond(v, u)


# --- lifting ---------------------------------------------------------------


def lift_relation(r: Relation, p: int) -> Relation:
    """The relation R_p: for each A-value a with B-block S_a, the product {a} × S_a^p."""
    if r.arity != 2:
        raise StatisticsError("lifting needs a binary relation (A, B)")
    if isinstance(p, bool) or not isinstance(p, int) or p < 1:
        raise StatisticsError(f"lifting is defined for integer p >= 1, got {p!r}")
    if not r.tuples:
        raise StatisticsError("lifting needs a nonempty relation")
    blocks: dict[str, list[str]] = defaultdict(list)
    for a, b in r.tuples:
        blocks[a].append(b)
    a_name, b_name = r.columns
    columns = (a_name,) + tuple(f"{b_name}{i}" for i in range(1, p + 1))
    rows = []
    for a, block in blocks.items():
        rows.extend((a,) + combo for combo in product(block, repeat=p))
    return Relation(f"{r.name}_{p}", columns, tuple(rows))


# --- strong satisfaction and partitioning ----------------------------------


def _allowed_u_count(log_b: float, p: NormOrder, d: int) -> float:
    """B^p / d^p, evaluated in the log domain."""
    if math.isinf(p):
        return math.inf if math.log2(d) <= log_b + _EPS else 0.0
    e = p * (log_b - math.log2(d))
    return math.inf if e > 1000 else 2.0**e


def strongly_satisfies(
    r: Relation, u: Sequence[str], v: Sequence[str], p: NormOrder, log_b: float
) -> Optional[int]:
    """Witness ``d = ||deg_r(V|U)||_inf`` if ``|Π_U(r)| <= B^p / d^p``, else ``None``.

    For p = inf the condition reduces to ``d <= B``. An empty relation is
    witnessed by d = 1.
    """
    counts = degree_counts(r, v, u)
    if not counts:
        return 1
    d = max(counts.values())
    if len(counts) <= _allowed_u_count(log_b, p, d) * (1 + _EPS):
        return d
    return None


@dataclass(frozen=True)
class PartitionResult:
    parts: tuple[Relation, ...]
    witness_degrees: tuple[int, ...]


def degree_stratum(d: int) -> int:
    """Stratum i with 2^(i-1) < d <= 2^i; degree 1 is stratum 0."""
    return (d - 1).bit_length()


def partition_bound(p: NormOrder, n_domain: int) -> int:
    """⌈2^p⌉ · ⌈log2 N⌉, with ⌈log2 N⌉ floored at 1 so singleton domains get one part."""
    factor = 1 if math.isinf(p) else math.ceil(2.0**p)
    return factor * max(1, math.ceil(math.log2(max(n_domain, 1))))


def partition_relation(
    r: Relation, u: Sequence[str], v: Sequence[str], p: NormOrder, log_b: float
) -> PartitionResult:
    """Split ``r`` into parts that each strongly satisfy ``||deg(V|U)||_p <= B``.

    Tuples are bucketed by the degree stratum of their u-value. Within a
    stratum, u-values are taken in descending degree and packed into chunks;
    a chunk opened at degree d holds at most ⌊B^p / d^p⌋ u-values.
    """
    u, v = tuple(u), tuple(a for a in v if a not in u)
    measured = log_lp_norm(degree_sequence(r, v, u), p)
    if measured > log_b + _EPS:
        raise StatisticsError(
            f"{r.name} does not satisfy the statistic: log2 norm {measured:.9g} > {log_b:.9g}"
        )
    if not r.tuples:
        return PartitionResult((r,), (1,))
    counts = degree_counts(r, v, u)
    upos = r.positions(u)
    by_u: dict[tuple, list[tuple]] = defaultdict(list)
    for t in r.tuples:
        by_u[tuple(t[i] for i in upos)].append(t)

    strata: dict[int, list[tuple]] = defaultdict(list)
    for key, d in counts.items():
        strata[degree_stratum(d)].append(key)

    parts: list[Relation] = []
    witnesses: list[int] = []
    for i in sorted(strata):
        keys = sorted(strata[i], key=lambda k: (-counts[k], k))
        pos = 0
        while pos < len(keys):
            d = counts[keys[pos]]
            cap = _allowed_u_count(log_b, p, d)
            size = max(1, int(math.floor(cap * (1 + _EPS))) if math.isfinite(cap) else len(keys))
            chunk = keys[pos : pos + size]
            pos += len(chunk)
            rows = tuple(t for k in chunk for t in by_u[k])
            parts.append(Relation(f"{r.name}#{len(parts)}", r.columns, rows))
            witnesses.append(d)
    return PartitionResult(tuple(parts), tuple(witnesses))


@dataclass(frozen=True)
class PartitionCost:
    c: int
    factors: tuple[int, ...]
    part_counts: tuple[int, ...]
    log2_bound: float
    log2_domain: float

    @property
    def log2_cost(self) -> float:
        """log2 of c · ∏ B_i^{w_i}, without the polylog N factor."""
        return math.log2(self.c) + self.log2_bound


def partition_factor(p: NormOrder) -> int:
    """⌈2^p⌉ per statistic; max-degree statistics are already strong and count 1."""
    return 1 if math.isinf(p) else math.ceil(2.0**p)


def partition_cost(
    q: Query,
    stats: StatisticsSet,
    db: Union[Mapping[str, Relation], Iterable[Relation]],
    log2_bound: float,
) -> PartitionCost:
    """Bookkeeping for the partition-then-evaluate algorithm; no join is executed."""
    db = check_schema(db, q)
    bad = satisfaction_report(db, q, stats)
    if bad:
        raise StatisticsError(f"database violates statistic(s) {[i for i, *_ in bad]}")
    factors, counts = [], []
    domain: set = set()
    for s in stats:
        rel = db[q.atoms[s.guard].relation]
        domain |= rel.active_domain()
        u = atom_columns(q, rel, s.guard, s.cond.u)
        v = atom_columns(q, rel, s.guard, s.cond.v)
        factors.append(partition_factor(s.p))
        counts.append(len(partition_relation(rel, u, v, s.p, s.log_b).parts))
    c = math.prod(factors)
    return PartitionCost(c, tuple(factors), tuple(counts), log2_bound, math.log2(max(len(domain), 1)))
