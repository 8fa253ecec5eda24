"""Relations, degree sequences, log-domain lp-norms, and statistics sets.

All logarithms are base 2, so budgets and bounds are in bits.
"""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

from .query_model import Conditional, Query, QueryError, VarSet, guard_indices

NormOrder = float  # p in (0, inf]; math.inf is the max-norm


class StatisticsError(ValueError):
    pass


def parse_norm(p: Union[str, float, int]) -> NormOrder:
    if isinstance(p, str):
        s = p.strip().lower()
        if s in ("inf", "infinity", "∞"):
            return math.inf
        p = float(s)
    p = float(p)
    if not p > 0:
        raise StatisticsError(f"norm order must be positive, got {p}")
    return p


def format_norm(p: NormOrder) -> Union[str, int, float]:
    if math.isinf(p):
        return "inf"
    return int(p) if p == int(p) else p


def _plabel(p: NormOrder) -> str:
    return str(format_norm(p))


@dataclass(frozen=True)
class Relation:
    name: str
    columns: tuple[str, ...]
    tuples: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if len(set(self.columns)) != len(self.columns):
            raise StatisticsError(f"duplicate column names in {self.name}: {self.columns}")
        width = len(self.columns)
        # dict.fromkeys dedups while keeping first-appearance order
        rows = tuple(dict.fromkeys(tuple(t) for t in self.tuples))
        for t in rows:
            if len(t) != width:
                raise StatisticsError(f"tuple {t} of {self.name} has arity {len(t)}, expected {width}")
        object.__setattr__(self, "tuples", rows)

    @property
    def arity(self) -> int:
        return len(self.columns)

    def __len__(self) -> int:
        return len(self.tuples)

    def positions(self, attrs: Iterable[str]) -> tuple[int, ...]:
        out = []
        for a in attrs:
            try:
                out.append(self.columns.index(a))
            except ValueError:
                raise StatisticsError(f"relation {self.name} has no attribute {a!r}") from None
        return tuple(out)

    def project(self, positions: Sequence[int]) -> set[tuple[str, ...]]:
        return {tuple(t[i] for i in positions) for t in self.tuples}

    def active_domain(self) -> set[str]:
        return {x for t in self.tuples for x in t}

    def renamed(self, name: str | None = None, columns: Sequence[str] | None = None) -> "Relation":
        return Relation(name or self.name, tuple(columns or self.columns), self.tuples)


def load_relation_csv(path: Union[str, Path], name: str | None = None, has_header: bool = True) -> Relation:
    """Read a CSV file into a deduplicated relation.

    Headerless files get columns ``c0, c1, ...``. Ragged rows are rejected.
    """
    path = Path(path)
    name = name or path.stem
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if has_header:
        if not rows:
            raise StatisticsError(f"{path}: missing header row")
        columns, rows = tuple(c.strip() for c in rows[0]), rows[1:]
    else:
        if not rows:
            raise StatisticsError(f"{path}: empty file without header, arity unknown")
        columns = tuple(f"c{i}" for i in range(len(rows[0])))
    for lineno, r in enumerate(rows, start=2 if has_header else 1):
        if len(r) != len(columns):
            raise StatisticsError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(r)}")
    return Relation(name, columns, tuple(tuple(r) for r in rows))


@dataclass(frozen=True)
class DegreeSequence:
    degrees: tuple[int, ...]

    def __post_init__(self):
        d = tuple(int(x) for x in self.degrees)
        if any(x < 1 for x in d) or any(a < b for a, b in zip(d, d[1:])):
            raise StatisticsError(f"degrees must be positive and non-increasing: {d}")
        object.__setattr__(self, "degrees", d)

    def __len__(self) -> int:
        return len(self.degrees)

    def __iter__(self):
        return iter(self.degrees)


def degree_counts(r: Relation, v: Iterable[str], u: Iterable[str]) -> dict[tuple[str, ...], int]:
    """Map each distinct u-value of Π_{UV}(r) to its number of distinct v-values."""
    u = tuple(u)
    v = tuple(a for a in v if a not in u)
    upos, vpos = r.positions(u), r.positions(v)
    pairs = {(tuple(t[i] for i in upos), tuple(t[i] for i in vpos)) for t in r.tuples}
    counts: dict[tuple[str, ...], int] = defaultdict(int)
    for key, _ in pairs:
        counts[key] += 1
    return dict(counts)


def degree_sequence(r: Relation, v: Iterable[str], u: Iterable[str] = ()) -> DegreeSequence:
    """``deg_r(V|U)``: degrees of the U-nodes in the bipartite graph Π_{UV}(r), descending."""
    return DegreeSequence(tuple(sorted(degree_counts(r, v, u).values(), reverse=True)))


def log_lp_norm(d: Union[DegreeSequence, Sequence[int]], p: NormOrder) -> float:
    """``log2 ||d||_p`` computed with the largest degree factored out.

    An empty sequence gives ``-inf``: the relation is empty and so is any join
    that uses it.
    """
    degrees = tuple(d)
    if not degrees:
        return -math.inf
    if not p > 0:
        raise StatisticsError(f"norm order must be positive, got {p}")
    top = max(degrees)
    if math.isinf(p):
        return math.log2(top)
    if p == 1:
        return math.log2(sum(degrees))
    scaled = math.fsum((x / top) ** p for x in degrees)
    return math.log2(top) + math.log2(scaled) / p


@dataclass(frozen=True)
class AbstractStatistic:
    cond: Conditional
    p: NormOrder

    def __post_init__(self):
        if not self.p > 0:
            raise StatisticsError(f"norm order must be positive, got {self.p}")

    def label(self, q: Query, relation: str = "") -> str:
        return f"deg_{relation}({q.label(self.cond.v)}|{'' if not self.cond.u else q.label(self.cond.u)})"


@dataclass(frozen=True)
class ConcreteStatistic:
    stat: AbstractStatistic
    guard: int
    log_b: float

    def __post_init__(self):
        # B >= 1; -inf stands for an empty guard relation
        if not (self.log_b >= 0 or self.log_b == -math.inf) or math.isnan(self.log_b):
            raise StatisticsError(f"log2_b must be >= 0 (B >= 1), got {self.log_b}")

    @property
    def cond(self) -> Conditional:
        return self.stat.cond

    @property
    def p(self) -> NormOrder:
        return self.stat.p

    def label(self, q: Query) -> str:
        rel = q.atoms[self.guard].relation
        return f"||{self.stat.label(q, rel)}||_{_plabel(self.p)}"


@dataclass(frozen=True)
class StatisticsSet:
    stats: tuple[ConcreteStatistic, ...] = ()

    def __len__(self) -> int:
        return len(self.stats)

    def __iter__(self):
        return iter(self.stats)

    def __getitem__(self, i):
        return self.stats[i]

    def filter(self, keep) -> "StatisticsSet":
        return StatisticsSet(tuple(s for s in self.stats if keep(s)))

    def plus(self, *extra: ConcreteStatistic) -> "StatisticsSet":
        return StatisticsSet(self.stats + tuple(extra))

    def validate(self, q: Query) -> None:
        for i, s in enumerate(self.stats):
            if not 0 <= s.guard < len(q.atoms):
                raise StatisticsError(f"statistic {i}: guard index {s.guard} out of range")
            if not s.cond.uv <= q.atoms[s.guard].varset:
                raise StatisticsError(f"statistic {i}: atom {q.atoms[s.guard]} does not guard it")
            if s.cond.uv.bits >> q.n:
                raise StatisticsError(f"statistic {i}: variables outside the query")

    # --- JSON interchange --------------------------------------------------

    def to_json(self, q: Query) -> list[dict]:
        return [
            {
                "relation": q.atoms[s.guard].relation,
                "atom": s.guard,
                "u": q.names(s.cond.u),
                "v": q.names(s.cond.v),
                "p": format_norm(s.p),
                "log2_b": "-inf" if s.log_b == -math.inf else s.log_b,
            }
            for s in self.stats
        ]

    @classmethod
    def from_json(cls, q: Query, data: Sequence[Mapping]) -> "StatisticsSet":
        """Read the statistics file format. Attribute lists name query variables.

        ``"atom": null`` attaches the statistic to every atom over ``relation``
        that guards the conditional.
        """
        if not isinstance(data, list):
            raise StatisticsError("statistics file must hold a JSON array")
        out: list[ConcreteStatistic] = []
        for k, entry in enumerate(data):
            try:
                rel = entry["relation"]
                u = q.varset(entry.get("u", []))
                v = q.varset(entry["v"])
                p = parse_norm(entry["p"])
                log_b = entry["log2_b"]
                log_b = -math.inf if log_b in ("-inf", None) else float(log_b)
                cond = Conditional(u, v)
            except (KeyError, TypeError, ValueError, QueryError) as exc:
                raise StatisticsError(f"statistics entry {k}: {exc}") from None
            atom = entry.get("atom")
            if atom is None:
                targets = [j for j in guard_indices(q, cond) if q.atoms[j].relation == rel]
            else:
                targets = [int(atom)]
            if not targets:
                raise StatisticsError(f"statistics entry {k}: no atom over {rel} guards it")
            for j in targets:
                if not 0 <= j < len(q.atoms) or q.atoms[j].relation != rel:
                    raise StatisticsError(f"statistics entry {k}: atom {j} is not over relation {rel}")
                out.append(ConcreteStatistic(AbstractStatistic(cond, p), j, log_b))
        ss = cls(tuple(out))
        ss.validate(q)
        return ss

    def dumps(self, q: Query) -> str:
        return json.dumps(self.to_json(q), indent=2)


def atom_columns(q: Query, rel: Relation, atom_index: int, s: VarSet) -> list[str]:
    """Relation attribute names that the atom binds to the variables in ``s``."""
    atom = q.atoms[atom_index]
    return [rel.columns[atom.position(i)] for i in s]


def _as_db(db: Union[Mapping[str, Relation], Iterable[Relation]]) -> dict[str, Relation]:
    if isinstance(db, Mapping):
        return dict(db)
    return {r.name: r for r in db}


def check_schema(db: Union[Mapping[str, Relation], Iterable[Relation]], q: Query) -> dict[str, Relation]:
    db = _as_db(db)
    for a in q.atoms:
        if a.relation not in db:
            raise StatisticsError(f"relation {a.relation} is missing from the database")
        if db[a.relation].arity != a.arity:
            raise StatisticsError(
                f"atom {a} has arity {a.arity} but relation {a.relation} has {db[a.relation].arity} columns"
            )
    return db


def statistic_value(q: Query, db: Mapping[str, Relation], guard: int, stat: AbstractStatistic) -> float:
    """``log2 ||deg(V|U)||_p`` on the relation bound to atom ``guard``."""
    rel = db[q.atoms[guard].relation]
    u = atom_columns(q, rel, guard, stat.cond.u)
    v = atom_columns(q, rel, guard, stat.cond.v)
    return log_lp_norm(degree_sequence(rel, v, u), stat.p)


def compute_statistics(
    db: Union[Mapping[str, Relation], Iterable[Relation]],
    q: Query,
    requested: Iterable[AbstractStatistic],
) -> StatisticsSet:
    """Measure each requested statistic on its tightest guard."""
    db = check_schema(db, q)
    out = []
    for stat in requested:
        gs = guard_indices(q, stat.cond)
        if not gs:
            raise StatisticsError(
                f"statistic ({q.label(stat.cond.v)}|{q.label(stat.cond.u)}) has no guard in {q.name}"
            )
        best = min(gs, key=lambda j: (statistic_value(q, db, j, stat), j))
        out.append(ConcreteStatistic(stat, best, statistic_value(q, db, best, stat)))
    return StatisticsSet(tuple(out))


def default_statistics(q: Query, p_set: Iterable[NormOrder]) -> list[AbstractStatistic]:
    """Cardinalities (p = 1) and simple degree sequences, |U| = 1, for the other p.

    For p = 1 a degree statistic collapses to the cardinality of Π_{UV}, so the
    only ℓ1 statistic emitted per atom is its cardinality.
    """
    ps = list(dict.fromkeys(parse_norm(p) for p in p_set))
    out = []
    for atom in q.atoms:
        av = atom.varset
        for p in ps:
            if p == 1:
                out.append(AbstractStatistic(Conditional(VarSet(), av), p))
                continue
            if len(av) < 2:
                continue
            for var in atom.vars:
                u = VarSet.of([var.index])
                out.append(AbstractStatistic(Conditional(u, av - u), p))
    return out


def satisfaction_report(
    db: Union[Mapping[str, Relation], Iterable[Relation]],
    q: Query,
    stats: StatisticsSet,
    tol: float = 1e-9,
) -> list[tuple[int, float, float]]:
    """Statistics the database violates, as ``(index, measured log2 norm, log2_b)``."""
    db = check_schema(db, q)
    bad = []
    for i, s in enumerate(stats):
        measured = statistic_value(q, db, s.guard, s.stat)
        if measured > s.log_b + tol:
            bad.append((i, measured, s.log_b))
    return bad
