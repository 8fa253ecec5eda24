"""Full conjunctive queries: syntax tree, parser, and the variable-subset lattice.

Subsets of query variables are bitmasks: bit ``i`` is set iff the variable with
index ``i`` belongs to the set. The same encoding indexes the entropy vector
of the linear program, so ``VarSet(0)`` is the empty set and
``VarSet((1 << n) - 1)`` is the set of all variables.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

MAX_VARIABLES = 20


class QueryError(ValueError):
    """Raised for queries that are well-formed text but violate the query model."""


class QuerySyntaxError(QueryError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class VarSet:
    bits: int = 0

    def __post_init__(self):
        if self.bits < 0 or self.bits >= 1 << MAX_VARIABLES:
            raise ValueError(f"bitmask out of range: {self.bits}")

    @classmethod
    def of(cls, indices: Iterable[int]) -> "VarSet":
        bits = 0
        for i in indices:
            bits |= 1 << i
        return cls(bits)

    @classmethod
    def full(cls, n: int) -> "VarSet":
        return cls((1 << n) - 1)

    def __or__(self, other: "VarSet") -> "VarSet":
        return VarSet(self.bits | other.bits)

    def __and__(self, other: "VarSet") -> "VarSet":
        return VarSet(self.bits & other.bits)

    def __sub__(self, other: "VarSet") -> "VarSet":
        return VarSet(self.bits & ~other.bits)

    def __le__(self, other: "VarSet") -> bool:  # type: ignore[override]
        return self.bits & ~other.bits == 0

    def issubset(self, other: "VarSet") -> bool:
        return self <= other

    def __contains__(self, index: int) -> bool:
        return bool(self.bits >> index & 1)

    def __iter__(self) -> Iterator[int]:
        bits, i = self.bits, 0
        while bits:
            if bits & 1:
                yield i
            bits >>= 1
            i += 1

    def __len__(self) -> int:
        return bin(self.bits).count("1")

    def __bool__(self) -> bool:
        return self.bits != 0

    def __repr__(self) -> str:
        return f"VarSet({{{', '.join(map(str, self))}}})"


def subset_iter(n: int) -> list[VarSet]:
    """All ``2**n`` subsets of ``n`` variables in ascending bitmask order."""
    if not 0 <= n <= MAX_VARIABLES:
        raise ValueError(f"variable count must be in [0, {MAX_VARIABLES}], got {n}")
    return [VarSet(b) for b in range(1 << n)]


@dataclass(frozen=True)
class Variable:
    name: str
    index: int


@dataclass(frozen=True)
class Atom:
    relation: str
    vars: tuple[Variable, ...]

    @property
    def varset(self) -> VarSet:
        return VarSet.of(v.index for v in self.vars)

    @property
    def arity(self) -> int:
        return len(self.vars)

    def position(self, var_index: int) -> int:
        """Column position of a query variable inside this atom."""
        for pos, v in enumerate(self.vars):
            if v.index == var_index:
                return pos
        raise KeyError(var_index)

    def __str__(self) -> str:
        return f"{self.relation}({','.join(v.name for v in self.vars)})"


@dataclass(frozen=True)
class Conditional:
    """An abstract conditional (V|U); ``v`` is stored disjoint from ``u``."""

    u: VarSet
    v: VarSet

    def __post_init__(self):
        object.__setattr__(self, "v", self.v - self.u)
        if not (self.u | self.v):
            raise QueryError("conditional over the empty set")

    @property
    def uv(self) -> VarSet:
        return self.u | self.v


@dataclass(frozen=True)
class Query:
    name: str
    variables: tuple[Variable, ...]
    atoms: tuple[Atom, ...]
    _by_name: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_name", {v.name: v for v in self.variables})
        if not self.atoms:
            raise QueryError("a query needs at least one atom")
        if len(self.variables) > MAX_VARIABLES:
            raise QueryError(f"at most {MAX_VARIABLES} variables are supported")
        covered = VarSet()
        for a in self.atoms:
            covered |= a.varset
        if covered != self.head:
            missing = [v.name for v in self.variables if v.index not in covered]
            raise QueryError(f"head variable(s) {', '.join(missing)} not covered by any atom")

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def head(self) -> VarSet:
        return VarSet.full(self.n)

    def var(self, name: str) -> Variable:
        try:
            return self._by_name[name]
        except KeyError:
            raise QueryError(f"unknown variable {name!r} in query {self.name}") from None

    def varset(self, names: Iterable[str]) -> VarSet:
        return VarSet.of(self.var(x).index for x in names)

    def names(self, s: VarSet) -> list[str]:
        return [self.variables[i].name for i in s]

    def label(self, s: VarSet) -> str:
        """Compact rendering of a variable set, e.g. ``XY`` or ``{}``."""
        parts = self.names(s)
        if not parts:
            return "{}"
        if all(len(p) == 1 for p in parts):
            return "".join(parts)
        return ",".join(parts)

    def render(self) -> str:
        head = ",".join(v.name for v in self.variables)
        return f"{self.name}({head}) = " + ", ".join(str(a) for a in self.atoms)

    __str__ = render


def guards(q: Query, c: Conditional) -> list[Atom]:
    """Atoms whose variables contain both sides of ``c``."""
    return [q.atoms[j] for j in guard_indices(q, c)]


def guard_indices(q: Query, c: Conditional) -> list[int]:
    need = c.uv
    return [j for j, a in enumerate(q.atoms) if need <= a.varset]


# --- parsing ---------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<eq>:-|<-|=)
  | (?P<conj>,|&&|&|∧|/\\)
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise QuerySyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup or ""
        if kind == "ws":
            chunk = m.group()
            nl = chunk.count("\n")
            if nl:
                line += nl
                line_start = pos + chunk.rfind("\n") + 1
        else:
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def expect(self, kind: str, what: str) -> _Tok:
        tok = self.peek()
        if tok.kind != kind:
            found = tok.text or "end of input"
            raise QuerySyntaxError(f"expected {what}, found {found!r}", tok.line, tok.col)
        self.i += 1
        return tok

    def term(self) -> tuple[_Tok, list[_Tok]]:
        name = self.expect("ident", "a name")
        self.expect("lparen", "'('")
        args: list[_Tok] = []
        if self.peek().kind != "rparen":
            args.append(self.expect("ident", "a variable"))
            while self.peek().kind == "conj" and self.peek().text == ",":
                self.i += 1
                args.append(self.expect("ident", "a variable"))
        self.expect("rparen", "')'")
        if not args:
            raise QuerySyntaxError(f"{name.text} has arity 0", name.line, name.col)
        return name, args

    def query(self) -> tuple[tuple[_Tok, list[_Tok]], list[tuple[_Tok, list[_Tok]]]]:
        head = self.term()
        self.expect("eq", "'='")
        body = [self.term()]
        while self.peek().kind == "conj":
            self.i += 1
            body.append(self.term())
        self.expect("eof", "end of input")
        return head, body


def parse_query(text: str) -> Query:
    """Parse ``Name(vars) = Rel(vars), Rel(vars), ...`` into a :class:`Query`.

    Conjunction may be written ``,``, ``&``, ``&&``, ``/\\`` or ``∧``; ``:-``
    is accepted in place of ``=``. Variable order is the order of the head.
    """
    (qname, head_args), body = _Parser(text).query()
    variables: list[Variable] = []
    by_name: dict[str, Variable] = {}
    for tok in head_args:
        if tok.text in by_name:
            raise QuerySyntaxError(f"variable {tok.text} repeated in head", tok.line, tok.col)
        if len(variables) == MAX_VARIABLES:
            raise QuerySyntaxError(f"more than {MAX_VARIABLES} variables", tok.line, tok.col)
        v = Variable(tok.text, len(variables))
        variables.append(v)
        by_name[tok.text] = v
    atoms = []
    for rel, args in body:
        seen: set[str] = set()
        vs = []
        for tok in args:
            if tok.text in seen:
                raise QuerySyntaxError(
                    f"variable {tok.text} repeated in atom {rel.text}", tok.line, tok.col
                )
            seen.add(tok.text)
            if tok.text not in by_name:
                raise QuerySyntaxError(
                    f"variable {tok.text} of atom {rel.text} is not in the head (query is not full)",
                    tok.line,
                    tok.col,
                )
            vs.append(by_name[tok.text])
        atoms.append(Atom(rel.text, tuple(vs)))
    return Query(qname.text, tuple(variables), tuple(atoms))


def make_query(name: str, head: Sequence[str], atoms: Sequence[tuple[str, Sequence[str]]]) -> Query:
    """Build a query programmatically, with the same checks as the parser."""
    text = f"{name}({','.join(head)}) = " + ", ".join(f"{r}({','.join(vs)})" for r, vs in atoms)
    return parse_query(text)
