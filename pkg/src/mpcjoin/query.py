"""Full conjunctive queries without self-joins, their hypergraphs and residuals."""

from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import chain


class QueryError(ValueError):
    """A query that parses but violates a structural invariant."""


class QuerySyntaxError(QueryError):
    def __init__(self, message: str, pos: int, text: str):
        super().__init__(f"{message} at position {pos}: {text[:pos]}>>>{text[pos:]}")
        self.pos = pos


@dataclass(frozen=True)
class Atom:
    name: str
    variables: tuple[str, ...]

    @property
    def arity(self) -> int:
        return len(self.variables)

    def __str__(self) -> str:
        return f"{self.name}({','.join(self.variables)})"


@dataclass(frozen=True)
class Query:
    """q(x1..xk) :- S1(..), ..., Sl(..).

    Variable order is head order and is used for every vector indexed by
    variable; atom order is body order.  Atoms may be nullary only when the
    query is a residual.
    """

    variables: tuple[str, ...]
    atoms: tuple[Atom, ...]
    head: str = "q"

    def __post_init__(self):
        if len(set(self.variables)) != len(self.variables):
            raise QueryError(f"repeated head variable in {self.variables}")
        if not self.atoms:
            raise QueryError("query has no atoms")
        names = [a.name for a in self.atoms]
        if len(set(names)) != len(names):
            dup = next(n for n in names if names.count(n) > 1)
            raise QueryError(f"self-join: relation {dup} appears more than once")
        for a in self.atoms:
            if len(set(a.variables)) != len(a.variables):
                raise QueryError(f"repeated variable within atom {a}")
        body = set(chain.from_iterable(a.variables for a in self.atoms))
        head = set(self.variables)
        if body - head:
            raise QueryError(f"query is not full: {sorted(body - head)} missing from head")
        if head - body:
            raise QueryError(f"head variables {sorted(head - body)} do not occur in the body")

    @property
    def k(self) -> int:
        return len(self.variables)

    @property
    def num_atoms(self) -> int:
        return len(self.atoms)

    @property
    def arities(self) -> tuple[int, ...]:
        return tuple(a.arity for a in self.atoms)

    @property
    def total_arity(self) -> int:
        return sum(self.arities)

    def var_index(self, name: str) -> int:
        return self.variables.index(name)

    def atom(self, name: str) -> Atom:
        for a in self.atoms:
            if a.name == name:
                return a
        raise KeyError(name)

    def atoms_containing(self, var: str) -> list[int]:
        return [j for j, a in enumerate(self.atoms) if var in a.variables]

    def sort_vars(self, names) -> tuple[str, ...]:
        """Order a collection of this query's variables by head order."""
        names = set(names)
        return tuple(v for v in self.variables if v in names)

    def __str__(self) -> str:
        body = ", ".join(str(a) for a in self.atoms)
        return f"{self.head}({','.join(self.variables)}) :- {body}"


class VarSet:
    """A subset x of a query's variables with its per-atom projections x_j."""

    def __init__(self, query: Query, names=()):
        names = tuple(names)
        unknown = set(names) - set(query.variables)
        if unknown:
            raise QueryError(f"variables {sorted(unknown)} are not in the query")
        self.query = query
        self.names = query.sort_vars(names)
        self._set = frozenset(self.names)

    @property
    def d(self) -> int:
        return len(self.names)

    def projection(self, j: int) -> tuple[str, ...]:
        """x_j = x ∩ vars(S_j), in atom column order."""
        return tuple(v for v in self.query.atoms[j].variables if v in self._set)

    @property
    def projections(self) -> tuple[tuple[str, ...], ...]:
        return tuple(self.projection(j) for j in range(self.query.num_atoms))

    @property
    def d_j(self) -> tuple[int, ...]:
        return tuple(len(p) for p in self.projections)

    def __contains__(self, v) -> bool:
        return v in self._set

    def __iter__(self):
        return iter(self.names)

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other) -> bool:
        return isinstance(other, VarSet) and other.query == self.query and other._set == self._set

    def __hash__(self) -> int:
        return hash((self.query, self._set))

    def __repr__(self) -> str:
        return f"VarSet({{{', '.join(self.names)}}})"


_TOKEN = re.compile(r"\s*(?:(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<punct>:-|[(),.]))")


def _tokenize(text: str):
    pos = 0
    tokens = []
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise QuerySyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        start = m.start("ident") if m.group("ident") else m.start("punct")
        tokens.append((m.group("ident") or m.group("punct"), start, bool(m.group("ident"))))
        pos = m.end()
    tokens.append(("<end>", len(text), False))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def expect(self, value=None, ident=False):
        tok, pos, is_ident = self.tokens[self.i]
        if ident and not is_ident:
            raise QuerySyntaxError(f"expected identifier, found {tok!r}", pos, self.text)
        if value is not None and tok != value:
            raise QuerySyntaxError(f"expected {value!r}, found {tok!r}", pos, self.text)
        self.i += 1
        return tok, pos

    def atom(self, allow_nullary: bool):
        name, pos = self.expect(ident=True)
        self.expect("(")
        args = []
        if self.peek()[0] == ")":
            if not allow_nullary:
                raise QuerySyntaxError(f"atom {name} has no variables", self.peek()[1], self.text)
        else:
            args.append(self.expect(ident=True)[0])
            while self.peek()[0] == ",":
                self.expect(",")
                args.append(self.expect(ident=True)[0])
        self.expect(")")
        return name, tuple(args), pos

    def query(self, allow_nullary: bool) -> Query:
        head, head_vars, _ = self.atom(allow_nullary)
        self.expect(":-")
        body = [self.atom(allow_nullary)]
        while self.peek()[0] == ",":
            self.expect(",")
            body.append(self.atom(allow_nullary))
        if self.peek()[0] == ".":
            self.expect(".")
        self.expect("<end>")
        return Query(head_vars, tuple(Atom(n, v) for n, v, _ in body), head=head)


def parse_query(text: str, allow_nullary: bool = False) -> Query:
    """Parse ``Head(v1,...,vk) :- S1(...), S2(...), ...``.

    Nullary atoms such as ``S1()`` are rejected unless ``allow_nullary`` is
    set (they only arise as residual atoms).
    """
    return _Parser(text).query(allow_nullary)


def hypergraph(q: Query) -> list[frozenset[str]]:
    return [frozenset(a.variables) for a in q.atoms]


def residual_query(q: Query, x) -> Query:
    """Remove the variables of x from every atom; emptied atoms stay as nullary atoms."""
    xs = x if isinstance(x, VarSet) else VarSet(q, x)
    if xs.query != q:
        raise QueryError("variable set belongs to a different query")
    atoms = tuple(Atom(a.name, tuple(v for v in a.variables if v not in xs)) for a in q.atoms)
    return Query(tuple(v for v in q.variables if v not in xs), atoms, head=q.head)
