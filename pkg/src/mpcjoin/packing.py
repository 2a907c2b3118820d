"""Fractional edge packings and covers of a query, and the vertex set pk(q)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from math import comb

from .query import Query, VarSet

MAX_BASES = 10**7

Weighting = tuple[Fraction, ...]


class EnumerationTooLarge(RuntimeError):
    pass


def as_weighting(values) -> Weighting:
    return tuple(v if isinstance(v, Fraction) else Fraction(v) for v in values)


def _check_dim(q: Query, w):
    if len(w) != q.num_atoms:
        raise ValueError(f"weighting has {len(w)} entries, query has {q.num_atoms} atoms")


def variable_loads(q: Query, w) -> list[Fraction]:
    """Per-variable sums Σ_{j: i ∈ S_j} u_j, in head order."""
    w = as_weighting(w)
    _check_dim(q, w)
    return [sum((w[j] for j in q.atoms_containing(v)), Fraction(0)) for v in q.variables]


def is_edge_packing(q: Query, w) -> bool:
    w = as_weighting(w)
    _check_dim(q, w)
    return all(u >= 0 for u in w) and all(s <= 1 for s in variable_loads(q, w))


def is_tight(q: Query, w) -> bool:
    w = as_weighting(w)
    _check_dim(q, w)
    return all(u >= 0 for u in w) and all(s == 1 for s in variable_loads(q, w))


def is_edge_cover(q: Query, w) -> bool:
    w = as_weighting(w)
    _check_dim(q, w)
    return all(u >= 0 for u in w) and all(s >= 1 for s in variable_loads(q, w))


def _solve_square(a, b):
    """Exact Gaussian elimination; None if the system is singular."""
    n = len(a)
    m = [list(row) + [rhs] for row, rhs in zip(a, b)]
    for col in range(n):
        piv = next((r for r in range(col, n) if m[r][col] != 0), None)
        if piv is None:
            return None
        m[col], m[piv] = m[piv], m[col]
        pv = m[col][col]
        m[col] = [v / pv for v in m[col]]
        for r in range(n):
            if r != col and m[r][col] != 0:
                f = m[r][col]
                m[r] = [x - f * y for x, y in zip(m[r], m[col])]
    return tuple(row[-1] for row in m)


def polytope_vertices(dim: int, rows) -> list[Weighting]:
    """All vertices of {u : a.u <= b for (a, b) in rows}.

    Every choice of ``dim`` linearly independent rows made tight gives a
    basic solution; the feasible ones are the vertices.  Duplicate rows are
    merged first.
    """
    rows = list(dict.fromkeys((tuple(Fraction(v) for v in a), Fraction(b)) for a, b in rows))
    if comb(len(rows), dim) > MAX_BASES:
        raise EnumerationTooLarge(
            f"C({len(rows)}, {dim}) = {comb(len(rows), dim)} basic solutions exceeds {MAX_BASES}"
        )
    found = set()
    for subset in combinations(rows, dim):
        sol = _solve_square([a for a, _ in subset], [b for _, b in subset])
        if sol is None or sol in found:
            continue
        if all(sum(ai * ui for ai, ui in zip(a, sol)) <= b for a, b in rows):
            found.add(sol)
    return sorted(found)


def packing_rows(q: Query):
    """Constraint rows a.u <= b of the packing polytope of q (including u >= 0)."""
    ell = q.num_atoms
    rows = []
    for v in q.variables:
        idx = set(q.atoms_containing(v))
        rows.append(([1 if j in idx else 0 for j in range(ell)], 1))
    for j in range(ell):
        rows.append(([-1 if i == j else 0 for i in range(ell)], 0))
    return rows


def dominates(a, b) -> bool:
    """a dominates b: a >= b componentwise with at least one strict."""
    return all(x >= y for x, y in zip(a, b)) and any(x > y for x, y in zip(a, b))


def non_dominated(points) -> list[Weighting]:
    return [p for p in points if not any(dominates(o, p) for o in points)]


def enumerate_packing_vertices(q: Query) -> list[Weighting]:
    """pk(q): the non-dominated vertices of the fractional edge packing polytope."""
    return non_dominated(polytope_vertices(q.num_atoms, packing_rows(q)))


def max_packing_value(q: Query) -> Fraction:
    """τ*, the largest total weight of a fractional edge packing."""
    return max(sum(v) for v in enumerate_packing_vertices(q))


def saturates(q_x: Query, w, x: VarSet, q: Query) -> bool:
    """Whether packing w of the residual q_x puts weight >= 1 on every variable of x in q."""
    w = as_weighting(w)
    if not is_edge_packing(q_x, w):
        raise ValueError(f"{w} is not an edge packing of the residual query {q_x}")
    return all(sum((w[j] for j in q.atoms_containing(v)), Fraction(0)) >= 1 for v in x)


def saturating_vertices(q: Query, x: VarSet, q_x: Query) -> list[Weighting]:
    """Nonzero vertices of the packings of q_x that saturate x, every weight capped at 1.

    The cap only binds on nullary residual atoms, whose weight is otherwise
    unconstrained by the packing rows.
    """
    ell = q.num_atoms
    rows = packing_rows(q_x)
    for j in range(ell):
        rows.append(([1 if i == j else 0 for i in range(ell)], 1))
    for v in x:
        idx = set(q.atoms_containing(v))
        rows.append(([-1 if j in idx else 0 for j in range(ell)], -1))
    return [v for v in polytope_vertices(ell, rows) if any(v)]


@dataclass(frozen=True)
class ExtendedWeighting:
    base: Weighting
    slack: Weighting  # one entry per variable, head order

    def total_weight(self, q: Query) -> Fraction:
        """Σ_j a_j u_j + Σ_i u'_i, which equals k for a tight extension."""
        return sum((a * u for a, u in zip(q.arities, self.base)), Fraction(0)) + sum(self.slack, Fraction(0))


def extend_to_tight(q: Query, w) -> ExtendedWeighting:
    """Add a unary atom per variable carrying that variable's slack."""
    w = as_weighting(w)
    _check_dim(q, w)
    if any(u < 0 for u in w):
        raise ValueError(f"negative weight in {w}")
    slack = tuple(1 - s for s in variable_loads(q, w))
    if any(s < 0 for s in slack):
        raise ValueError(f"{w} is not an edge packing: negative slack {slack}")
    return ExtendedWeighting(w, slack)


def format_fraction(f: Fraction) -> str:
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


def vertices_to_json(vertices) -> str:
    return json.dumps([[format_fraction(v) for v in vert] for vert in vertices])


def vertices_from_json(text: str) -> list[Weighting]:
    return [tuple(Fraction(v) for v in vert) for vert in json.loads(text)]
