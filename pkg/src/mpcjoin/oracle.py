"""Reference join by backtracking over hash indexes, kept independent of the numpy join."""

from __future__ import annotations

from .query import Query
from .stats import Instance

MAX_OUTPUT = 10**7


class OracleTooLarge(RuntimeError):
    pass


def oracle_join(q: Query, inst: Instance, limit: int = MAX_OUTPUT) -> set[tuple[int, ...]]:
    """All answers of q on inst as a set of tuples in head-variable order."""
    rels = inst.for_query(q)
    data = [[tuple(int(v) for v in row) for row in r.tuples] for r in rels]
    if any(not d for d in data):
        return set()
    # bind the atoms smallest-first, preferring atoms connected to what is bound
    order, bound = [], set()
    remaining = list(range(q.num_atoms))
    while remaining:
        j = min(remaining, key=lambda t: (-len(bound & set(q.atoms[t].variables)) if bound else 0, len(data[t]), t))
        remaining.remove(j)
        order.append((j, tuple(v for v in q.atoms[j].variables if v in bound)))
        bound |= set(q.atoms[j].variables)
    # index each atom on the variables already bound when it is visited
    indexes = []
    for j, key_vars in order:
        atom = q.atoms[j]
        pos = [atom.variables.index(v) for v in key_vars]
        idx: dict[tuple, list] = {}
        for row in data[j]:
            idx.setdefault(tuple(row[i] for i in pos), []).append(row)
        indexes.append((atom.variables, key_vars, idx))

    out = set()
    env: dict[str, int] = {}

    def visit(depth):
        if depth == len(indexes):
            out.add(tuple(env[v] for v in q.variables))
            if len(out) > limit:
                raise OracleTooLarge(f"more than {limit} answers")
            return
        vars_, key_vars, idx = indexes[depth]
        for row in idx.get(tuple(env[v] for v in key_vars), ()):
            newly = [v for v in vars_ if v not in env]
            for v, val in zip(vars_, row):
                env.setdefault(v, val)
            visit(depth + 1)
            for v in newly:
                del env[v]

    visit(0)
    return out
