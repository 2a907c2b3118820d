"""Closed-form load bounds, expected output sizes and the Friedgut inequality."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np

from .packing import (
    Weighting, as_weighting, enumerate_packing_vertices, format_fraction, is_edge_cover,
    polytope_vertices, packing_rows, saturates, saturating_vertices,
)
from .query import Query, VarSet, residual_query
from .stats import Instance, QueryStats, compute_simple_stats, frequency_map

MAX_SKEW_VARIABLES = 20


@dataclass
class BoundReport:
    bound_name: str
    value_bits: float
    witness_packing: Weighting | None = None
    witness_x: tuple[str, ...] = ()
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "bound_name": self.bound_name,
            "value_bits": self.value_bits,
            "witness_packing": None if self.witness_packing is None else [format_fraction(v) for v in self.witness_packing],
            "witness_x": list(self.witness_x),
        }
        d.update(self.extra)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _log_K(u, M) -> float:
    if len(u) != len(M):
        raise ValueError(f"weighting has {len(u)} entries, statistics have {len(M)}")
    total = 0.0
    for uj, Mj in zip(u, M):
        if uj == 0:
            continue  # 0^0 = 1
        if uj < 0:
            raise ValueError("negative weight")
        if Mj <= 0:
            raise ValueError("M_j = 0 with a positive weight u_j")
        total += float(uj) * math.log(Mj)
    return total


def K(u, M) -> float:
    """∏ M_j^{u_j}."""
    return math.exp(_log_K(as_weighting(u), M))


def L_simple(u, M, p) -> float:
    """(K(u, M) / p)^(1/u), u the total weight."""
    u = as_weighting(u)
    total = sum(u)
    if total <= 0:
        raise ValueError("packing of value zero has no load bound")
    return math.exp((_log_K(u, M) - math.log(p)) / float(total))


def _argmax(cands):
    # ties broken by the lexicographically smallest witness
    best = None
    for value, key, payload in cands:
        if best is None or value > best[0] * (1 + 1e-12) or (abs(value - best[0]) <= 1e-12 * abs(best[0]) and key < best[1]):
            best = (value, key, payload)
    return best


def L_lower_simple(q: Query, M, p) -> tuple[float, Weighting]:
    """max of L(u, M, p) over the nonzero packing vertices, with the maximizing vertex.

    Dominated vertices are searched too: with unequal sizes, weight on a small
    relation can lower the bound.  On ties a non-dominated vertex wins.
    """
    if len(M) != q.num_atoms:
        raise ValueError("one size per atom required")
    M = list(M)
    pk = set(enumerate_packing_vertices(q))
    # atoms of size zero make the query output empty; they carry no weight
    verts = [v for v in polytope_vertices(q.num_atoms, packing_rows(q))
             if any(v) and all(M[j] > 0 or v[j] == 0 for j in range(len(v)))]
    if not verts:
        return 0.0, tuple(Fraction(0) for _ in q.atoms)
    best = _argmax((L_simple(v, M, p), (v not in pk, v), v) for v in verts)
    return best[0], best[2]


def _unit_scale(a: int, n: int, unit: str) -> float:
    if unit == "bits":
        return a * math.log2(n)
    if unit == "tuples":
        return 1.0
    raise ValueError(f"unknown unit {unit!r}")


def _sum_product(factors, variables):
    """Σ over assignments of ∏ factor values; factors are (vars, {key: float})."""
    factors = list(factors)
    remaining = list(variables)
    while remaining:
        v = min(remaining, key=lambda u: (sum(u in f[0] for f in factors), remaining.index(u)))
        remaining.remove(v)
        touching = [f for f in factors if v in f[0]]
        factors = [f for f in factors if v not in f[0]]
        if not touching:
            continue
        touching.sort(key=lambda f: len(f[1]))
        cur_vars, cur = touching[0]
        for fvars, ftab in touching[1:]:
            shared = [u for u in cur_vars if u in fvars]
            extra = [u for u in fvars if u not in cur_vars]
            spos = [fvars.index(u) for u in shared]
            epos = [fvars.index(u) for u in extra]
            index: dict[tuple, list] = {}
            for key, val in ftab.items():
                index.setdefault(tuple(key[i] for i in spos), []).append((tuple(key[i] for i in epos), val))
            cpos = [cur_vars.index(u) for u in shared]
            out = {}
            for key, val in cur.items():
                for ekey, fval in index.get(tuple(key[i] for i in cpos), ()):
                    nk = key + ekey
                    out[nk] = out.get(nk, 0.0) + val * fval
            cur_vars, cur = cur_vars + tuple(extra), out
        pos = cur_vars.index(v)
        summed = {}
        for key, val in cur.items():
            k2 = key[:pos] + key[pos + 1:]
            summed[k2] = summed.get(k2, 0.0) + val
        factors.append((cur_vars[:pos] + cur_vars[pos + 1:], summed))
    total = 1.0
    for fvars, ftab in factors:
        total *= ftab.get((), 0.0)
    return total


def L_x(u, q: Query, x, inst: Instance, p, unit: str = "bits", freqs=None) -> float:
    """(Σ_h K(u, M(h)) / p)^(1/u) for a packing u of q_x that saturates x.

    The sum runs over assignments h to x with a nonzero product, evaluated by
    variable elimination over the frequency maps of the positive-weight atoms.
    ``freqs`` may supply precomputed maps keyed by (atom index, x_j).
    """
    x = x if isinstance(x, VarSet) else VarSet(q, x)
    u = as_weighting(u)
    q_x = residual_query(q, x)
    if not saturates(q_x, u, x, q):
        raise ValueError(f"{u} does not saturate {x.names}")
    total = sum(u)
    if total <= 0:
        raise ValueError("packing of value zero has no load bound")
    rels = inst.for_query(q)
    factors = []
    for j, (a, r) in enumerate(zip(q.atoms, rels)):
        if u[j] == 0:
            continue
        xj = x.projection(j)
        fm = freqs[(j, xj)] if freqs is not None else frequency_map(r, a, xj)
        if not fm:
            return 0.0
        scale = _unit_scale(a.arity, inst.n, unit)
        w = float(u[j])
        factors.append((xj, {h: (c * scale) ** w for h, c in fm.items()}))
    s = _sum_product(factors, x.names)
    if s <= 0:
        return 0.0
    return math.exp((math.log(s) - math.log(p)) / float(total))


def L_lower_skew(q: Query, inst: Instance, p, unit: str = "bits") -> tuple[float, tuple[str, ...], Weighting]:
    """max over variable sets x and saturating vertices u of L_x(u); returns (value, x, u)."""
    if q.k > MAX_SKEW_VARIABLES:
        raise ValueError(f"{q.k} variables: 2^k subsets exceeds the cutoff of {MAX_SKEW_VARIABLES} variables")
    rels = inst.for_query(q)
    freqs = {}
    for j, (a, r) in enumerate(zip(q.atoms, rels)):
        for size in range(a.arity + 1):
            for xj in combinations(a.variables, size):
                freqs[(j, xj)] = frequency_map(r, a, xj)
    cands = []
    for size in range(q.k + 1):
        for names in combinations(q.variables, size):
            x = VarSet(q, names)
            q_x = residual_query(q, x)
            for v in saturating_vertices(q, x, q_x):
                val = L_x(v, q, x, inst, p, unit, freqs)
                cands.append((val, (size, names, v), (names, v)))
    best = _argmax(cands)
    if best is None:
        return 0.0, (), tuple(Fraction(0) for _ in q.atoms)
    return best[0], best[2][0], best[2][1]


def expected_answers(n: int, m, q: Query) -> float:
    """n^(k - a) ∏ m_j for independent uniform relations of exact sizes m_j."""
    if len(m) != q.num_atoms:
        raise ValueError("one cardinality per atom required")
    for a, mj in zip(q.atoms, m):
        if mj < 0 or mj > n ** a.arity:
            raise ValueError(f"cardinality {mj} infeasible for {a} over domain {n}")
    if any(mj == 0 for mj in m):
        return 0.0
    logv = (q.k - q.total_arity) * math.log(n) + sum(math.log(mj) for mj in m)
    return math.exp(logv)


def lower_bound_constant(q: Query, delta: float = 0.5) -> float:
    a = max(q.arities)
    return (a - delta) / (3 * a)


def replication_lower_bound(q: Query, M, L, delta: float = 0.5) -> BoundReport:
    """Lower bound on the replication rate at reducer size L bits.

    Reports the bound with and without the c^u constant, each maximized
    separately over packing vertices.
    """
    M = [float(v) for v in M]
    if len(M) != q.num_atoms:
        raise ValueError("one size per atom required")
    if any(L > Mj for Mj in M):
        return BoundReport("replication_rate", float("nan"), None, (),
                           {"applicable": False, "reason": "reducer size exceeds some relation size"})
    c = lower_bound_constant(q, delta)
    pref = L / sum(M)

    def value(u, const):
        logv = sum(float(uj) * math.log(Mj / L) for uj, Mj in zip(u, M) if uj)
        if const:
            logv += float(sum(u)) * math.log(c)
        return pref * math.exp(logv)

    free = _argmax((value(v, False), v, v) for v in enumerate_packing_vertices(q))
    # with c < 1 a dominated vertex can win, so search every vertex
    withc = _argmax((value(v, True), v, v) for v in polytope_vertices(q.num_atoms, packing_rows(q)))
    return BoundReport("replication_rate", free[0], free[2], (), {
        "applicable": True,
        "value_with_constant": withc[0],
        "witness_with_constant": [format_fraction(v) for v in withc[2]],
        "constant_c": c,
        "min_reducers": free[0] * sum(M) / L,
    })


_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


def friedgut_check(q: Query, cover, weights, rel_tol: float = 1e-9) -> tuple[float, float, bool]:
    """Both sides of Σ_x ∏_j w_j(x_j) <= ∏_j (Σ_t w_j(t)^(1/u_j))^(u_j).

    ``weights[j]`` is a nonnegative array of shape (n,)*a_j.  Atoms with zero
    cover weight contribute their maximum entry (the sup-norm limit).
    """
    u = as_weighting(cover)
    if not is_edge_cover(q, u):
        raise ValueError(f"{u} is not a fractional edge cover")
    if len(weights) != q.num_atoms:
        raise ValueError("one weight tensor per atom required")
    if q.k > len(_LETTERS):
        raise ValueError("too many variables for einsum")
    letter = {v: _LETTERS[i] for i, v in enumerate(q.variables)}
    ws = [np.asarray(w, dtype=float) for w in weights]
    for a, w in zip(q.atoms, ws):
        if w.ndim != a.arity:
            raise ValueError(f"weight tensor for {a} has {w.ndim} dimensions")
        if (w < 0).any():
            raise ValueError("negative weights")
    subscripts = ",".join("".join(letter[v] for v in a.variables) for a in q.atoms) + "->"
    lhs = float(np.einsum(subscripts, *ws))
    rhs = 1.0
    for uj, w in zip(u, ws):
        if uj == 0:
            rhs *= float(w.max()) if w.size else 0.0
        else:
            e = float(uj)
            rhs *= float(np.sum(w ** (1.0 / e))) ** e
    return lhs, rhs, lhs <= rhs * (1 + rel_tol)


def bound_report_simple(q: Query, M, p) -> BoundReport:
    v, w = L_lower_simple(q, M, p)
    return BoundReport("L_lower_simple", v, w, ())


def bound_report_skew(q: Query, inst: Instance, p) -> BoundReport:
    v, x, w = L_lower_skew(q, inst, p, "bits")
    vt, xt, wt = L_lower_skew(q, inst, p, "tuples")
    return BoundReport("L_lower_skew", v, w, x, {
        "value_tuples": vt, "witness_x_tuples": list(xt),
        "witness_packing_tuples": [format_fraction(c) for c in wt],
    })
