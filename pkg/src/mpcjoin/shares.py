"""Optimal HyperCube share exponents, their dual, and integer share rounding."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

from . import lp
from .bounds import L_lower_simple
from .packing import format_fraction, packing_rows, polytope_vertices
from .query import Atom, Query


class ConsistencyError(AssertionError):
    """The share LP and the closed-form vertex maximum disagree."""


def log_rational(value: float, p: int) -> Fraction:
    """log_p(value) as a Fraction; exact when value is an integer power of p."""
    if value <= 0:
        raise ValueError("log of a non-positive size")
    if p < 2:
        raise ValueError("p must be at least 2")
    approx = math.log(value) / math.log(p)
    k = round(approx)
    if k >= 0 and float(value).is_integer() and p ** k == int(value):
        return Fraction(k)
    return Fraction(approx)


@dataclass
class ShareAssignment:
    variables: tuple[str, ...]
    exponents: tuple[Fraction, ...]
    lam: Fraction
    p: int
    mu: tuple[Fraction, ...] = ()
    shares: tuple[int, ...] | None = None
    broadcast: tuple[str, ...] = ()  # atoms sent to every server instead of hashed

    def exponent(self, var: str) -> Fraction:
        return self.exponents[self.variables.index(var)]

    @property
    def load(self) -> float:
        """p^λ, the ideal load in the units of the input sizes."""
        return float(self.p) ** float(self.lam)

    def with_shares(self, budget: int | None = None) -> "ShareAssignment":
        s = round_shares(self.exponents, self.p, budget)
        return ShareAssignment(self.variables, self.exponents, self.lam, self.p, self.mu, s, self.broadcast)

    def plan(self) -> dict:
        out = {}
        for i, v in enumerate(self.variables):
            out[v] = {"exponent": format_fraction(self.exponents[i])}
            if self.shares is not None:
                out[v]["share"] = self.shares[i]
        return out

    def to_json(self) -> str:
        return json.dumps(self.plan(), sort_keys=True)


def share_lp(variables, atom_vars, rhs, budget=Fraction(1)) -> tuple[Fraction, tuple[Fraction, ...]]:
    """min λ s.t. Σ e_i <= budget and λ + Σ_{i in atom_vars[j]} e_i >= rhs[j], all >= 0.

    Ties are broken lexicographically: after λ, minimize e_1, then e_2, ...
    """
    variables = list(variables)
    n = len(variables) + 1  # e_1..e_k, λ
    rows = [([1] * len(variables) + [0], "<=", budget)]
    for vs, r in zip(atom_vars, rhs):
        row = [1 if v in vs else 0 for v in variables] + [1]
        rows.append((row, ">=", r))
    unit = lambda i: [1 if c == i else 0 for c in range(n)]
    res = lp.lex_minimize([unit(n - 1)] + [unit(i) for i in range(n - 1)], rows)
    if not res.optimal:
        raise lp.LPError(f"share LP is {res.status}")
    return res.x[-1], tuple(res.x[:-1])


def broadcast_atoms(M, p) -> list[int]:
    """Atoms with M_j <= max M / p; sending them everywhere costs at most the optimal load."""
    top = max(M)
    return [j for j, Mj in enumerate(M) if Mj * p <= top]


def solve_share_lp(q: Query, M, p: int, eliminate_broadcast: bool = True) -> ShareAssignment:
    if p < 2:
        raise ValueError("p must be at least 2")
    if len(M) != q.num_atoms:
        raise ValueError("one size per atom required")
    if any(Mj <= 0 for Mj in M):
        raise ValueError("sizes must be positive")
    mu = tuple(log_rational(Mj, p) for Mj in M)
    bc = broadcast_atoms(M, p) if eliminate_broadcast else []
    keep = [j for j in range(q.num_atoms) if j not in bc]
    lam, e = share_lp(q.variables, [set(q.atoms[j].variables) for j in keep], [mu[j] for j in keep])
    return ShareAssignment(q.variables, e, lam, p, mu, None, tuple(q.atoms[j].name for j in bc))


def solve_dual(q: Query, mu) -> tuple[Fraction, tuple[Fraction, ...], Fraction]:
    """max Σ μ_j f_j - f s.t. Σ f_j <= 1 and Σ_{j ∋ i} f_j <= f; returns (optimum, f_j, f)."""
    ell = q.num_atoms
    rows = [([1] * ell + [0], "<=", 1)]
    for v in q.variables:
        idx = set(q.atoms_containing(v))
        rows.append(([1 if j in idx else 0 for j in range(ell)] + [-1], "<=", 0))
    res = lp.maximize(list(mu) + [-1], rows)
    if not res.optimal:
        raise lp.LPError(f"dual LP is {res.status}")
    return res.objective, tuple(res.x[:-1]), res.x[-1]


def closed_form_load(q: Query, M, p: int, check: bool = True, rel_tol: float = 1e-9):
    """max over the packing vertices of L(u, M, p), with the maximizing vertex.

    With ``check`` set and every μ_j >= 1 the value is compared against p^λ
    from the share LP; a mismatch raises ConsistencyError.
    """
    value, vertex = L_lower_simple(q, M, p)
    if check and all(Mj >= p for Mj in M):
        sa = solve_share_lp(q, M, p, eliminate_broadcast=False)
        lp_log = float(sa.lam)
        cf_log = math.log(value) / math.log(p)
        if abs(lp_log - cf_log) > rel_tol * max(1.0, abs(cf_log)):
            raise ConsistencyError(f"share LP gives log_p load {lp_log}, vertex maximum gives {cf_log}")
    return value, vertex


def _floor_power(p: int, e: Fraction) -> int:
    """floor(p^e), exactly when the exponent has a small denominator."""
    if e <= 0:
        return 1
    if e.denominator <= 64 and e.numerator * p.bit_length() <= 4096:
        target = p ** e.numerator
        b = e.denominator
        r = int(round(target ** (1.0 / b))) if target.bit_length() < 1000 else 1 << (target.bit_length() // b)
        while r ** b > target:
            r -= 1
        while (r + 1) ** b <= target:
            r += 1
        return max(1, r)
    return max(1, math.floor(p ** float(e) + 1e-9))


def round_shares(e, p: int, budget: int | None = None) -> tuple[int, ...]:
    """p_i = max(1, floor(p^{e_i})), then shrink the largest share until ∏ p_i <= budget."""
    budget = p if budget is None else budget
    if budget < 1:
        raise ValueError("budget must be at least 1")
    shares = [_floor_power(p, Fraction(x)) for x in e]
    while math.prod(shares) > budget:
        i = max(range(len(shares)), key=lambda t: (shares[t], -t))
        shares[i] -= 1
    return tuple(shares)


def space_exponent(q: Query, M, p: int) -> float:
    """1 - min over nonzero packing vertices of (Σ ν_j u_j + 1/Σ u_j), after broadcasting the small atoms.

    ν_j is defined by M_j = max M / p^{ν_j}.
    """
    if p < 2:
        raise ValueError("p must be at least 2")
    if any(Mj <= 0 for Mj in M):
        raise ValueError("sizes must be positive")
    top = max(M)
    keep = [j for j in range(q.num_atoms) if j not in broadcast_atoms(M, p)]
    atoms = tuple(q.atoms[j] for j in keep)
    used = {v for a in atoms for v in a.variables}
    reduced = Query(tuple(v for v in q.variables if v in used), atoms, q.head)
    nu = [math.log(top / M[j]) / math.log(p) for j in keep]
    if any(not 0 <= v < 1 + 1e-12 for v in nu):
        raise ValueError(f"sizes cannot be normalized: exponents {nu}")
    best = min(sum(n * float(u) for n, u in zip(nu, vert)) + 1 / float(sum(vert))
               for vert in polytope_vertices(reduced.num_atoms, packing_rows(reduced)) if any(vert))
    return 1 - best
