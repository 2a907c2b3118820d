"""Small dense LPs over exact rationals: two-phase tableau simplex with Bland's rule.

Problems are stated as ``minimize c.x subject to rows, x >= 0`` where each row
is ``(coefficients, sense, rhs)`` and sense is one of ``"<="``, ``">="``,
``"=="``.  All arithmetic is done in :class:`fractions.Fraction`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction


class LPError(RuntimeError):
    pass


@dataclass
class LPResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    x: list[Fraction] | None = None
    objective: Fraction | None = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _frac(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


class _Tableau:
    # rows[i] = coefficients over all columns followed by the rhs
    def __init__(self, rows, basis, ncols):
        self.rows = rows
        self.basis = basis
        self.ncols = ncols

    def pivot(self, r, c):
        row = self.rows[r]
        piv = row[c]
        if piv != 1:
            self.rows[r] = row = [v / piv for v in row]
        for i, other in enumerate(self.rows):
            if i != r and other[c] != 0:
                f = other[c]
                self.rows[i] = [a - f * b for a, b in zip(other, row)]
        self.basis[r] = c

    def reduced_costs(self, cost):
        # d_j = c_j - c_B . column_j
        d = list(cost) + [Fraction(0)]
        for r, b in enumerate(self.basis):
            cb = cost[b]
            if cb:
                row = self.rows[r]
                d = [dj - cb * a for dj, a in zip(d, row)]
        return d

    def run(self, cost, allowed):
        """Minimize cost over the current basis; Bland's rule on both choices."""
        while True:
            d = self.reduced_costs(cost)
            entering = next((j for j in range(self.ncols) if allowed[j] and d[j] < 0), None)
            if entering is None:
                return "optimal"
            best = None
            for r, row in enumerate(self.rows):
                a = row[entering]
                if a > 0:
                    ratio = row[-1] / a
                    key = (ratio, self.basis[r])
                    if best is None or key < best[0]:
                        best = (key, r)
            if best is None:
                return "unbounded"
            self.pivot(best[1], entering)

    def solution(self, n):
        x = [Fraction(0)] * n
        for r, b in enumerate(self.basis):
            if b < n:
                x[b] = self.rows[r][-1]
        return x


def minimize(c, rows) -> LPResult:
    n = len(c)
    c = [_frac(v) for v in c]
    norm = []
    for coeffs, sense, rhs in rows:
        if len(coeffs) != n:
            raise LPError(f"row has {len(coeffs)} coefficients, expected {n}")
        coeffs = [_frac(v) for v in coeffs]
        rhs = _frac(rhs)
        if sense not in ("<=", ">=", "=="):
            raise LPError(f"unknown constraint sense {sense!r}")
        if rhs < 0:
            coeffs = [-v for v in coeffs]
            rhs = -rhs
            sense = {"<=": ">=", ">=": "<=", "==": "=="}[sense]
        norm.append((coeffs, sense, rhs))

    n_slack = sum(1 for _, s, _ in norm if s != "==")
    n_art = sum(1 for _, s, _ in norm if s != "<=")
    ncols = n + n_slack + n_art
    rows, basis = [], []
    si, ai = n, n + n_slack
    for coeffs, sense, rhs in norm:
        row = coeffs + [Fraction(0)] * (n_slack + n_art) + [rhs]
        if sense == "<=":
            row[si] = Fraction(1)
            basis.append(si)
            si += 1
        else:
            if sense == ">=":
                row[si] = Fraction(-1)
                si += 1
            row[ai] = Fraction(1)
            basis.append(ai)
            ai += 1
        rows.append(row)

    t = _Tableau(rows, basis, ncols)
    art = set(range(n + n_slack, ncols))
    if art:
        phase1 = [Fraction(0)] * ncols
        for j in art:
            phase1[j] = Fraction(1)
        t.run(phase1, [True] * ncols)
        if sum(t.rows[r][-1] for r, b in enumerate(t.basis) if b in art) != 0:
            return LPResult("infeasible")
        # drive zero-valued artificials out of the basis, dropping redundant rows
        r = 0
        while r < len(t.rows):
            if t.basis[r] in art:
                col = next((j for j in range(n + n_slack) if t.rows[r][j] != 0), None)
                if col is None:
                    del t.rows[r]
                    del t.basis[r]
                    continue
                t.pivot(r, col)
            r += 1
    allowed = [j not in art for j in range(ncols)]
    cost = c + [Fraction(0)] * (ncols - n)
    status = t.run(cost, allowed)
    if status != "optimal":
        return LPResult(status)
    x = t.solution(n)
    return LPResult("optimal", x, sum(ci * xi for ci, xi in zip(c, x)))


def maximize(c, rows) -> LPResult:
    res = minimize([-_frac(v) for v in c], rows)
    if res.optimal:
        res.objective = -res.objective
    return res


def lex_minimize(objectives, rows) -> LPResult:
    """Minimize objectives[0], then objectives[1] among its optima, and so on.

    The returned point is the unique lexicographic minimum, so repeated calls
    on the same problem always give the same optimal solution.  The reported
    objective is that of ``objectives[0]``.
    """
    rows = list(rows)
    first = None
    res = None
    for obj in objectives:
        res = minimize(obj, rows)
        if not res.optimal:
            return res
        if first is None:
            first = res.objective
        rows.append((list(obj), "==", res.objective))
    res.objective = first
    return res
