"""Skew-aware one-round algorithms: the heavy-hitter join and the bin-combination algorithm."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np

from .localjoin import Table, join_all, unique_rows
from .packing import format_fraction
from .query import Query, VarSet, residual_query
from .shares import log_rational, round_shares, share_lp
from .shuffle import HashFamily, LoadReport, route_counts, route_rows
from .stats import (
    BinCombination, Instance, QueryStats, columns, empty_combination, enumerate_bin_combinations,
    frequency_map, is_heavy, tuple_frequencies,
)


class InvariantViolation(AssertionError):
    pass


@dataclass
class Part:
    """Rows of one relation routed by one hash family into servers [offset, offset + size)."""

    j: int
    rows: np.ndarray
    hashed_vars: tuple[str, ...]
    family: HashFamily
    offset: int


def dispatch(parts, num_relations: int, num_servers: int, materialize: bool):
    counts = np.zeros((num_relations, num_servers), dtype=np.int64)
    frags = [[] for _ in range(num_relations)]
    for part in parts:
        if part.rows.shape[0] == 0:
            continue
        size = part.family.num_servers
        counts[part.j, part.offset: part.offset + size] += route_counts(part.rows, part.hashed_vars, part.family)
        if materialize:
            idx, srv = route_rows(part.rows, part.hashed_vars, part.family)
            frags[part.j].append((part.rows[idx], srv + part.offset))
    return counts, frags


def join_fragments(q: Query, frags, limit: int = 10**7) -> tuple[np.ndarray, np.ndarray]:
    """Distinct answers and per-server answer counts from server-tagged fragments."""
    tables = []
    for a, fl in zip(q.atoms, frags):
        rows = np.concatenate([r for r, _ in fl]) if fl else np.zeros((0, a.arity), dtype=np.int64)
        srv = np.concatenate([s for _, s in fl]) if fl else np.zeros(0, dtype=np.int64)
        tables.append(Table(("@server",) + a.variables, np.column_stack([srv, rows])))
    res = join_all(tables, limit)
    return unique_rows(res.project(q.variables)), res.rows[:, res.columns.index("@server")]


# ---------------------------------------------------------------- skew join


@dataclass
class HeavyAllocation:
    cls: str  # "H12", "H1" or "H2"
    value: int
    servers: int
    grid: tuple[int, ...]
    weight: int  # K(h)


@dataclass
class SkewJoinResult:
    outputs: np.ndarray | None
    report: LoadReport
    allocations: list[HeavyAllocation]
    terms: dict[str, float]  # m1/p, m2/p, L1, L2, L12 in tuples
    servers_total: int

    @property
    def envelope(self) -> float:
        return max(self.terms.values())


def join_shape(q: Query):
    """(x, y, z) for a query of the form S1(x,z), S2(y,z)."""
    if q.num_atoms != 2 or q.arities != (2, 2):
        raise ValueError(f"skew join needs two binary atoms, got {q}")
    a1, a2 = q.atoms
    shared = set(a1.variables) & set(a2.variables)
    if len(shared) != 1:
        raise ValueError(f"atoms must share exactly one variable, got {q}")
    (z,) = shared
    x = next(v for v in a1.variables if v != z)
    y = next(v for v in a2.variables if v != z)
    return x, y, z


def grid_dims(servers: int, m1: int, m2: int) -> tuple[int, int]:
    """p1 x p2 <= servers with p1/p2 close to m1/m2, for a cartesian product."""
    p1 = int(math.floor(math.sqrt(servers * m1 / m2))) if m2 else servers
    p1 = min(max(p1, 1), servers)
    p2 = max(1, servers // p1)
    return p1, p2


def skew_join(q: Query, inst: Instance, p: int, seed: int, compute_outputs: bool = True,
              inclusive: bool = False, limit: int = 10**7) -> SkewJoinResult:
    x, y, z = join_shape(q)
    a1, a2 = q.atoms
    r1, r2 = inst.for_query(q)
    m1, m2 = r1.m, r2.m
    f1 = frequency_map(r1, a1, (z,))
    f2 = frequency_map(r2, a2, (z,))
    heavy1 = {h[0] for h, c in f1.items() if is_heavy(c, m1, p, inclusive)}
    heavy2 = {h[0] for h, c in f2.items() if is_heavy(c, m2, p, inclusive)}
    H12 = sorted(heavy1 & heavy2)
    H1 = sorted(heavy1 - heavy2)
    H2 = sorted(heavy2 - heavy1)
    z1 = r1.tuples[:, a1.variables.index(z)]
    z2 = r2.tuples[:, a2.variables.index(z)]
    c1 = lambda h: f1.get((h,), 0)
    c2 = lambda h: f2.get((h,), 0)

    parts, allocs = [], []
    heavy_all = np.array(sorted(heavy1 | heavy2), dtype=np.int64)
    light = HashFamily(seed, (z,), (p,))
    parts.append(Part(0, r1.tuples[~np.isin(z1, heavy_all)], a1.variables, light, 0))
    parts.append(Part(1, r2.tuples[~np.isin(z2, heavy_all)], a2.variables, light, 0))
    offset = p

    K12 = {h: c1(h) * c2(h) for h in H12}
    tot12 = sum(K12.values())
    for h in H12:
        ph = math.ceil(p * K12[h] / tot12)
        g1, g2 = grid_dims(ph, c1(h), c2(h))
        fam = HashFamily(seed, (x, y), (g1, g2))
        parts.append(Part(0, r1.tuples[z1 == h], a1.variables, fam, offset))
        parts.append(Part(1, r2.tuples[z2 == h], a2.variables, fam, offset))
        allocs.append(HeavyAllocation("H12", h, ph, (g1, g2), K12[h]))
        offset += ph

    tot = {}
    for cls, H, j, cnt, var in (("H1", H1, 0, c1, x), ("H2", H2, 1, c2, y)):
        tot[cls] = sum(cnt(h) for h in H)
        for h in H:
            ph = math.ceil(p * cnt(h) / tot[cls])
            fam = HashFamily(seed, (var,), (ph,))
            # the heavy side is partitioned on its free variable, the other side is broadcast
            parts.append(Part(0, r1.tuples[z1 == h], a1.variables, fam, offset))
            parts.append(Part(1, r2.tuples[z2 == h], a2.variables, fam, offset))
            allocs.append(HeavyAllocation(cls, h, ph, (ph,), cnt(h)))
            offset += ph

    counts, frags = dispatch(parts, 2, offset, compute_outputs)
    bpt = tuple(a.arity * math.log2(inst.n) for a in q.atoms)
    outputs = per_server = None
    if compute_outputs:
        outputs, srv = join_fragments(q, frags, limit)
        per_server = np.bincount(srv, minlength=offset)
    terms = {
        "m1/p": m1 / p, "m2/p": m2 / p,
        "L1": tot.get("H1", 0) / p, "L2": tot.get("H2", 0) / p,
        "L12": math.sqrt(tot12 / p),
    }
    report = LoadReport((a1.name, a2.name), counts, bpt, bpt[0] * m1 + bpt[1] * m2, per_server,
                        {"algorithm": "skew-join", "heavy": {"H12": len(H12), "H1": len(H1), "H2": len(H2)}})
    return SkewJoinResult(outputs, report, allocs, terms, offset)


# ------------------------------------------------------ bin combinations


@dataclass
class BinLPSolution:
    B: BinCombination
    alpha: Fraction
    exponents: dict[str, Fraction]
    lam: Fraction


def solve_bin_lp(q: Query, B: BinCombination, m, p: int, c_prime_size: int) -> BinLPSolution:
    """min λ s.t. λ + Σ_{vars(S_j) - x_j} e_i >= μ_j - β_j and Σ e_i <= 1 - α, in tuple units."""
    alpha = log_rational(max(1, c_prime_size), p)
    if alpha > 1:
        raise InvariantViolation(f"|C'(B)| = {c_prime_size} exceeds p = {p}")
    x = set(B.x)
    free = [v for v in q.variables if v not in x]
    mu = [log_rational(max(mj, 1), p) for mj in m]
    atom_vars = [set(a.variables) - x for a in q.atoms]
    lam, e = share_lp(free, atom_vars, [mu[j] - B.beta[j] for j in range(q.num_atoms)], 1 - alpha)
    return BinLPSolution(B, alpha, dict(zip(free, e)), lam)


def exceeds(count: int, base: int, p: int, exponent: Fraction) -> bool:
    """count > base / p^exponent, exactly when the exponent has a small denominator."""
    exponent = Fraction(exponent)
    if exponent.denominator <= 64 and abs(exponent.numerator) <= 64:
        a, b = exponent.numerator, exponent.denominator
        if a >= 0:
            return count ** b * p ** a > base ** b
        return count ** b > base ** b * p ** (-a)
    return math.log(count) > math.log(base) - float(exponent) * math.log(p) if count > 0 else False


def detect_overweight(count: int, m_j: int, n_bc: int, p: int, beta_prime: Fraction, e_sum: Fraction) -> bool:
    """A heavy hitter is overweight when its count exceeds N_bc m_j / p^(β' + Σ e)."""
    return is_heavy(count, m_j, p) and exceeds(count, n_bc * m_j, p, beta_prime + e_sum)


@dataclass
class BinPlan:
    q: Query
    p: int
    qs: QueryStats
    n_bc: int
    combinations: list[BinCombination]
    c_prime: dict[BinCombination, list[tuple]]  # assignments in head order of B.x
    lps: dict[BinCombination, BinLPSolution]

    @property
    def active(self) -> list[BinCombination]:
        return [B for B in self.combinations if self.c_prime.get(B)]

    def virtual_servers(self) -> int:
        return self.p * len(self.active)


def _sub_subsets(atom_vars, base) -> list[tuple[str, ...]]:
    """Subsets of the atom's variables strictly containing base, in atom column order."""
    base = set(base)
    out = []
    for size in range(len(base) + 1, len(atom_vars) + 1):
        for s in combinations(atom_vars, size):
            if base <= set(s):
                out.append(s)
    return out


def build_C_prime(qs: QueryStats, n_bc: int, combos) -> tuple[dict, dict]:
    """C'(B) and the LP solution of every B with C'(B) nonempty, in increasing |x|."""
    q, p = qs.q, qs.p
    c_prime: dict[BinCombination, set] = {empty_combination(q): {()}}
    lps: dict[BinCombination, BinLPSolution] = {}
    realized = set(combos)
    for size in range(q.k + 1):
        level = sorted((B for B in c_prime if len(B.x) == size), key=BinCombination.key)
        for B in level:
            hs = sorted(c_prime[B])
            if len(hs) > p:
                raise InvariantViolation(f"|C'(B)| = {len(hs)} > p = {p} for {B.to_json()}")
            sol = solve_bin_lp(q, B, qs.m, p, len(hs))
            lps[B] = sol
            xs = VarSet(q, B.x)
            for j, a in enumerate(q.atoms):
                xj = xs.projection(j)
                for ext in _sub_subsets(a.variables, xj):
                    heavy = qs.heavy[j][ext]
                    if not heavy:
                        continue
                    e_sum = sum((sol.exponents[v] for v in ext if v not in xj), Fraction(0))
                    pos = [ext.index(v) for v in xj]
                    by_proj: dict[tuple, list] = {}
                    for hj, c in heavy.items():
                        by_proj.setdefault(tuple(hj[i] for i in pos), []).append((hj, c))
                    new_x = q.sort_vars(set(B.x) | set(ext))
                    new_vs = VarSet(q, new_x)
                    for h in hs:
                        env = dict(zip(B.x, h))
                        h_proj = tuple(env[v] for v in xj)
                        for hj, c in by_proj.get(h_proj, ()):
                            if not detect_overweight(c, qs.m[j], n_bc, p, B.beta[j], e_sum):
                                continue
                            env2 = dict(env)
                            env2.update(zip(ext, hj))
                            B2 = qs.combination_of(new_vs, env2)
                            if B2 is None:
                                continue
                            assert B2 in realized
                            c_prime.setdefault(B2, set()).add(tuple(env2[v] for v in new_x))
    return {B: sorted(v) for B, v in c_prime.items()}, lps


def plan_bin_combination(q: Query, inst: Instance, p: int, round_down: bool = False) -> BinPlan:
    qs = QueryStats(q, inst, p, round_down)
    combos = enumerate_bin_combinations(q, inst, qs.p, qs=qs)
    c_prime, lps = build_C_prime(qs, len(combos), combos)
    order = sorted(c_prime, key=BinCombination.key)
    return BinPlan(q, qs.p, qs, len(combos), order, c_prime, lps)


def overweight_mask(plan: BinPlan, B: BinCombination, j: int) -> np.ndarray:
    """Tuples of S_j containing a heavy hitter that properly extends x_j and is overweight for B."""
    q, qs = plan.q, plan.qs
    a = q.atoms[j]
    rel = qs.rels[j]
    sol = plan.lps[B]
    xj = VarSet(q, B.x).projection(j)
    mask = np.zeros(rel.m, dtype=bool)
    for ext in _sub_subsets(a.variables, xj):
        if not qs.heavy[j][ext]:
            continue
        e_sum = sum((sol.exponents[v] for v in ext if v not in xj), Fraction(0))
        freq = tuple_frequencies(rel, a, ext)
        uniq = np.unique(freq)
        bad = [int(c) for c in uniq if detect_overweight(int(c), qs.m[j], plan.n_bc, plan.p, B.beta[j], e_sum)]
        if bad:
            mask |= np.isin(freq, bad)
    return mask


@dataclass
class ResidualSubinstance:
    B: BinCombination
    per_h: list[dict[int, np.ndarray]]  # for each h in C'(B), row indices of S_j^(B)(h) for atoms in A_B
    shared: dict[int, np.ndarray]  # row indices of S_j^(B) for atoms outside A_B


def build_subinstances(plan: BinPlan, B: BinCombination) -> ResidualSubinstance:
    q, qs = plan.q, plan.qs
    xs = VarSet(q, B.x)
    keep = {j: ~overweight_mask(plan, B, j) for j in range(q.num_atoms)}
    shared = {j: np.flatnonzero(keep[j]) for j in range(q.num_atoms) if not xs.projection(j)}
    per_h = []
    for h in plan.c_prime[B]:
        env = dict(zip(B.x, h))
        sel = {}
        for j, a in enumerate(q.atoms):
            xj = xs.projection(j)
            if not xj:
                continue
            rows = qs.rels[j].tuples
            hit = np.all(rows[:, columns(a, xj)] == np.array([env[v] for v in xj], dtype=np.int64), axis=1)
            sel[j] = np.flatnonzero(hit & keep[j])
        per_h.append(sel)
    return ResidualSubinstance(B, per_h, shared)


@dataclass
class BinRun:
    B: BinCombination
    shares: dict[str, int]
    group_size: int
    report: LoadReport
    lp: BinLPSolution
    c_prime_size: int

    def diagnostics(self) -> dict:
        return {
            "x": list(self.B.x),
            "beta": [format_fraction(b) for b in self.B.beta],
            "alpha": format_fraction(self.lp.alpha) if self.lp.alpha.denominator < 10**6 else float(self.lp.alpha),
            "lambda": format_fraction(self.lp.lam) if self.lp.lam.denominator < 10**6 else float(self.lp.lam),
            "exponents": {v: (format_fraction(e) if e.denominator < 10**6 else float(e)) for v, e in self.lp.exponents.items()},
            "shares": self.shares,
            "C_prime_size": self.c_prime_size,
            "max_load_bits": self.report.max_bits,
            "max_load_tuples": self.report.max_tuples,
        }


@dataclass
class BinResult:
    outputs: np.ndarray | None
    runs: list[BinRun]
    virtual: LoadReport
    physical: LoadReport
    plan: BinPlan

    def ideal_loads(self) -> dict[BinCombination, float]:
        return {r.B: float(self.plan.p) ** float(r.lp.lam) for r in self.runs}

    def diagnostics_json(self) -> str:
        return json.dumps({_label(r.B): r.diagnostics() for r in self.runs}, sort_keys=True)


def _label(B: BinCombination) -> str:
    return "{" + ",".join(B.x) + "}[" + ",".join(format_fraction(b) for b in B.beta) + "]"


def run_bin_combination(q: Query, inst: Instance, p: int, seed: int, compute_outputs: bool = True,
                        plan: BinPlan | None = None, round_down: bool = False, limit: int = 10**7) -> BinResult:
    plan = plan or plan_bin_combination(q, inst, p, round_down)
    p = plan.p
    qs = plan.qs
    bpt = tuple(a.arity * math.log2(inst.n) for a in q.atoms)
    names = tuple(a.name for a in q.atoms)
    input_bits = sum(b * r.m for b, r in zip(bpt, qs.rels))
    runs, all_frags = [], [[] for _ in q.atoms]
    for bi, B in enumerate(plan.active):
        sub = build_subinstances(plan, B)
        sol = plan.lps[B]
        hs = plan.c_prime[B]
        g = p // len(hs)
        free = tuple(v for v in q.variables if v not in set(B.x))
        sh = round_shares([sol.exponents[v] for v in free], p, g)
        fam = HashFamily(seed, free, sh)
        parts = []
        for gi, sel in enumerate(sub.per_h):
            off = gi * g
            for j, a in enumerate(q.atoms):
                idx = sel.get(j, sub.shared.get(j))
                parts.append(Part(j, qs.rels[j].tuples[idx], a.variables, fam, off))
        counts, frags = dispatch(parts, q.num_atoms, p, compute_outputs)
        outs = None
        if compute_outputs:
            for j in range(q.num_atoms):
                all_frags[j].extend((r, s + bi * p) for r, s in frags[j])
        rep = LoadReport(names, counts, bpt, input_bits, outs, {"B": _label(B)})
        runs.append(BinRun(B, dict(zip(free, sh)), g, rep, sol, len(hs)))
    outputs = per_server = None
    total_virtual = p * len(runs)
    if compute_outputs:
        outputs, srv = join_fragments(q, all_frags, limit)
        per_server = np.bincount(srv, minlength=total_virtual)
    vt = np.concatenate([r.report.tuples for r in runs], axis=1)
    virtual = LoadReport(names, vt, bpt, input_bits, per_server,
                         {"view": "virtual", "bin_combinations": len(runs), "n_bc": plan.n_bc})
    folded = vt.reshape(q.num_atoms, len(runs), p).sum(axis=1)
    phys_out = None if per_server is None else per_server.reshape(len(runs), p).sum(axis=0)
    physical = LoadReport(names, folded, bpt, input_bits, phys_out, {"view": "physical"})
    return BinResult(outputs, runs, virtual, physical, plan)
