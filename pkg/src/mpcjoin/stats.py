"""Database instances and the statistics the algorithms consume.

Relations hold dense integer tuples over [1..n].  A relation is always read
through the query atom that names it, so columns map positionally onto the
atom's variables.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from pathlib import Path

import numpy as np

from .localjoin import Table, join_all
from .query import Atom, Query, VarSet


def group_rows(arr: np.ndarray, n: int | None = None):
    """np.unique over rows, via one integer key per row when the values allow it.

    Returns (distinct rows, inverse index, counts); distinct rows come out in
    lexicographic order either way.
    """
    arr = np.asarray(arr, dtype=np.int64)
    rows, cols = arr.shape
    if rows == 0:
        return arr.reshape(0, cols), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    hi = int(arr.max()) + 1 if n is None else n + 1
    lo = int(arr.min())
    if lo >= 0 and cols and hi ** cols < 2**62:
        key = np.zeros(rows, dtype=np.int64)
        for c in range(cols):
            key = key * hi + arr[:, c]
        _, first, inv, counts = np.unique(key, return_index=True, return_inverse=True, return_counts=True)
        return arr[first], inv.reshape(-1), counts
    vals, inv, counts = np.unique(arr, axis=0, return_inverse=True, return_counts=True)
    return vals, inv.reshape(-1), counts


@dataclass
class Relation:
    name: str
    tuples: np.ndarray  # (m, arity) int64, duplicate-free
    n: int

    def __post_init__(self):
        t = np.asarray(self.tuples, dtype=np.int64)
        if t.ndim == 1:
            t = t.reshape(-1, 1) if t.size else t.reshape(0, 0)
        if t.size:
            if t.min() < 1 or t.max() > self.n:
                raise ValueError(f"{self.name}: values must lie in [1, {self.n}]")
            t = group_rows(t, self.n)[0]
        self.tuples = t

    @classmethod
    def empty(cls, name: str, arity: int, n: int) -> "Relation":
        return cls(name, np.zeros((0, arity), dtype=np.int64), n)

    @property
    def m(self) -> int:
        return int(self.tuples.shape[0])

    @property
    def arity(self) -> int:
        return int(self.tuples.shape[1])

    def __len__(self) -> int:
        return self.m


@dataclass
class Instance:
    relations: dict[str, Relation]
    n: int

    def __getitem__(self, name: str) -> Relation:
        return self.relations[name]

    def for_query(self, q: Query) -> list[Relation]:
        """Relations in atom order, with arity checked against each atom."""
        out = []
        for a in q.atoms:
            if a.name not in self.relations:
                raise KeyError(f"instance has no relation {a.name}")
            r = self.relations[a.name]
            if r.m and r.arity != a.arity:
                raise ValueError(f"{a.name} has arity {r.arity}, atom {a} expects {a.arity}")
            out.append(r)
        return out


def columns(atom: Atom, xj) -> list[int]:
    return [atom.variables.index(v) for v in xj]


def bits_per_tuple(arity: int, n: int) -> float:
    return arity * math.log2(n)


@dataclass(frozen=True)
class SimpleStats:
    m: tuple[int, ...]
    M: tuple[float, ...]  # bits, a_j m_j log2 n


def compute_simple_stats(q: Query, inst: Instance) -> SimpleStats:
    if inst.n < 2:
        raise ValueError("domain size n must be at least 2")
    rels = inst.for_query(q)
    m = tuple(r.m for r in rels)
    M = tuple(a.arity * r.m * math.log2(inst.n) for a, r in zip(q.atoms, rels))
    return SimpleStats(m, M)


def frequency_map(rel: Relation, atom: Atom, xj) -> dict[tuple, int]:
    """m_j(h_j) for every value tuple h_j occurring on the columns xj."""
    cols = columns(atom, xj)
    if not cols:
        return {(): rel.m} if rel.m else {}
    if rel.m == 0:
        return {}
    vals, _, counts = group_rows(rel.tuples[:, cols], rel.n)
    return dict(zip(map(tuple, vals.tolist()), counts.tolist()))


def frequency(rel: Relation, atom: Atom, xj, h) -> int:
    """|σ_{xj = h}(S_j)|."""
    cols = columns(atom, xj)
    h = tuple(h)
    if len(h) != len(cols):
        raise ValueError(f"value tuple {h} does not match variables {tuple(xj)}")
    if not cols:
        return rel.m
    mask = np.all(rel.tuples[:, cols] == np.asarray(h, dtype=np.int64), axis=1)
    return int(mask.sum())


def tuple_frequencies(rel: Relation, atom: Atom, xj) -> np.ndarray:
    """For each tuple t of the relation, the frequency of t's projection on xj."""
    cols = columns(atom, xj)
    if not cols:
        return np.full(rel.m, rel.m, dtype=np.int64)
    if rel.m == 0:
        return np.zeros(0, dtype=np.int64)
    _, inv, counts = group_rows(rel.tuples[:, cols], rel.n)
    return counts[inv]


def is_heavy(count: int, m: int, p: int, inclusive: bool = False) -> bool:
    # strict m_j(h) > m_j/p by default; inclusive gives the >= variant
    return count * p >= m if inclusive else count * p > m


def detect_heavy_hitters(rel: Relation, atom: Atom, xj, p: int, inclusive: bool = False) -> dict[tuple, int]:
    if p < 1:
        raise ValueError("p must be at least 1")
    return {h: c for h, c in frequency_map(rel, atom, xj).items() if c > 0 and is_heavy(c, rel.m, p, inclusive)}


def log2_exact(p: int) -> int | None:
    return p.bit_length() - 1 if p >= 1 and p & (p - 1) == 0 else None


def normalize_p(p: int, round_down: bool = False) -> int:
    """The bin construction needs p to be a power of two."""
    if p < 2:
        raise ValueError("binning needs p >= 2")
    if log2_exact(p) is None:
        if not round_down:
            raise ValueError(f"p = {p} is not a power of 2")
        p = 1 << (p.bit_length() - 1)
    return p

@dataclass
class BinAssignment:
    """Frequency bins of one relation on one variable subset."""

    atom: str
    xj: tuple[str, ...]
    p: int
    m: int
    bins: dict[tuple, int]  # heavy hitter -> bin index b in 1..log2 p

    @property
    def num_heavy_bins(self) -> int:
        return log2_exact(self.p)

    @property
    def light_bin(self) -> int:
        return self.num_heavy_bins + 1

    def exponent(self, b: int) -> Fraction:
        """β_b = log_p 2^(b-1); the light bin has exponent 1."""
        return Fraction(b - 1, self.num_heavy_bins)

    def bin_of(self, h) -> int:
        return self.bins.get(tuple(h), self.light_bin)

    def exponent_of(self, h) -> Fraction:
        return self.exponent(self.bin_of(h))

    def members(self, b: int) -> list[tuple]:
        return sorted(h for h, bb in self.bins.items() if bb == b)


def bin_index(count: int, m: int, p: int) -> int:
    """Bin b with m/2^(b-1) >= count > m/2^b, or the light bin."""
    log_p = log2_exact(p)
    if count <= 0 or not is_heavy(count, m, p):
        return log_p + 1
    b = 1
    while not (count << b) > m:
        b += 1
    return b


def assign_bins(rel: Relation, atom: Atom, xj, p: int, round_down: bool = False) -> BinAssignment:
    p = normalize_p(p, round_down)
    xj = tuple(xj)
    bins = {h: bin_index(c, rel.m, p) for h, c in detect_heavy_hitters(rel, atom, xj, p).items()}
    return BinAssignment(atom.name, xj, p, rel.m, bins)


@dataclass(frozen=True)
class BinCombination:
    """B = (x, β): a variable set and one bin exponent per atom (0 where x_j is empty)."""

    x: tuple[str, ...]
    beta: tuple[Fraction, ...]

    def key(self):
        return (len(self.x), self.x, self.beta)

    def precedes(self, other: "BinCombination") -> bool:
        """The partial order B' < B: x' strictly inside x and β' <= β everywhere."""
        return set(self.x) < set(other.x) and all(a <= b for a, b in zip(self.beta, other.beta))

    def to_json(self) -> dict:
        return {"x": list(self.x), "beta": [str(b) for b in self.beta]}


def empty_combination(q: Query) -> BinCombination:
    return BinCombination((), tuple(Fraction(0) for _ in q.atoms))


class QueryStats:
    """Per-(atom, subset) distinct values, counts, bins and heavy hitters, computed once."""

    def __init__(self, q: Query, inst: Instance, p: int, round_down: bool = False):
        self.q = q
        self.inst = inst
        self.p = normalize_p(p, round_down)
        self.log_p = log2_exact(self.p)
        self.rels = inst.for_query(q)
        self.m = tuple(r.m for r in self.rels)
        self._distinct: dict[tuple[int, tuple], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self._lookup: dict[tuple[int, tuple], dict[tuple, int]] = {}
        self.heavy: list[dict[tuple[str, ...], dict[tuple, int]]] = []
        for j, a in enumerate(q.atoms):
            hv = {}
            for size in range(a.arity + 1):
                for xj in combinations(a.variables, size):
                    vals, counts, _ = self.distinct(j, xj)
                    mask = counts * self.p > self.m[j]
                    hv[xj] = dict(zip(map(tuple, vals[mask].tolist()), counts[mask].tolist()))
            self.heavy.append(hv)

    def distinct(self, j: int, xj) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(distinct values on xj, their counts, their bin indices)."""
        key = (j, tuple(xj))
        if key not in self._distinct:
            rel, a = self.rels[j], self.q.atoms[j]
            if not xj:
                vals = np.zeros((1 if rel.m else 0, 0), dtype=np.int64)
                counts = np.full(len(vals), rel.m, dtype=np.int64)
            else:
                vals, _, counts = group_rows(rel.tuples[:, columns(a, xj)], rel.n)
            self._distinct[key] = (vals, counts, bin_indices(counts, self.m[j], self.p))
        return self._distinct[key]

    def _lookup_table(self, j: int, xj) -> dict[tuple, int]:
        key = (j, tuple(xj))
        if key not in self._lookup:
            vals, counts, _ = self.distinct(j, xj)
            self._lookup[key] = dict(zip(map(tuple, vals.tolist()), counts.tolist()))
        return self._lookup[key]

    def freq_of(self, j: int, xj, h) -> int:
        return self._lookup_table(j, xj).get(tuple(h), 0)

    def exponent(self, b: int) -> Fraction:
        return Fraction(b - 1, self.log_p)

    def exponent_of(self, j: int, xj, h) -> Fraction:
        if not xj:
            return Fraction(0)
        return self.exponent(bin_index(self.freq_of(j, xj, h), self.m[j], self.p))

    def combination_of(self, x: VarSet, h: dict) -> BinCombination | None:
        """The bin combination of an assignment h to x, or None if some h_j does not occur."""
        beta = []
        for j, xj in enumerate(x.projections):
            if not xj:
                beta.append(Fraction(0))
                continue
            hj = tuple(h[v] for v in xj)
            if self.freq_of(j, xj, hj) == 0:
                return None
            beta.append(self.exponent_of(j, xj, hj))
        return BinCombination(x.names, tuple(beta))


def bin_indices(counts: np.ndarray, m: int, p: int) -> np.ndarray:
    """Vectorized bin_index."""
    log_p = log2_exact(p)
    out = np.full(len(counts), log_p + 1, dtype=np.int64)
    for b in range(log_p, 0, -1):
        out[counts * (1 << b) > m] = b
    return out


def _project_unique(t: Table, keep) -> Table:
    keep = tuple(keep)
    rows = t.project(keep)
    return Table(keep, group_rows(rows)[0] if len(rows) else rows)


def realized_combinations(qs: QueryStats, x: VarSet) -> list[BinCombination]:
    """Bin combinations on x whose C(B) is nonempty.

    Each atom contributes a table of (x_j values, bin); variables of x are
    eliminated one at a time by joining the tables that mention them and
    projecting the variable away, so only bin columns survive.
    """
    q = qs.q
    tables = []
    for j, xj in enumerate(x.projections):
        if not xj:
            continue
        vals, _, bins = qs.distinct(j, xj)
        t = Table(xj + (f"@b{j}",), np.column_stack([vals, bins]))
        tables.append(_project_unique(t, t.columns))
    if not tables:
        return [BinCombination(x.names, tuple(Fraction(0) for _ in q.atoms))]
    remaining = list(x.names)
    while remaining:
        v = min(remaining, key=lambda u: (sum(u in t.columns for t in tables), remaining.index(u)))
        remaining.remove(v)
        touching = [t for t in tables if v in t.columns]
        tables = [t for t in tables if v not in t.columns]
        joined = join_all(touching)
        tables.append(_project_unique(joined, [c for c in joined.columns if c != v]))
    result = join_all(tables)
    bcols = [c for c in result.columns if c.startswith("@b")]
    vecs = group_rows(result.project(bcols))[0] if len(result) else np.zeros((0, len(bcols)), dtype=np.int64)
    out = []
    for row in vecs.tolist():
        d = {int(c[2:]): b for c, b in zip(bcols, row)}
        out.append(BinCombination(x.names, tuple(qs.exponent(d[j]) if j in d else Fraction(0) for j in range(q.num_atoms))))
    return sorted(out, key=BinCombination.key)


def combination_assignments(qs: QueryStats, b: BinCombination, limit: int = 10**6) -> list[dict]:
    """Materialize C(B) by joining the occurring projections in the right bins; guarded by ``limit``."""
    q = qs.q
    x = VarSet(q, b.x)
    tables = []
    for j, xj in enumerate(x.projections):
        if not xj:
            continue
        vals, _, bins = qs.distinct(j, xj)
        want = b.beta[j] * qs.log_p + 1
        tables.append(Table(xj, vals[bins == want]))
    if not tables:
        return [{}]
    res = join_all(tables, limit)
    rows = group_rows(res.project(b.x))[0] if len(res) else []
    return [dict(zip(b.x, r)) for r in (rows.tolist() if len(rows) else [])]


def enumerate_bin_combinations(q: Query, inst: Instance, p: int, materialize: bool = False, qs: QueryStats | None = None):
    """Every realized bin combination over all subsets x of vars(q).

    Returns a list of BinCombination, or of (BinCombination, C(B)) pairs when
    ``materialize`` is set.  An assignment counts only if each of its
    projections h_j occurs in S_j.
    """
    qs = qs or QueryStats(q, inst, p)
    combos = []
    for size in range(q.k + 1):
        for x in combinations(q.variables, size):
            combos.extend(realized_combinations(qs, VarSet(q, x)))
    if materialize:
        return [(b, combination_assignments(qs, b)) for b in combos]
    return combos


def read_tsv(path, name: str | None = None) -> list[tuple[str, ...]]:
    """Raw string tuples from a TSV file; ``#`` starts a comment line."""
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        rows.append(tuple(c.strip() for c in line.split("\t")))
    return rows


def encode_instance(raw: dict[str, list[tuple[str, ...]]], arities: dict[str, int] | None = None) -> tuple[Instance, list[str]]:
    """Dictionary-encode string values (shared across relations) to 1..n.

    Values that are all integers keep their numeric order; the returned list
    maps code - 1 back to the original string.
    """
    values = sorted({v for rows in raw.values() for row in rows for v in row},
                    key=lambda s: (0, int(s), s) if s.lstrip("-").isdigit() else (1, 0, s))
    code = {v: i + 1 for i, v in enumerate(values)}
    n = max(len(values), 2)
    rels = {}
    for name, rows in raw.items():
        ar = {len(r) for r in rows}
        if len(ar) > 1:
            raise ValueError(f"{name}: rows have differing numbers of columns {sorted(ar)}")
        arity = ar.pop() if ar else (arities or {}).get(name, 0)
        if arities and name in arities and rows and arity != arities[name]:
            raise ValueError(f"{name}: file has {arity} columns, query atom has {arities[name]}")
        arr = np.array([[code[v] for v in r] for r in rows], dtype=np.int64).reshape(len(rows), arity)
        rels[name] = Relation(name, arr, n)
    return Instance(rels, n), values


def write_tsv(rel: Relation, path) -> None:
    lines = [f"# {rel.name} arity={rel.arity} m={rel.m} n={rel.n}"]
    lines += ["\t".join(str(int(v)) for v in row) for row in rel.tuples]
    Path(path).write_text("\n".join(lines) + "\n")


def xstats_to_json(qs: QueryStats, heavy_only: bool = True) -> str:
    """Frequencies keyed by atom and by comma-joined variable subset."""
    out = {}
    for j, a in enumerate(qs.q.atoms):
        if heavy_only:
            table = qs.heavy[j]
        else:
            table = {xj: qs._lookup_table(j, xj) for xj in qs.heavy[j]}
        out[a.name] = {
            ",".join(xj): [{"h": list(h), "m": c} for h, c in sorted(tab.items())]
            for xj, tab in table.items()
        }
    return json.dumps(out, sort_keys=True)
