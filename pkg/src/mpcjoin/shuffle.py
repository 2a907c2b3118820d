"""One-round HyperCube shuffle over a grid of logical servers."""

from __future__ import annotations

import csv
import io
import json
import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .localjoin import Table, join_all, unique_rows
from .query import Atom, Query
from .shares import ShareAssignment, round_shares
from .stats import Instance, Relation, columns, frequency_map

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def splitmix64(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


class HashFamily:
    """One seeded hash function per variable, reduced to [0, p_i) by multiply-shift."""

    def __init__(self, seed: int, variables, shares):
        self.seed = int(seed)
        self.variables = tuple(variables)
        self.shares = tuple(int(s) for s in shares)
        if len(self.shares) != len(self.variables):
            raise ValueError("one share per variable required")
        if any(s < 1 or s >= 2**32 for s in self.shares):
            raise ValueError(f"shares must lie in [1, 2^32): {self.shares}")
        self._keys = {}
        for v in self.variables:
            mix = np.array([(self.seed * 0x100000001B3 ^ zlib.crc32(v.encode())) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
            self._keys[v] = splitmix64(mix)[0]

    def share(self, var: str) -> int:
        return self.shares[self.variables.index(var)]

    def hash(self, var: str, values) -> np.ndarray:
        """Bucket in [0, p_var) for each value."""
        h = splitmix64(np.asarray(values, dtype=np.int64).astype(np.uint64) ^ self._keys[var])
        with np.errstate(over="ignore"):
            return (((h >> np.uint64(32)) * np.uint64(self.share(var))) >> np.uint64(32)).astype(np.int64)

    def strides(self) -> dict[str, int]:
        """Mixed-radix weights; the first variable is the most significant."""
        out, s = {}, 1
        for v, p in reversed(list(zip(self.variables, self.shares))):
            out[v] = s
            s *= p
        return out

    @property
    def num_servers(self) -> int:
        return math.prod(self.shares)


def server_id(family: HashFamily, coords: dict[str, int]) -> int:
    st = family.strides()
    return sum(coords[v] * st[v] for v in family.variables)


def hc_route(atom: Atom, t, family: HashFamily) -> list[int]:
    """Servers receiving tuple t of the atom: the subcube fixed on the atom's variables."""
    fixed = {v: int(family.hash(v, [val])[0]) for v, val in zip(atom.variables, t)}
    ids = [0]
    st = family.strides()
    for v, p in zip(family.variables, family.shares):
        choices = [fixed[v]] if v in fixed else range(p)
        ids = [i + c * st[v] for i in ids for c in choices]
    return sorted(ids)


def broadcast_route(t, p: int) -> list[int]:
    return list(range(p))


def _base_ids(rows: np.ndarray, atom_vars, family: HashFamily) -> np.ndarray:
    st = family.strides()
    base = np.zeros(rows.shape[0], dtype=np.int64)
    for c, v in enumerate(atom_vars):
        if v in st:
            base += family.hash(v, rows[:, c]) * st[v]
    return base


def _free_offsets(atom_vars, family: HashFamily) -> np.ndarray:
    st = family.strides()
    offs = np.zeros(1, dtype=np.int64)
    for v, p in zip(family.variables, family.shares):
        if v not in atom_vars:
            offs = (offs[:, None] + np.arange(p, dtype=np.int64)[None, :] * st[v]).reshape(-1)
    return offs


def route_counts(rows: np.ndarray, atom_vars, family: HashFamily, broadcast: bool = False) -> np.ndarray:
    """Tuples received by each server, without materializing copies."""
    P = family.num_servers
    if broadcast:
        return np.full(P, rows.shape[0], dtype=np.int64)
    # count on the grid of the atom's own coordinates, then broadcast over the rest
    shape = [p if v in atom_vars else 1 for v, p in zip(family.variables, family.shares)]
    rs, s = {}, 1
    for v, p in reversed(list(zip(family.variables, shape))):
        rs[v] = s
        s *= p
    base = np.zeros(rows.shape[0], dtype=np.int64)
    for c, v in enumerate(atom_vars):
        if v in rs:
            base += family.hash(v, rows[:, c]) * rs[v]
    reduced = np.bincount(base, minlength=math.prod(shape)).reshape(shape)
    return np.broadcast_to(reduced, tuple(family.shares)).reshape(-1).astype(np.int64)


def route_rows(rows: np.ndarray, atom_vars, family: HashFamily, broadcast: bool = False):
    """(row index, server) for every copy sent."""
    if broadcast:
        offs = np.arange(family.num_servers, dtype=np.int64)
        base = np.zeros(rows.shape[0], dtype=np.int64)
    else:
        offs = _free_offsets(atom_vars, family)
        base = _base_ids(rows, atom_vars, family)
    idx = np.repeat(np.arange(rows.shape[0]), len(offs))
    srv = (base[:, None] + offs[None, :]).reshape(-1)
    return idx, srv


@dataclass
class LoadReport:
    relations: tuple[str, ...]
    tuples: np.ndarray  # (num_relations, servers) tuples received
    bits_per_tuple: tuple[float, ...]
    input_bits: float
    outputs: np.ndarray | None = None  # answers emitted per server
    labels: dict = field(default_factory=dict)

    @property
    def num_servers(self) -> int:
        return int(self.tuples.shape[1])

    @property
    def bits(self) -> np.ndarray:
        return (self.tuples * np.asarray(self.bits_per_tuple)[:, None]).sum(axis=0)

    @property
    def server_tuples(self) -> np.ndarray:
        return self.tuples.sum(axis=0)

    @property
    def max_bits(self) -> float:
        return float(self.bits.max()) if self.num_servers else 0.0

    @property
    def mean_bits(self) -> float:
        return float(self.bits.mean()) if self.num_servers else 0.0

    @property
    def max_tuples(self) -> int:
        return int(self.server_tuples.max()) if self.num_servers else 0

    def max_tuples_per_relation(self) -> dict[str, int]:
        return {r: int(self.tuples[j].max()) if self.num_servers else 0 for j, r in enumerate(self.relations)}

    @property
    def replication_rate(self) -> float:
        return float(self.bits.sum()) / self.input_bits if self.input_bits else 0.0

    def summary(self) -> dict:
        d = {
            "servers": self.num_servers,
            "max_load_bits": self.max_bits,
            "mean_load_bits": self.mean_bits,
            "max_load_tuples": self.max_tuples,
            "max_tuples_per_relation": self.max_tuples_per_relation(),
            "replication_rate": self.replication_rate,
        }
        if self.outputs is not None:
            d["outputs_total"] = int(self.outputs.sum())
            d["max_outputs"] = int(self.outputs.max()) if self.num_servers else 0
        d.update(self.labels)
        return d

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["server", *self.relations, "bits"] + (["outputs"] if self.outputs is not None else []))
        bits = self.bits
        for s in range(self.num_servers):
            row = [s, *(int(self.tuples[j, s]) for j in range(len(self.relations))), f"{bits[s]:.6g}"]
            if self.outputs is not None:
                row.append(int(self.outputs[s]))
            w.writerow(row)
        return buf.getvalue()


def combine_reports(reports, relations, bits_per_tuple, input_bits, labels=None) -> LoadReport:
    """Place several reports' servers side by side."""
    tuples = np.concatenate([r.tuples for r in reports], axis=1) if reports else np.zeros((len(relations), 0), dtype=np.int64)
    outs = None
    if reports and all(r.outputs is not None for r in reports):
        outs = np.concatenate([r.outputs for r in reports])
    return LoadReport(tuple(relations), tuples, tuple(bits_per_tuple), input_bits, outs, labels or {})


@dataclass
class HCResult:
    outputs: np.ndarray | None  # distinct answers, columns in head order
    report: LoadReport
    shares: tuple[int, ...]


def _shares_tuple(q: Query, shares) -> tuple[tuple[int, ...], tuple[str, ...]]:
    if isinstance(shares, ShareAssignment):
        if shares.shares is None:
            shares = shares.with_shares()
        return tuple(shares.shares), tuple(shares.broadcast)
    if isinstance(shares, dict):
        return tuple(int(shares[v]) for v in q.variables), ()
    return tuple(int(s) for s in shares), ()


def local_join(q: Query, fragments, limit: int) -> Table:
    """Join server-tagged fragments; the @server column keeps servers apart."""
    tables = [Table(("@server",) + a.variables, np.column_stack([srv, rows]))
              for a, (rows, srv) in zip(q.atoms, fragments)]
    return join_all(tables, limit)


def run_hc(q: Query, inst: Instance, shares, seed: int, compute_outputs: bool = True,
           broadcast=(), limit: int = 10**7) -> HCResult:
    """Route every tuple to its subcube and join locally at each server."""
    shares, bc = _shares_tuple(q, shares)
    bc = set(bc) | set(broadcast)
    if len(shares) != q.k:
        raise ValueError(f"{len(shares)} shares for {q.k} variables")
    fam = HashFamily(seed, q.variables, shares)
    rels = inst.for_query(q)
    counts = np.stack([route_counts(r.tuples, a.variables, fam, a.name in bc) for a, r in zip(q.atoms, rels)])
    bpt = tuple(a.arity * math.log2(inst.n) for a in q.atoms)
    input_bits = sum(b * r.m for b, r in zip(bpt, rels))
    outputs = per_server = None
    if compute_outputs:
        frags = []
        for a, r in zip(q.atoms, rels):
            idx, srv = route_rows(r.tuples, a.variables, fam, a.name in bc)
            frags.append((r.tuples[idx], srv))
        res = local_join(q, frags, limit)
        per_server = np.bincount(res.rows[:, 0], minlength=fam.num_servers) if len(res) else np.zeros(fam.num_servers, dtype=np.int64)
        outputs = unique_rows(res.project(q.variables))
    report = LoadReport(tuple(a.name for a in q.atoms), counts, bpt, input_bits, per_server,
                        {"shares": dict(zip(q.variables, shares))})
    return HCResult(outputs, report, shares)


def equal_shares(q: Query, p: int) -> tuple[int, ...]:
    from fractions import Fraction
    return round_shares([Fraction(1, q.k)] * q.k, p)


def run_hc_equal_shares(q: Query, inst: Instance, p: int, seed: int, compute_outputs: bool = True) -> HCResult:
    return run_hc(q, inst, equal_shares(q, p), seed, compute_outputs)


def skew_free_check(rel: Relation, atom: Atom, shares: dict[str, int]):
    """(True, None) if every sub-tuple frequency is <= m / ∏ shares of its variables.

    Otherwise returns (False, (variables, values, frequency, threshold)) for
    the first offending sub-tuple found.
    """
    from itertools import combinations
    m = rel.m
    for size in range(1, atom.arity + 1):
        for xs in combinations(atom.variables, size):
            prod = math.prod(shares.get(v, 1) for v in xs)
            for h, c in sorted(frequency_map(rel, atom, xs).items()):
                if c * prod > m:
                    return False, (xs, h, c, m / prod)
    return True, None
