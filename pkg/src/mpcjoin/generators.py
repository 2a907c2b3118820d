"""Seeded instance generators: uniform exact-size, matchings, and Zipf-skewed relations."""

from __future__ import annotations

import numpy as np

from .query import Query
from .stats import Instance, Relation

_INDEX_LIMIT = 2**62


def _decode(idx: np.ndarray, n: int, arity: int) -> np.ndarray:
    out = np.empty((len(idx), arity), dtype=np.int64)
    rest = idx.astype(np.int64)
    for c in range(arity - 1, -1, -1):
        out[:, c] = rest % n + 1
        rest = rest // n
    return out


def uniform_relation(name: str, n: int, m: int, arity: int, rng, delta: float | None = None) -> Relation:
    """m distinct tuples chosen uniformly among all subsets of [n]^arity of that size."""
    if m < 0:
        raise ValueError("cardinality must be nonnegative")
    if delta is not None and m > n ** delta:
        raise ValueError(f"m = {m} exceeds n^delta = {n ** delta:.4g}")
    total = n ** arity
    if m > total:
        raise ValueError(f"cannot draw {m} distinct tuples from [{n}]^{arity}")
    if total < _INDEX_LIMIT:
        # sampling without replacement over the lexicographic index space
        idx = rng.choice(total, size=m, replace=False) if m else np.zeros(0, dtype=np.int64)
        return Relation(name, _decode(np.sort(idx), n, arity).reshape(m, arity), n)
    seen = np.zeros((0, arity), dtype=np.int64)
    while len(seen) < m:
        draw = rng.integers(1, n + 1, size=(2 * (m - len(seen)), arity))
        seen = np.unique(np.concatenate([seen, draw]), axis=0)
    pick = rng.choice(len(seen), size=m, replace=False)
    return Relation(name, seen[np.sort(pick)], n)


def gen_uniform_instance(n: int, m, q: Query, seed: int, delta: float | None = None) -> Instance:
    rng = np.random.default_rng(seed)
    if len(m) != q.num_atoms:
        raise ValueError("one cardinality per atom required")
    rels = {a.name: uniform_relation(a.name, n, mj, a.arity, rng, delta) for a, mj in zip(q.atoms, m)}
    return Instance(rels, n)


def gen_matching_relation(name: str, n: int, m: int, arity: int, seed) -> Relation:
    """Every value occurs at most once in every column."""
    if m > n:
        raise ValueError(f"a matching over [{n}] has at most {n} tuples, asked for {m}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    cols = [rng.permutation(n)[:m] + 1 for _ in range(arity)]
    return Relation(name, np.column_stack(cols).astype(np.int64).reshape(m, arity), n)


def zipf_probabilities(n: int, s: float) -> np.ndarray:
    w = np.arange(1, n + 1, dtype=float) ** (-float(s))
    return w / w.sum()


def gen_zipf_relation(name: str, n: int, m: int, arity: int, s: float, seed,
                      skew_columns=None, max_rounds: int = 40) -> Relation:
    """Columns drawn from P(v) proportional to v^-s, deduplicated to m distinct tuples.

    ``skew_columns`` limits the skew to the listed column positions; the
    others are uniform.
    """
    if s < 0:
        raise ValueError("skew exponent must be nonnegative")
    if m > n ** arity:
        raise ValueError(f"cannot reach {m} distinct tuples over [{n}]^{arity}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    skewed = set(range(arity)) if skew_columns is None else set(skew_columns)
    probs = zipf_probabilities(n, s)
    uniform = np.full(n, 1.0 / n)
    keyed = n ** arity < _INDEX_LIMIT
    have = np.zeros((0, arity), dtype=np.int64)
    stalled = 0
    while len(have) < m:
        need = m - len(have)
        # rare tail tuples need bigger batches; grow while no progress is made
        size = (2 * need + 16) << min(stalled, 12)
        batch = np.column_stack([
            rng.choice(n, size=size, p=probs if c in skewed else uniform) + 1 for c in range(arity)
        ])
        merged = np.concatenate([have, batch])
        # first occurrences in draw order, so truncation keeps the sample unbiased
        if keyed:
            key = np.zeros(len(merged), dtype=np.int64)
            for c in range(arity):
                key = key * n + (merged[:, c] - 1)
            _, first = np.unique(key, return_index=True)
        else:
            _, first = np.unique(merged, axis=0, return_index=True)
        first.sort()
        fresh = merged[first]
        stalled = stalled + 1 if len(fresh) == len(have) else 0
        if stalled >= max_rounds:
            raise ValueError(f"could not reach {m} distinct tuples (stuck at {len(have)})")
        have = fresh[:m]
    return Relation(name, have, n)


def gen_zipf_instance(n: int, m, q: Query, s: float, seed: int, skew_columns=None) -> Instance:
    rng = np.random.default_rng(seed)
    rels = {}
    for a, mj in zip(q.atoms, m):
        cols = None
        if skew_columns is not None:
            cols = [a.variables.index(v) for v in skew_columns if v in a.variables]
        rels[a.name] = gen_zipf_relation(a.name, n, mj, a.arity, s, rng, cols)
    return Instance(rels, n)


def gen_matching_instance(n: int, m, q: Query, seed: int) -> Instance:
    rng = np.random.default_rng(seed)
    return Instance({a.name: gen_matching_relation(a.name, n, mj, a.arity, rng) for a, mj in zip(q.atoms, m)}, n)


def gen_single_value_join(m: int, n: int | None = None, value: int = 1) -> Instance:
    """S1(x,z), S2(y,z) where every tuple shares z = value."""
    n = n or m + 1
    xs = np.arange(1, m + 1, dtype=np.int64)
    z = np.full(m, value, dtype=np.int64)
    return Instance({"S1": Relation("S1", np.column_stack([xs, z]), n),
                     "S2": Relation("S2", np.column_stack([xs, z]), n)}, n)
