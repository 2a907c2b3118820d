"""Vectorized natural join of integer tables, used as each server's local join."""

from __future__ import annotations

import numpy as np

MAX_ROWS = 10**7


class JoinTooLarge(RuntimeError):
    pass


class Table:
    __slots__ = ("columns", "rows")

    def __init__(self, columns, rows):
        self.columns = tuple(columns)
        rows = np.asarray(rows, dtype=np.int64)
        if not self.columns:
            raise ValueError("tables need at least one column")
        self.rows = rows.reshape(-1, len(self.columns))

    def __len__(self):
        return int(self.rows.shape[0])

    def project(self, columns) -> np.ndarray:
        idx = [self.columns.index(c) for c in columns]
        return self.rows[:, idx]


def _key_codes(a: np.ndarray, b: np.ndarray):
    """Dense integer codes for the rows of a and b over a shared code space."""
    if a.shape[1] == 1:
        return a[:, 0], b[:, 0]
    both = np.concatenate([a, b])
    _, inv = np.unique(both, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    return inv[: len(a)], inv[len(a):]


def join(left: Table, right: Table, limit: int = MAX_ROWS) -> Table:
    shared = [c for c in left.columns if c in right.columns]
    extra = [c for c in right.columns if c not in left.columns]
    out_cols = left.columns + tuple(extra)
    rx = right.project(extra)
    if len(left) == 0 or len(right) == 0:
        return Table(out_cols, np.zeros((0, len(out_cols)), dtype=np.int64))
    if not shared:
        total = len(left) * len(right)
        if total > limit:
            raise JoinTooLarge(f"cartesian product of {total} rows exceeds {limit}")
        li = np.repeat(np.arange(len(left)), len(right))
        ri = np.tile(np.arange(len(right)), len(left))
        return Table(out_cols, np.hstack([left.rows[li], rx[ri]]))
    ka, kb = _key_codes(left.project(shared), right.project(shared))
    oa = np.argsort(ka, kind="stable")
    ob = np.argsort(kb, kind="stable")
    sa, sb = ka[oa], kb[ob]
    # for each left row, the run of matching right rows
    lo = np.searchsorted(sb, sa, side="left")
    hi = np.searchsorted(sb, sa, side="right")
    cnt = hi - lo
    total = int(cnt.sum())
    if total > limit:
        raise JoinTooLarge(f"join of {total} rows exceeds {limit}")
    li = np.repeat(oa, cnt)
    starts = np.repeat(lo - np.concatenate([[0], np.cumsum(cnt)[:-1]]), cnt)
    ri = ob[starts + np.arange(total)]
    return Table(out_cols, np.hstack([left.rows[li], rx[ri]]))


def join_all(tables, limit: int = MAX_ROWS) -> Table:
    """Join every table, greedily picking the next table sharing the most columns."""
    tables = list(tables)
    if not tables:
        raise ValueError("nothing to join")
    tables.sort(key=len)
    cur = tables.pop(0)
    while tables:
        i = max(range(len(tables)), key=lambda t: (len(set(cur.columns) & set(tables[t].columns)), -len(tables[t])))
        cur = join(cur, tables.pop(i), limit)
    return cur


def unique_rows(rows: np.ndarray) -> np.ndarray:
    if rows.shape[0] == 0:
        return rows
    return np.unique(rows, axis=0)
