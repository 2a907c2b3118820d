import itertools
import json
import math
import random
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpcjoin.bounds import (
    K, L_lower_simple, L_lower_skew, L_simple, L_x, bound_report_simple, bound_report_skew,
    expected_answers, friedgut_check, lower_bound_constant, replication_lower_bound,
)
from mpcjoin.generators import gen_single_value_join, gen_uniform_instance, gen_zipf_instance
from mpcjoin.oracle import oracle_join
from mpcjoin.packing import polytope_vertices, packing_rows
from mpcjoin.query import VarSet, parse_query
from mpcjoin.stats import Instance, Relation, frequency

from randq import random_query


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(abs(a), abs(b), 1.0)


def test_K_examples(C3):
    assert K((0, 0, 0), [5.0, 6.0, 7.0]) == 1.0
    assert close(K((F(1, 2),) * 3, [100.0] * 3), 100.0**1.5)
    assert close(K((1, 0), [64.0, 128.0]), 64.0)


def test_L_simple_examples():
    assert close(L_simple((1, 1), [300.0, 1200.0], 16), math.sqrt(300 * 1200 / 16))
    assert close(L_simple((1,), [1000.0], 10), 100.0)
    with pytest.raises(ValueError):
        L_simple((0, 0), [1.0, 1.0], 4)


def test_L_lower_simple_examples(J, L3):
    v, w = L_lower_simple(J, [100.0, 300.0], 4)
    assert close(v, 75.0) and w == (0, 1)
    p = 64
    v, w = L_lower_simple(L3, [8.0 * p, 1.0 * p, 8.0 * p], p)
    assert close(v, 8 * math.sqrt(p)) and w == (1, 0, 1)


def test_L_lower_simple_is_max_over_all_vertices():
    rng = random.Random(5)
    for _ in range(40):
        q = random_query(rng)
        M = [2.0 ** rng.uniform(3, 20) for _ in q.atoms]
        p = rng.choice([4, 16, 64])
        v, w = L_lower_simple(q, M, p)
        allv = [u for u in polytope_vertices(q.num_atoms, packing_rows(q)) if any(u)]
        assert close(v, max(L_simple(u, M, p) for u in allv))
        assert close(v, L_simple(w, M, p))


def test_L_lower_simple_skips_empty_relations(J):
    v, w = L_lower_simple(J, [0.0, 50.0], 2)
    assert w == (0, 1) and close(v, 25.0)
    assert L_lower_simple(J, [0.0, 0.0], 2)[0] == 0.0


def _brute_L_x(u, q, x, inst, p, unit):
    rels = inst.for_query(q)
    doms = [range(1, inst.n + 1)] * len(x.names)
    s = 0.0
    for h in itertools.product(*doms):
        env = dict(zip(x.names, h))
        prod = 1.0
        for j, (a, r) in enumerate(zip(q.atoms, rels)):
            if u[j] == 0:
                continue
            xj = x.projection(j)
            c = frequency(r, a, xj, tuple(env[v] for v in xj))
            scale = a.arity * math.log2(inst.n) if unit == "bits" else 1.0
            prod *= (c * scale) ** float(u[j])
        s += prod
    return (s / p) ** (1 / float(sum(u))) if s else 0.0


def test_L_x_join_formula(J):
    inst = gen_zipf_instance(12, [60, 50], J, 1.2, seed=3, skew_columns=("z",))
    x = VarSet(J, ["z"])
    m1 = {h: frequency(inst["S1"], J.atoms[0], ("z",), (h,)) for h in range(1, 13)}
    m2 = {h: frequency(inst["S2"], J.atoms[1], ("z",), (h,)) for h in range(1, 13)}
    want = math.sqrt(sum(m1[h] * m2[h] for h in m1) / 8)
    assert close(L_x((1, 1), J, x, inst, 8, "tuples"), want)
    # x = {} gives back the plain bound
    assert close(L_x((1, 0), J, VarSet(J), inst, 8, "tuples"), L_simple((1, 0), [60.0, 50.0], 8))
    with pytest.raises(ValueError):
        L_x((0, 0), J, x, inst, 8)


def test_L_x_single_value(J):
    inst = gen_single_value_join(100)
    x = VarSet(J, ["z"])
    assert close(L_x((1, 1), J, x, inst, 16, "tuples"), math.sqrt(100 * 100 / 16))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_L_x_against_brute_force(seed):
    rng = random.Random(seed)
    q = parse_query(rng.choice(["q(x,y,z) :- S1(x,z), S2(y,z)",
                                "q(x1,x2,x3) :- S1(x1,x2), S2(x2,x3), S3(x3,x1)"]))
    n = 5
    inst = gen_zipf_instance(n, [rng.randint(1, 20) for _ in q.atoms], q, 1.0, seed)
    from mpcjoin.packing import saturating_vertices
    from mpcjoin.query import residual_query
    for size in range(1, 3):
        for names in itertools.combinations(q.variables, size):
            x = VarSet(q, names)
            for u in saturating_vertices(q, x, residual_query(q, x)):
                for unit in ("bits", "tuples"):
                    assert close(L_x(u, q, x, inst, 4, unit), _brute_L_x(u, q, x, inst, 4, unit), 1e-9)


def test_L_lower_skew_examples(J, C3):
    inst = gen_single_value_join(200)
    v, x, u = L_lower_skew(J, inst, 16, "tuples")
    assert x == ("z",) and u == (1, 1)
    assert close(v, math.sqrt(200 * 200 / 16))
    assert v > L_lower_simple(J, [200.0, 200.0], 16)[0]

    # C3 with one heavy x1 value in S1 and S3
    n = 40
    s1 = [(1, b) for b in range(1, n + 1)] + [(a, a % n + 1) for a in range(2, n + 1)]
    s2 = [(a, a % n + 1) for a in range(1, n + 1)]
    s3 = [(c, 1) for c in range(1, n + 1)]
    arr = lambda rows: np.array(sorted(set(rows)), dtype=np.int64)
    inst = Instance({"S1": Relation("S1", arr(s1), n), "S2": Relation("S2", arr(s2), n),
                     "S3": Relation("S3", arr(s3), n)}, n)
    v, x, u = L_lower_skew(C3, inst, 16, "tuples")
    assert x == ("x1",) and u == (1, 0, 1)


def test_L_lower_skew_reduces_on_uniform(C3):
    inst = gen_uniform_instance(30, [100, 100, 100], C3, seed=2)
    from mpcjoin.stats import compute_simple_stats
    M = compute_simple_stats(C3, inst).M
    v, x, u = L_lower_skew(C3, inst, 8, "bits")
    assert v >= L_lower_simple(C3, M, 8)[0] * (1 - 1e-12)


def test_expected_answers_examples(C3, J):
    assert close(expected_answers(10, [10, 10, 10], C3), 1.0)
    assert expected_answers(10, [10, 0, 10], C3) == 0.0
    assert close(expected_answers(100, [1000, 1000], J), 1e4)


def test_expected_answers_monte_carlo(J):
    counts = [len(oracle_join(J, gen_uniform_instance(100, [1000, 1000], J, seed=s))) for s in range(200)]
    assert abs(np.mean(counts) - 1e4) <= 0.05 * 1e4


def test_replication_examples(C3):
    M = 2.0**20
    rep = replication_lower_bound(C3, [M] * 3, M / 16)
    assert rep.witness_packing == (F(1, 2),) * 3
    # constant-free value: (L / 3M) * (M/L)^(3/2) = sqrt(M/L) / 3
    assert close(rep.value_bits, math.sqrt(16) / 3)
    assert close(rep.extra["min_reducers"], 16**1.5)
    assert close(rep.extra["constant_c"], lower_bound_constant(C3))
    same = replication_lower_bound(C3, [M] * 3, M)
    assert close(same.value_bits, 1 / 3)
    na = replication_lower_bound(C3, [M] * 3, 2 * M)
    assert not na.extra["applicable"]


def test_lower_bound_constant():
    q = parse_query("q(x,y) :- S(x,y)")
    assert close(lower_bound_constant(q), (2 - 0.5) / 6)


def test_friedgut_examples(C3):
    ones = [np.ones((1, 1))] * 3
    lhs, rhs, ok = friedgut_check(C3, (F(1, 2),) * 3, ones)
    assert lhs == rhs == 1.0 and ok
    inst = gen_uniform_instance(8, [20, 25, 30], C3, seed=1)
    ws = []
    for a, r in zip(C3.atoms, inst.for_query(C3)):
        w = np.zeros((8, 8))
        w[r.tuples[:, 0] - 1, r.tuples[:, 1] - 1] = 1
        ws.append(w)
    lhs, rhs, ok = friedgut_check(C3, (F(1, 2),) * 3, ws)
    assert lhs == len(oracle_join(C3, inst)) and close(rhs, math.sqrt(20 * 25 * 30)) and ok
    with pytest.raises(ValueError):
        friedgut_check(C3, (F(1, 2), F(1, 2), 0), ws)


def test_friedgut_sup_norm(C3):
    w1 = np.array([[1.0, 2.0], [0.5, 0.0]])
    w2 = np.array([[3.0, 1.0], [1.0, 1.0]])
    w3 = np.array([[1.0, 1.0], [2.0, 1.0]])
    lhs, rhs, ok = friedgut_check(C3, (1, 0, 1), [w1, w2, w3])
    assert ok and close(rhs, w1.sum() * 3.0 * w3.sum())


def test_reports_serialize(C3):
    rep = bound_report_simple(C3, [1000.0] * 3, 8)
    d = json.loads(rep.to_json())
    assert d["bound_name"] == "L_lower_simple" and d["witness_packing"] == ["1/2", "1/2", "1/2"]
    srep = bound_report_skew(C3, gen_uniform_instance(10, [20] * 3, C3, seed=0), 8)
    assert json.loads(srep.to_json())["bound_name"] == "L_lower_skew"
