"""End-to-end acceptance checks, one test per criterion.

The conftest prints a pass/fail line per criterion after the run.
"""

import math
import random
import time
from fractions import Fraction as F

import numpy as np

from mpcjoin.bounds import (
    L_lower_simple, L_lower_skew, expected_answers, friedgut_check, replication_lower_bound,
)
from mpcjoin.generators import (
    gen_matching_instance, gen_single_value_join, gen_uniform_instance, gen_zipf_instance,
)
from mpcjoin.oracle import oracle_join
from mpcjoin.packing import enumerate_packing_vertices, is_edge_cover, saturates
from mpcjoin.query import VarSet, parse_query, residual_query
from mpcjoin.shares import closed_form_load, solve_dual, solve_share_lp
from mpcjoin.shuffle import equal_shares, run_hc
from mpcjoin.skewalgo import run_bin_combination, skew_join
from mpcjoin.stats import compute_simple_stats

from randq import random_query

P = 64
M_BIG = 10**5


def as_set(rows):
    return set(map(tuple, np.asarray(rows).tolist()))


def test_criterion_01_triangle_vertices(C3):
    t0 = time.perf_counter()
    verts = enumerate_packing_vertices(C3)
    assert sorted(verts) == sorted([(F(1, 2),) * 3, (F(1), F(0), F(0)), (F(0), F(1), F(0)), (F(0), F(0), F(1))])
    assert all(isinstance(c, F) for v in verts for c in v)
    for p in (8, 64, 1000):
        M = 3.0e6
        value, witness = L_lower_simple(C3, [M] * 3, p)
        assert abs(value - M / p ** (2 / 3)) <= 1e-12 * value
        assert witness == (F(1, 2),) * 3
    assert time.perf_counter() - t0 < 1.0


def test_criterion_02_share_lp_duality():
    t0 = time.perf_counter()
    rng = random.Random(2)
    checked = 0
    for trial in range(50):
        q = random_query(rng, max_vars=5, max_atoms=4)
        for p in (16, 64, 256):
            M = [p ** rng.uniform(1, 3) for _ in q.atoms]
            sa = solve_share_lp(q, M, p, eliminate_broadcast=False)
            vmax, _ = L_lower_simple(q, M, p)
            assert abs(float(sa.lam) - math.log(vmax, p)) <= 1e-9, (str(q), p, M)
            opt, _, _ = solve_dual(q, sa.mu)
            assert opt == sa.lam
            closed_form_load(q, M, p)
            checked += 1
    assert checked == 150
    assert time.perf_counter() - t0 < 30.0


def _hc_cases(C3, L3, J):
    star = parse_query("q(a,b,c,d) :- R(a,b), S(a,c), T(a,d)")
    wide = parse_query("q(a,b,c) :- R(a,b,c), S(b,c)")
    cases = []
    rng = np.random.default_rng(3)
    queries = [C3, L3, J, star, wide]
    for i in range(20):
        q = queries[i % len(queries)]
        shares = tuple(int(s) for s in rng.integers(1, 5, size=q.k))
        if i % 2:
            inst = gen_zipf_instance(60, [400] * q.num_atoms, q, 1.2, seed=i)
        else:
            inst = gen_uniform_instance(40, [300] * q.num_atoms, q, seed=i)
        cases.append((q, inst, shares, i))
    return cases


def test_criterion_03_hc_completeness(C3, L3, J):
    t0 = time.perf_counter()
    cases = _hc_cases(C3, L3, J)
    assert len(cases) == 20
    for q, inst, shares, seed in cases:
        res = run_hc(q, inst, shares, seed)
        assert as_set(res.outputs) == oracle_join(q, inst), (str(q), shares, seed)
    assert time.perf_counter() - t0 < 60.0


def test_criterion_04_skew_free_envelope(J):
    t0 = time.perf_counter()
    inst = gen_matching_instance(M_BIG, [M_BIG, M_BIG], J, seed=0)
    sa = solve_share_lp(J, list(compute_simple_stats(J, inst).M), P).with_shares()
    assert math.prod(sa.shares) <= P
    ok = 0
    for seed in range(50):
        rep = run_hc(J, inst, sa, seed, compute_outputs=False).report
        ok += max(rep.max_tuples_per_relation().values()) <= 3 * M_BIG / P
    assert ok >= 49
    assert time.perf_counter() - t0 < 120.0


def test_criterion_05_skew_resilience(J):
    inst = gen_single_value_join(M_BIG)
    z_only = tuple(P if v == "z" else 1 for v in J.variables)
    hashed = run_hc(J, inst, z_only, 0, compute_outputs=False).report
    assert hashed.max_tuples >= 0.9 * M_BIG
    shares = equal_shares(J, P)
    for seed in range(10):
        rep = run_hc(J, inst, shares, seed, compute_outputs=False).report
        assert rep.max_tuples <= 10 * M_BIG / P ** (1 / 3)


def test_criterion_06_skew_join_envelope(J):
    t0 = time.perf_counter()
    runs = 0
    for s in (1, 2):
        for i in range(5):
            inst = gen_zipf_instance(10**4, [M_BIG, M_BIG], J, s, seed=100 + i, skew_columns=("z",))
            res = skew_join(J, inst, P, seed=i, compute_outputs=False)
            envelope = res.envelope
            assert envelope == max(res.terms.values())
            assert res.report.max_tuples <= 8 * math.log(P) * envelope
            assert res.report.max_tuples >= 0.5 * envelope
            assert res.servers_total <= 4 * P
            runs += 1
    assert runs == 10
    assert time.perf_counter() - t0 < 180.0


def test_criterion_07_bin_combination(C3, J):
    t0 = time.perf_counter()
    small = [
        (J, gen_zipf_instance(200, [1500, 1500], J, 1, seed=3, skew_columns=("z",)), 16),
        (J, gen_zipf_instance(200, [1500, 1500], J, 2, seed=4, skew_columns=("z",)), 16),
        (J, gen_single_value_join(300), 8),
        (C3, gen_zipf_instance(100, [1000] * 3, C3, 1.5, seed=5), 16),
        (C3, gen_uniform_instance(30, [200] * 3, C3, seed=6), 8),
    ]
    for q, inst, p in small:
        res = run_bin_combination(q, inst, p, seed=1)
        assert as_set(res.outputs) == oracle_join(q, inst)
        assert all(len(c) <= res.plan.p for c in res.plan.c_prime.values())

    inst = gen_matching_instance(M_BIG, [M_BIG, M_BIG], J, seed=0)
    res = run_bin_combination(J, inst, P, seed=0, compute_outputs=False)
    assert [B.x for B in res.plan.active] == [()]
    assert max(res.virtual.max_tuples_per_relation().values()) <= 3 * M_BIG / P

    inst = gen_single_value_join(M_BIG)
    res = run_bin_combination(J, inst, P, seed=0, compute_outputs=False)
    assert all(len(c) <= P for c in res.plan.c_prime.values())
    skew_bound, _, _ = L_lower_skew(J, inst, P, "tuples")
    assert max(res.ideal_loads().values()) >= 0.5 * skew_bound
    assert time.perf_counter() - t0 < 300.0


def test_criterion_08_lower_bound_ordering():
    rng = random.Random(8)
    nprng = np.random.default_rng(8)
    for trial in range(500):
        q = random_query(rng, max_vars=4, max_atoms=3)
        n = rng.randint(2, 8)
        m = [rng.randint(1, min(n ** a.arity, 30)) for a in q.atoms]
        if trial % 2:
            inst = gen_zipf_instance(n, m, q, rng.uniform(0, 2), seed=trial)
        else:
            inst = gen_uniform_instance(n, m, q, seed=trial)
        p = int(nprng.choice([2, 4, 8, 16, 64]))
        M = list(compute_simple_stats(q, inst).M)
        simple, _ = L_lower_simple(q, M, p)
        skew, x, u = L_lower_skew(q, inst, p, "bits")
        assert skew >= simple * (1 - 1e-9), (str(q), trial)
        xs = VarSet(q, x)
        assert saturates(residual_query(q, xs), u, xs, q)


def _random_cover(q, rng):
    while True:
        u = [F(rng.randint(0, 6), 4) for _ in q.atoms]
        for v in q.variables:
            js = q.atoms_containing(v)
            deficit = 1 - sum(u[j] for j in js)
            if deficit > 0:
                u[rng.choice(js)] += deficit
        if is_edge_cover(q, u):
            return u


def test_criterion_09_friedgut(C3, J):
    rng = random.Random(9)
    nprng = np.random.default_rng(9)
    for trial in range(500):
        q = (C3, J)[trial % 2]
        n = rng.randint(1, 6)
        u = _random_cover(q, rng)
        ws = [nprng.random((n,) * a.arity) * (nprng.random((n,) * a.arity) < 0.7) for a in q.atoms]
        lhs, rhs, ok = friedgut_check(q, u, ws)
        assert ok and lhs <= rhs * (1 + 1e-9), (trial, u, lhs, rhs)
    for q in (C3, J):
        lhs, rhs, ok = friedgut_check(q, _random_cover(q, rng), [np.ones((1,) * a.arity) for a in q.atoms])
        assert lhs == rhs == 1.0


def test_criterion_10_expected_answers(C3):
    n, m = 20, [40, 40, 40]
    expected = expected_answers(n, m, C3)
    assert abs(expected - 8.0) < 1e-12
    counts = np.array([len(oracle_join(C3, gen_uniform_instance(n, m, C3, seed=s))) for s in range(300)])
    se = counts.std(ddof=1) / math.sqrt(len(counts))
    assert abs(counts.mean() - expected) <= 3 * se


def test_criterion_11_replication_scaling(C3):
    M = 2.0**24
    quarter = replication_lower_bound(C3, [M] * 3, M / 4)
    sixteenth = replication_lower_bound(C3, [M] * 3, M / 16)
    assert quarter.extra["applicable"] and sixteenth.extra["applicable"]
    assert abs(sixteenth.value_bits / quarter.value_bits - 2.0) <= 1e-9
