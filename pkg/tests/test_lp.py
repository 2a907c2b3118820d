import random
from fractions import Fraction as F

import numpy as np
import pytest
from scipy.optimize import linprog

from mpcjoin.lp import LPError, lex_minimize, maximize, minimize


def test_small_max():
    # max x + y, x + 2y <= 4, 3x + y <= 6
    res = maximize([1, 1], [([1, 2], "<=", 4), ([3, 1], "<=", 6)])
    assert res.optimal
    assert res.x == [F(8, 5), F(6, 5)]
    assert res.objective == F(14, 5)


def test_equality_and_ge():
    res = minimize([1, 1], [([1, 1], ">=", 2), ([1, -1], "==", 1)])
    assert res.objective == 2 and res.x == [F(3, 2), F(1, 2)]


def test_infeasible_and_unbounded():
    assert minimize([1], [([1], "<=", 1), ([1], ">=", 2)]).status == "infeasible"
    assert maximize([1, 0], [([0, 1], "<=", 1)]).status == "unbounded"


def test_bad_rows():
    with pytest.raises(LPError):
        minimize([1, 1], [([1], "<=", 1)])
    with pytest.raises(LPError):
        minimize([1], [([1], "<", 1)])


def test_negative_rhs_flips():
    res = minimize([1], [([-1], "<=", -3)])
    assert res.x == [3]


def test_degenerate_does_not_cycle():
    # a classic cycling example for the textbook rule
    c = [F(-3, 4), 150, F(-1, 50), 6]
    rows = [([F(1, 4), -60, F(-1, 25), 9], "<=", 0),
            ([F(1, 2), -90, F(-1, 50), 3], "<=", 0),
            ([0, 0, 1, 0], "<=", 1)]
    res = minimize(c, rows)
    assert res.optimal and res.objective == F(-1, 20)


def test_lex_minimize_picks_lexicographic_optimum():
    # min 0 over x + y = 1, then min x
    rows = [([1, 1], "==", 1)]
    res = lex_minimize([[0, 0], [1, 0]], rows)
    assert res.x == [0, 1]
    res = lex_minimize([[0, 0], [0, 1]], rows)
    assert res.x == [1, 0]


def test_matches_scipy_on_random_problems():
    rng = random.Random(11)
    for _ in range(60):
        n, r = rng.randint(1, 4), rng.randint(1, 5)
        A = [[rng.randint(0, 5) for _ in range(n)] for _ in range(r)]
        b = [rng.randint(1, 10) for _ in range(r)]
        c = [rng.randint(-5, 5) for _ in range(n)]
        ours = minimize(c, [(row, "<=", bi) for row, bi in zip(A, b)])
        ref = linprog(c, A_ub=np.array(A), b_ub=b, bounds=[(0, None)] * n, method="highs")
        if ref.status == 3:
            assert ours.status == "unbounded"
        else:
            assert ours.optimal
            assert abs(float(ours.objective) - ref.fun) < 1e-7
