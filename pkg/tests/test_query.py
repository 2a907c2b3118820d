import pytest
from hypothesis import given, strategies as st

from mpcjoin.query import (
    Atom, Query, QueryError, QuerySyntaxError, VarSet, hypergraph, parse_query, residual_query,
)


def test_parse_triangle(C3):
    assert C3.variables == ("x1", "x2", "x3")
    assert [a.name for a in C3.atoms] == ["S1", "S2", "S3"]
    assert C3.atoms[2].variables == ("x3", "x1")
    assert C3.k == 3 and C3.num_atoms == 3 and C3.total_arity == 6


def test_round_trip(L3):
    assert parse_query(str(L3)) == L3


def test_trailing_period_and_spaces():
    q = parse_query("  Q( a , b ) :- R(a, b) . ")
    assert q.head == "Q" and q.variables == ("a", "b")


@pytest.mark.parametrize("text, err", [
    ("q(x) :- S(x,", QuerySyntaxError),
    ("q(x,y) :- S(x), S(y)", QueryError),
    ("q(x) :- S(x,y)", QueryError),
    ("q(x,y) :- S(x)", QueryError),
    ("q(x) :- S(x,x)", QueryError),
    ("q(x,x) :- S(x)", QueryError),
    ("q(x) :- S()", QueryError),
])
def test_rejects(text, err):
    with pytest.raises(err):
        parse_query(text)


def test_syntax_error_position():
    with pytest.raises(QuerySyntaxError) as exc:
        parse_query("q(x) :- S(x,")
    assert exc.value.pos == 12


def test_varset_projection_in_atom_order(C3):
    x = VarSet(C3, ["x1", "x3"])
    assert x.projections == (("x1",), ("x3",), ("x3", "x1"))
    assert x.d_j == (1, 1, 2)
    with pytest.raises(QueryError):
        VarSet(C3, ["nope"])


def test_residual_keeps_nullary_atoms(J):
    r = residual_query(J, ["x", "z"])
    assert r.variables == ("y",)
    assert r.atoms[0] == Atom("S1", ())
    assert r.atoms[1] == Atom("S2", ("y",))


def test_hypergraph(J):
    assert hypergraph(J) == [frozenset("xz"), frozenset("yz")]


@given(st.lists(st.sets(st.sampled_from("abcde"), min_size=1), min_size=1, max_size=4))
def test_parse_str_inverse(bodies):
    names = sorted(set().union(*bodies))
    atoms = tuple(Atom(f"R{i}", tuple(sorted(b))) for i, b in enumerate(bodies))
    q = Query(tuple(names), atoms)
    assert parse_query(str(q)) == q
