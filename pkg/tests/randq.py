"""Random full conjunctive queries for property tests."""

import random

from mpcjoin.query import Atom, Query


def random_query(rng: random.Random, max_vars: int = 5, max_atoms: int = 4, max_arity: int = 3) -> Query:
    k = rng.randint(1, max_vars)
    names = [f"v{i}" for i in range(1, k + 1)]
    ell = rng.randint(1, max_atoms)
    bodies = [set(rng.sample(names, rng.randint(1, min(k, max_arity)))) for _ in range(ell)]
    for v in names:
        if not any(v in b for b in bodies):
            rng.choice(bodies).add(v)
    atoms = tuple(Atom(f"R{j + 1}", tuple(v for v in names if v in b)) for j, b in enumerate(bodies))
    return Query(tuple(names), atoms)
