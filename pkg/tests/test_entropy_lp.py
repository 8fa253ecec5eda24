import math
import random
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpus import random_binary
from oracles import all_shannon_inequalities
from lpbound.entropy_lp import (
    EQ,
    LE,
    TAG_MONOTONE,
    TAG_SUBMODULAR,
    TAG_ZERO,
    LinearConstraint,
    LinearProgram,
    build_lp,
    shannon_constraints,
    statistic_constraint,
    statistic_terms,
)
from lpbound.eval_oracle import empirical_entropy
from lpbound.query_model import Conditional, VarSet, parse_query
from lpbound.simplex import Status, solve
from lpbound.stats_engine import (
    AbstractStatistic,
    ConcreteStatistic,
    Relation,
    StatisticsSet,
    compute_statistics,
    default_statistics,
)


@pytest.mark.parametrize("n", range(1, 8))
def test_shannon_row_count(n):
    rows = shannon_constraints(n)
    assert len(rows) == 1 + n + comb(n, 2) * 2 ** (n - 2)
    tags = [r.tag for r in rows]
    assert tags.count(TAG_ZERO) == 1 and tags.count(TAG_MONOTONE) == n
    assert all(r.rhs == 0 for r in rows)


def test_shannon_rows_for_two_variables():
    rows = shannon_constraints(2)
    assert rows[0].terms == {0: 1.0} and rows[0].relation == EQ
    assert {tuple(sorted(r.terms.items())) for r in rows[1:3]} == {((2, 1.0), (3, -1.0)), ((1, 1.0), (3, -1.0))}
    # h(∅) + h(XY) - h(X) - h(Y) <= 0
    assert rows[3].terms == {0: 1.0, 1: -1.0, 2: -1.0, 3: 1.0}


def _stat(u, v, p, log_b=1.0, guard=0):
    return ConcreteStatistic(AbstractStatistic(Conditional(VarSet.of(u), VarSet.of(v)), p), guard, log_b)


def test_statistic_coefficients():
    x, xy = 0b01, 0b11
    assert statistic_terms(_stat([0], [1], 2)) == {x: -0.5, xy: 1.0}
    assert statistic_terms(_stat([0], [1], 1)) == {xy: 1.0}
    assert statistic_terms(_stat([0], [1], math.inf)) == {x: -1.0, xy: 1.0}
    assert statistic_terms(_stat([0], [1], 0.5)) == {x: 1.0, xy: 1.0}
    assert statistic_terms(_stat([], [0, 1], 3)) == {xy: 1.0}
    row = statistic_constraint(_stat([0], [1], 3, 2.5), 4)
    assert row.relation == LE and row.rhs == 2.5 and row.tag == "statistic(4)" and row.is_statistic


def test_constraint_validation():
    with pytest.raises(ValueError):
        LinearConstraint({0: 1.0}, "<", 0.0)
    with pytest.raises(ValueError, match="finite"):
        LinearConstraint({0: 1.0}, LE, math.inf)
    assert LinearConstraint({3: 0.0, 1: 2.0}, LE, 1.0).terms == {1: 2.0}


def test_build_lp_shape(skewed):
    q = parse_query("Q1(X,Y,Z) = R(X,Y), R(Z,Y)")
    ss = compute_statistics({"R": skewed}, q, default_statistics(q, [2]))
    lp = build_lp(q, ss)
    assert lp.n_vars == 8 and lp.objective == {7: 1.0}
    assert lp.name(0) == "{}" and lp.name(7) == "XYZ"
    assert len(lp.rows_tagged(lambda t: t.startswith("statistic("))) == len(ss) == 4
    text = lp.to_text()
    assert text.startswith("maximize h(XYZ)")
    assert "-0.5*h(Y) + h(XY) <= 2.08496250072" in text


def test_only_maximization():
    with pytest.raises(ValueError):
        LinearProgram(1, {0: 1.0}, [], sense="min")


def _elemental_matrix(n):
    rows = shannon_constraints(n)
    A = np.zeros((len(rows), 1 << n))
    for i, r in enumerate(rows):
        for k, c in r.terms.items():
            A[i, k] = c
    return A


@pytest.mark.parametrize("n", [2, 3, 4])
def test_elemental_rows_imply_every_shannon_inequality(n):
    # Maximize each general inequality over the elemental cone cut by h(full) <= 1.
    # A positive optimum would be a polymatroid (by the elemental rows) that
    # violates the inequality.
    size = 1 << n
    base = shannon_constraints(n) + [LinearConstraint({size - 1: 1.0}, LE, 1.0)]
    for ineq in all_shannon_inequalities(n):
        sol = solve(LinearProgram(size, ineq, base))
        assert sol.status is Status.OPTIMAL
        assert sol.objective <= 1e-9, ineq


@pytest.mark.parametrize("n", [3, 4])
def test_elemental_equivalence_scipy(n):
    linprog = pytest.importorskip("scipy.optimize").linprog
    size = 1 << n
    A = _elemental_matrix(n)
    A_ub = np.vstack([A[1:], np.eye(size)[-1:]])
    b_ub = np.concatenate([np.zeros(A.shape[0] - 1), [1.0]])
    for ineq in all_shannon_inequalities(n):
        c = np.zeros(size)
        for k, v in ineq.items():
            c[k] = -v
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A[:1], b_eq=[0.0], bounds=(0, None), method="highs")
        assert res.status == 0 and -res.fun <= 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_entropic_vectors_satisfy_elemental_rows(seed):
    rng = random.Random(seed)
    cols = ("a", "b", "c")
    r = Relation("R", cols, [tuple(rng.randrange(4) for _ in cols) for _ in range(rng.randint(1, 40))])
    h = np.array(empirical_entropy(r).values)
    assert (_elemental_matrix(3) @ h <= 1e-9).all()


def test_statistic_rows_hold_on_entropy_of_data():
    # The key inequality on a few fixed relations, row by row.
    rng = random.Random(7)
    q = parse_query("Q(X,Y) = R(X,Y)")
    for _ in range(20):
        r = random_binary(rng)
        ss = compute_statistics({"R": r}, q, default_statistics(q, [0.5, 1, 2, 3, math.inf]))
        h = empirical_entropy(r).values
        for i, s in enumerate(ss):
            assert statistic_constraint(s, i).value(h) <= s.log_b + 1e-9


def test_n1_has_two_rows():
    rows = shannon_constraints(1)
    assert len(rows) == 2 and rows[1].terms == {0: 1.0, 1: -1.0}


def test_statistic_constraint_examples():
    q = parse_query("Q(X,Y) = R(X,Y)")
    x, y, xy = q.varset("X"), q.varset("Y"), q.varset("XY")

    def row(u, v, p, b):
        st_ = ConcreteStatistic(AbstractStatistic(Conditional(u, v), p), 0, b)
        return statistic_constraint(st_)

    assert row(x, y, 2, 2.08496).terms == {x.bits: -0.5, xy.bits: 1.0}
    assert row(VarSet(), xy, 1, 3).terms == {xy.bits: 1.0}
    inf_row = row(x, y, math.inf, 1.58496)
    assert inf_row.terms == {x.bits: -1.0, xy.bits: 1.0} and inf_row.rhs == 1.58496


def test_build_lp_counts():
    tri = parse_query("Q(X,Y,Z) = R(X,Y), S(Y,Z), T(Z,X)")
    db = {n: Relation(n, ("a", "b"), [(0, 1), (1, 2), (2, 0)]) for n in "RST"}
    ss = compute_statistics(db, tri, default_statistics(tri, [1, 2, 3]))
    lp = build_lp(tri, ss)
    assert lp.n_vars == 8 and len(lp.constraints) == 10 + 15
    join = parse_query("Q(X,Y,Z) = R(X,Y), S(Y,Z)")
    x, y, z = (join.varset(c) for c in "XYZ")
    two = StatisticsSet(
        (
            ConcreteStatistic(AbstractStatistic(Conditional(y, x), 2), 0, 2.0),
            ConcreteStatistic(AbstractStatistic(Conditional(y, z), 2), 1, 2.0),
        )
    )
    assert len(build_lp(join, two).constraints) == 12


def test_no_statistics_is_unbounded():
    q = parse_query("Q(X,Y) = R(X,Y)")
    assert solve(build_lp(q, StatisticsSet())).status is Status.UNBOUNDED
