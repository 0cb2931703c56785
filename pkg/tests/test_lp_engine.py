import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from longhaul.bnc import solve_root
from longhaul.formulations import GE, LE, BuildOptions, build_model
from longhaul.lp_engine import (FEAS_TOL, INFEASIBLE, OPT_TOL, OPTIMAL, UNBOUNDED, ZERO_TOL,
                                BoundedSimplex, StandardLp, solve_lp)
from longhaul.model_core import example_instance
from longhaul.timegraphs import LT, build_graphs

BACKENDS = ("highs", "simplex")


def lp(c, rows, sense, rhs, lb, ub):
    return StandardLp(np.array(c, float), sp.csr_matrix(np.array(rows, float)), sense, rhs, lb, ub)


def test_tolerances_pinned():
    assert (FEAS_TOL, OPT_TOL, ZERO_TOL) == (1e-7, 1e-9, 1e-11)


@pytest.mark.parametrize("backend", BACKENDS)
def test_single_bound(backend):
    out = solve_lp(lp([1], [[1]], [GE], [3], [0], [10]), backend=backend)
    assert out.status == OPTIMAL and out.objective == pytest.approx(3) and out.x[0] == pytest.approx(3)


@pytest.mark.parametrize("backend", BACKENDS)
def test_triangle(backend):
    out = solve_lp(lp([-1, -1], [[1, 1]], [LE], [1], [0, 0], [1, 1]), backend=backend)
    assert out.status == OPTIMAL and out.objective == pytest.approx(-1)


@pytest.mark.parametrize("backend", BACKENDS)
def test_infeasible_and_unbounded(backend):
    assert solve_lp(lp([1], [[1]], [GE], [5], [0], [1]), backend=backend).status == INFEASIBLE
    out = solve_lp(lp([-1], [[1]], [GE], [0], [0], [np.inf]), backend=backend)
    assert out.status == UNBOUNDED


@pytest.mark.parametrize("backend", BACKENDS)
def test_example_relaxation_below_optimum(backend):
    inst = example_instance()
    m = build_model(inst, build_graphs(inst, LT), BuildOptions(LT))
    out = solve_lp(m.to_lp(), backend=backend)
    assert out.status == OPTIMAL and out.objective <= 2 + 1e-6
    assert out.objective == pytest.approx(solve_root(m).root_lp, abs=1e-6)


def random_lp(seed):
    rng = np.random.default_rng(seed)
    m, n = rng.integers(1, 7), rng.integers(1, 7)
    A = rng.integers(-3, 4, size=(m, n)) * (rng.random((m, n)) < 0.7)
    x0 = rng.integers(0, 3, size=n).astype(float)
    sense = rng.choice([LE, GE, 0], size=m)
    rhs = A @ x0 + np.where(sense == LE, 1, np.where(sense == GE, -1, 0))
    return StandardLp(rng.integers(-4, 5, size=n).astype(float), sp.csr_matrix(A.astype(float)),
                      sense, rhs, np.zeros(n), np.full(n, 4.0))


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_simplex_agrees_with_highs(seed):
    problem = random_lp(seed)
    a = solve_lp(problem, backend="highs")
    b = solve_lp(problem, backend="simplex")
    assert a.status == b.status == OPTIMAL
    assert b.objective == pytest.approx(a.objective, abs=1e-6)
    assert problem.row_violation(b.x) <= 1e-6


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_strong_duality(seed):
    problem = random_lp(seed)
    for backend in BACKENDS:
        out = solve_lp(problem, backend=backend)
        assert abs(out.objective - out.dual_objective) <= 1e-6 * (1 + abs(out.objective))


def test_deterministic():
    problem = random_lp(7)
    runs = [solve_lp(problem, backend="simplex") for _ in range(3)]
    assert all(np.array_equal(r.x, runs[0].x) and r.iterations == runs[0].iterations for r in runs)


def test_degenerate_cycle_guard():
    # a classic cycling example; Bland's rule must end it
    c = [-0.75, 150, -0.02, 6]
    A = [[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]]
    out = BoundedSimplex(lp(c, A, [LE, LE, LE], [0, 0, 1], [0] * 4, [np.inf] * 4), bland_after=5).solve()
    assert out.status == OPTIMAL and out.objective == pytest.approx(-0.05)


def test_bad_backend():
    with pytest.raises(ValueError):
        solve_lp(random_lp(1), backend="cplex")
