import re

import numpy as np
import pytest

from longhaul.bnc import (STATUS_FEASIBLE, STATUS_INFEASIBLE, STATUS_LIMIT, STATUS_OPTIMAL,
                          SolverConfig, solve_milp, solve_root)
from longhaul.cuts import CutPool, build_pool, separate
from longhaul.formulations import SYNC_OPTIONS, BuildOptions, build_model, warm_start_assignment
from longhaul.generator import greedy_warm_start
from longhaul.model_core import example_instance
from longhaul.routes import convert_plan
from longhaul.timegraphs import LT, LTC, LTR, build_graphs

from _support import fig5_plan, tiny

LINE = re.compile(r"node=(\d+) bound=(\S+) inc=(\S+) gap=(\S+) cuts=(\d+)$")


def model(inst, flavor, sync=SYNC_OPTIONS[0]):
    return build_model(inst, build_graphs(inst, flavor), BuildOptions(flavor, sync=sync))


@pytest.mark.parametrize("flavor", (LT, LTC, LTR))
@pytest.mark.parametrize("sync", SYNC_OPTIONS)
def test_example_optimum(flavor, sync):
    res = solve_milp(model(example_instance(), flavor, sync))
    assert res.status == STATUS_OPTIMAL and res.objective == 2
    assert res.bound <= res.objective + 1e-6 and res.gap <= 1e-6


def test_warm_start_never_worse():
    m = model(example_instance(), LT)
    start = warm_start_assignment(fig5_plan(passenger=False), m)
    res = solve_milp(m, warm_start=start)
    assert res.objective <= m.objective(start) and res.objective == 2
    with pytest.raises(ValueError):
        solve_milp(m, warm_start=np.zeros(m.n_vars) + 0.5)


@pytest.mark.parametrize("limit", [dict(node_limit=0), dict(time_limit=0)])
def test_zero_limits_return_root_bound(limit):
    m = model(example_instance(), LT)
    res = solve_milp(m, config=SolverConfig(**limit))
    assert res.status == STATUS_LIMIT and res.bound == pytest.approx(res.root_lp)
    assert res.root_lp == pytest.approx(solve_root(m).root_lp)


def test_limit_with_incumbent_is_feasible():
    m = model(example_instance(), LT)
    start = warm_start_assignment(fig5_plan(passenger=False), m)
    res = solve_milp(m, warm_start=start, config=SolverConfig(node_limit=0))
    assert res.status == STATUS_FEASIBLE and res.objective == 4


def test_infeasible_instance():
    # the oracle proves seed 7 infeasible
    res = solve_milp(model(tiny(7), LTR))
    assert res.status == STATUS_INFEASIBLE and res.objective is None


def test_log_is_monotone_and_parseable():
    inst = tiny(148)
    m = model(inst, LT)
    seen = []
    res = solve_milp(m, config=SolverConfig(log_every=1, on_log=seen.append))
    assert seen == res.log
    parsed = [LINE.match(line) for line in res.log]
    assert all(parsed)
    bounds = [float(p.group(2)) for p in parsed]
    incs = [float(p.group(3)) for p in parsed if p.group(3) != "-"]
    assert bounds == sorted(bounds)
    assert incs == sorted(incs, reverse=True)


def test_cuts_are_violated_when_added():
    inst = tiny(182)
    m = model(inst, LTC)
    pool = build_pool(inst, m.graphs.truck, ["PREC", "PD1", "PD2", "PD3-V2"])
    root = solve_root(m)
    first = separate(pool, m, root.x, cap=50)
    res = solve_root(m, pool, SolverConfig(root_cut_rounds=1))
    assert sum(res.cuts_added.values()) == len(first)
    for c in first:
        assert c.violation(c.lhs(lambda r: root.x[m.index[r]])) > 1e-6


def test_no_cuts_matches_plain_search():
    m = model(tiny(54), LT)
    a, b = solve_milp(m), solve_milp(m, CutPool())
    assert (a.status, a.objective, a.nodes, a.bound) == (b.status, b.objective, b.nodes, b.bound)
    assert np.array_equal(a.x, b.x)


def test_family_filter():
    inst = example_instance()
    m = model(inst, LT)
    pool = build_pool(inst, m.graphs.truck, ["PREC", "PD1"])
    res = solve_milp(m, pool, config=SolverConfig(families=("PREC",)))
    assert set(res.cuts_added) <= {"PREC"}


def test_single_worker_is_deterministic():
    m = model(tiny(148), LTC)
    runs = [solve_milp(m) for _ in range(2)]
    assert runs[0].log == runs[1].log and np.array_equal(runs[0].x, runs[1].x)


def test_simplex_backend_agrees():
    res = solve_milp(model(example_instance(), LTR), config=SolverConfig(lp_backend="simplex"))
    assert res.status == STATUS_OPTIMAL and res.objective == 2


def test_greedy_start_accepted():
    inst = tiny(97)
    plan = greedy_warm_start(inst)
    g = build_graphs(inst, LTR)
    m = build_model(inst, g, BuildOptions(LTR))
    start = warm_start_assignment(convert_plan(plan, build_graphs(inst, LT), g), m)
    res = solve_milp(m, warm_start=start)
    assert res.objective <= m.objective(start)


def test_negative_limits_rejected():
    with pytest.raises(ValueError):
        SolverConfig(time_limit=-1)
