import dataclasses

import pytest

from longhaul.model_core import Horizon, example_instance
from longhaul.oracle import (INFEASIBLE, OPTIMAL, OracleBudget, OracleBudgetError,
                             enumerate_truck_routes, exhaustive_solve, sample_plans)
from longhaul.routes import EXCESS, build_route, check_plan, check_truck_route, plan_cost
from longhaul.timegraphs import LT, build_graphs, build_lt, build_ltc

from _support import V1_STEPS, tiny


def test_example_optimum_uses_a_passenger():
    inst = example_instance()
    res = exhaustive_solve(inst)
    assert res.status == OPTIMAL and res.value == 2
    cost = plan_cost(res.plan, inst, res.graphs)
    assert (cost.truck_travel, cost.taxi_travel, cost.delay_penalties) == (2, 0, 0)
    assert check_plan(res.plan, inst, res.graphs) == []


def test_no_requests_costs_nothing():
    res = exhaustive_solve(dataclasses.replace(example_instance(), requests=()))
    assert res.status == OPTIMAL and res.value == 0


def test_empty_delivery_window_is_infeasible():
    inst = example_instance()
    # a delivery longer than the horizon has no start instant
    bad = dataclasses.replace(inst.requests[0], delivery_service=9)
    res = exhaustive_solve(dataclasses.replace(inst, requests=(bad, inst.requests[1])))
    assert res.status == INFEASIBLE and res.value is None


def test_v1_route_is_enumerated():
    inst = example_instance()
    g = build_lt(inst)
    target = build_route(g, inst, 0, V1_STEPS)
    routes = list(enumerate_truck_routes(g, start_loc=0))
    assert target in routes
    assert all(check_truck_route(g, r) == [] for r in routes)


def test_ltc_stream_has_no_excess():
    g = build_ltc(example_instance())
    assert all(EXCESS not in check_truck_route(g, r) for r in enumerate_truck_routes(g))


def test_no_path_means_empty_stream():
    inst = example_instance()
    g = build_lt(inst)
    assert list(enumerate_truck_routes(g, start_loc=5)) == []


def test_route_budget():
    g = build_lt(example_instance())
    with pytest.raises(OracleBudgetError):
        list(enumerate_truck_routes(g, budget=OracleBudget(max_routes=3)))
    with pytest.raises(ValueError):
        OracleBudget(max_states=0)


def test_state_budget():
    inst = dataclasses.replace(example_instance(), horizon=Horizon(2, 8))
    with pytest.raises(OracleBudgetError):
        exhaustive_solve(inst, OracleBudget(max_states=3))


@pytest.mark.parametrize("seed", [5, 14, 54, 112, 148])
def test_oracle_plan_is_valid(seed):
    inst = tiny(seed)
    res = exhaustive_solve(inst)
    assert check_plan(res.plan, inst, res.graphs) == []
    assert plan_cost(res.plan, inst, res.graphs).total == res.value


def test_sampled_plans_are_feasible():
    inst = tiny(148)
    g = build_graphs(inst, LT)
    plans = sample_plans(inst, 25, seed=1)
    assert len(plans) == 25
    assert all(check_plan(p, inst, g) == [] for p in plans)
    opt = exhaustive_solve(inst).value
    assert min(plan_cost(p, inst, g).total for p in plans) >= opt
    assert sample_plans(inst, 5, seed=1)[0].truck_routes == plans[0].truck_routes
