import dataclasses

import pytest

from longhaul.bnc import solve_milp, solve_root
from longhaul.formulations import (PREC, SYNC1, SYNC2, TWO_SIDED, BuildOptions, ModelError,
                                   build_model, lp_relaxation, solution_to_plan,
                                   warm_start_assignment)
from longhaul.generator import generate, preset_spec
from longhaul.model_core import example_instance
from longhaul.routes import Plan, check_plan, convert_plan, plan_cost, resting_route
from longhaul.timegraphs import LT, LTC, LTR, build_graphs

from _support import fig5_plan, oracle, tiny

FLAVORS = (LT, LTC, LTR)


def model(inst, flavor, **kw):
    return build_model(inst, build_graphs(inst, flavor), BuildOptions(flavor, **kw))


def test_example_row_counts():
    m = model(example_instance(), LT)
    names = [r.name for r in m.rows]
    assert [n for n in names if n.startswith("pick_once")] == ["pick_once_r0", "pick_once_r1"]
    assert m.family_counts()["daily_rest"] == 2
    assert "weekly" not in m.family_counts()


def test_names_are_stable():
    a, b = model(example_instance(), LTC), model(example_instance(), LTC)
    assert [v.name for v in a.variables] == [v.name for v in b.variables]
    assert [r.name for r in a.rows] == [r.name for r in b.rows]
    assert a.variables[0].name.startswith("X_v0_a")


def test_s1_sizes_grow_with_flavor():
    inst = generate(preset_spec("S1", 0))
    sizes = [(m.n_vars, m.n_rows) for m in (model(inst, f) for f in FLAVORS)]
    assert sizes[0][0] < sizes[1][0] < sizes[2][0]
    assert sizes[0][1] < sizes[1][1] < sizes[2][1]


@pytest.mark.parametrize("flavor", FLAVORS)
def test_fig5_plan_assignment(flavor):
    inst = example_instance()
    lt = build_graphs(inst, LT)
    g = build_graphs(inst, flavor)
    plan = convert_plan(fig5_plan(), lt, g)
    m = build_model(inst, g, BuildOptions(flavor))
    x = warm_start_assignment(plan, m)
    assert m.objective(x) == 2
    back = solution_to_plan(m, x)
    assert check_plan(back, inst, g) == []
    assert plan_cost(back, inst, g).total == 2


def test_sync_violation_is_named():
    inst = example_instance()
    g = build_graphs(inst, LT)
    plan = fig5_plan()
    idle = Plan(LT, plan.truck_routes, [resting_route(g.driver, inst, l) for l in inst.driver_starts])
    with pytest.raises(ModelError, match="sync"):
        warm_start_assignment(idle, build_model(inst, g, BuildOptions(LT)))


def test_no_request_instance():
    inst = dataclasses.replace(example_instance(), requests=())
    for flavor in FLAVORS:
        g = build_graphs(inst, flavor)
        m = build_model(inst, g, BuildOptions(flavor))
        plan = Plan(flavor, [resting_route(g.truck, inst, l) for l in inst.truck_starts],
                    [resting_route(g.driver, inst, l) for l in inst.driver_starts])
        x = warm_start_assignment(plan, m)
        assert m.objective(x) == 0
        best = solve_milp(m)
        assert best.objective == 0
        idle = solution_to_plan(m, best.x)
        assert plan_cost(idle, inst, g).total == 0 and check_plan(idle, inst, g) == []


def test_ltr_optimum_has_two_truck_routes():
    m = model(example_instance(), LTR)
    res = solve_milp(m)
    plan = solution_to_plan(m, res.x)
    # one truck can also serve both requests at the same cost
    assert res.objective == 2 and len(plan.truck_routes) == 2
    assert check_plan(plan, example_instance(), m.graphs) == []


@pytest.mark.parametrize("flavor", FLAVORS)
def test_relaxation_bounds_example(flavor):
    m = model(example_instance(), flavor)
    assert not lp_relaxation(m).integer.any()
    assert solve_root(m).root_lp <= 2 + 1e-6


@pytest.mark.parametrize("flavor", (LT, LTC))
def test_prec_never_lowers_relaxation(flavor):
    for seed in (5, 14, 43, 127):
        inst = tiny(seed)
        base = solve_root(model(inst, flavor)).root_lp
        assert solve_root(model(inst, flavor, precedence=PREC)).root_lp >= base - 1e-6


def test_ltr_ignores_prec_with_note():
    with pytest.warns(UserWarning):
        m = model(example_instance(), LTR, precedence=PREC)
    assert m.notes and "precedence" not in m.family_counts()


def test_invalid_options():
    with pytest.raises(ModelError):
        BuildOptions("LTZ")
    with pytest.raises(ModelError):
        BuildOptions(LT, sync="sync3")


@pytest.mark.parametrize("seed", [5, 54, 112])
def test_sync_feasible_sets_nest(seed):
    inst = tiny(seed)
    for flavor in FLAVORS:
        m1, m0, m2 = (model(inst, flavor, sync=s) for s in (SYNC1, TWO_SIDED, SYNC2))
        assert m1.variables == m0.variables == m2.variables
        x1 = solve_milp(m1).x
        assert not m0.violations(x1)
        x0 = solve_milp(m0).x
        assert not m2.violations(x0)


@pytest.mark.parametrize("seed", [14, 148])
def test_oracle_plan_fits_every_flavor(seed):
    inst = tiny(seed)
    res = oracle(seed)
    for flavor in FLAVORS:
        g = build_graphs(inst, flavor)
        plan = convert_plan(res.plan, res.graphs, g)
        m = build_model(inst, g, BuildOptions(flavor))
        assert m.objective(warm_start_assignment(plan, m)) == res.value
