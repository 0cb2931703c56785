
import highspy
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from longhaul.cuts import build_pool
from longhaul.formulations import BuildOptions, build_model, solution_to_plan, warm_start_assignment
from longhaul.generator import generate, tiny_spec
from longhaul.io import (ExtraRow, FormatError, document_kind, dumps_instance, dumps_plan, emit_lp,
                         format_solution, instance_to_dict, loads_instance, loads_plan,
                         model_lp_text, num, parse_lp, read_instance, read_solution, result_to_dict,
                         write_instance, write_lp)
from longhaul.model_core import example_instance
from longhaul.routes import plan_cost
from longhaul.timegraphs import LT, LTC, LTR, build_graphs

from _support import fig5_plan


def example_model(flavor=LT):
    inst = example_instance()
    return build_model(inst, build_graphs(inst, flavor), BuildOptions(flavor))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_instance_round_trip(seed):
    inst = generate(tiny_spec(seed))
    text = dumps_instance(inst)
    back = loads_instance(text)
    assert back == inst and dumps_instance(back) == text


def test_instance_file(tmp_path):
    inst = example_instance()
    write_instance(inst, tmp_path / "ex.json")
    assert read_instance(tmp_path / "ex.json") == inst
    assert instance_to_dict(inst)["schema_version"] == 1


def test_plan_round_trip():
    plan = fig5_plan()
    text = dumps_plan(plan, "example1")
    assert loads_plan(text) == plan
    assert document_kind(text) == "plan"


def test_bad_documents():
    text = dumps_instance(example_instance())
    with pytest.raises(FormatError):
        loads_plan(text)
    with pytest.raises(FormatError):
        loads_instance(text.replace('"schema_version": 1', '"schema_version": 99'))
    with pytest.raises(FormatError):
        loads_instance("{not json")


def test_result_nulls_non_finite():
    doc = result_to_dict(bound=float("inf"), gap=[float("nan"), 0.5])
    assert doc["bound"] is None and doc["gap"] == [None, 0.5] and doc["kind"] == "result"


def test_num_digits():
    assert num(1.0) == "1" and num(0.0) == "0"
    assert float(num(1 / 3)) == 1 / 3


@pytest.mark.parametrize("flavor", (LT, LTC, LTR))
def test_lp_grammar_round_trip(flavor):
    m = example_model(flavor)
    text = emit_lp(m)
    assert parse_lp(text) == model_lp_text(m)
    assert text.splitlines()[1] == "Minimize" and text.rstrip().endswith("End")
    assert max(len(line) for line in text.splitlines()) <= 78


def test_lp_rows_named():
    text = emit_lp(example_model())
    assert sum(1 for line in text.splitlines() if line.lstrip().startswith("pick_once_r")) == 2


def test_lp_extra_rows():
    inst = example_instance()
    m = example_model(LTC)
    pool = build_pool(inst, m.graphs.truck, ["PD2"])
    A, sense, rhs = pool.rows(m)
    extra = [ExtraRow(f"cut{k}", list(A[k].indices), list(A[k].data), int(sense[k]), float(rhs[k]))
             for k in range(A.shape[0])]
    parsed = parse_lp(emit_lp(m, extra))
    assert parsed == model_lp_text(m, extra)
    assert len(parsed.rows) == m.n_rows + len(extra)


def test_external_solver_round_trip(tmp_path):
    m = example_model(LTR)
    write_lp(m, tmp_path / "ex.lp")
    h = highspy.Highs()
    h.silent()
    h.readModel(str(tmp_path / "ex.lp"))
    h.run()
    assert h.getInfo().objective_function_value == pytest.approx(2)
    lp = h.getLp()
    values = h.getSolution().col_value
    text = "\n".join(f"{lp.col_names_[j]} {values[j]}" for j in range(lp.num_col_)) + "\nghost 1\n"
    sol = read_solution(text, m)
    assert sol.unknown == 1
    plan = solution_to_plan(m, np.round(sol.x))
    assert plan_cost(plan, m.inst, m.graphs).total == 2


def test_solution_reader():
    m = example_model()
    x = warm_start_assignment(fig5_plan(), m)
    sol = read_solution("# comment\n\n" + format_solution(m, x), m)
    assert np.array_equal(sol.x, x) and sol.unknown == 0
    assert sol.missing == m.n_vars - int(np.count_nonzero(x))
    for bad in ("X_v0_a1\n", "X_v0_a1 one\n", "a b c\n"):
        with pytest.raises(FormatError):
            read_solution(bad, m)
