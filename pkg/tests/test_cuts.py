import dataclasses
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from longhaul.bnc import solve_root
from longhaul.cuts import (DELIVER_FROM_INSTANT, DELIVER_FROM_START, FULL, MODES, PICKUP_FROM_START,
                           CutError, CutPool, build_pool, generate, min_duration, parse_family,
                           separate)
from longhaul.formulations import BuildOptions, build_model, warm_start_assignment
from longhaul.model_core import example_instance
from longhaul.oracle import duration_by_search, sample_plans
from longhaul.routes import convert_plan
from longhaul.timegraphs import LT, LTC, LTR, build_graphs

from _support import fig5_plan, tiny

ALL = ["PREC", "PD1", "PD2", "PD3-V1-A", "PD3-V1-B", "PD3-V1", "PD3-V2-A", "SEC1-R3", "SEC2-R3"]


def lt_model(inst, flavor=LT):
    return build_model(inst, build_graphs(inst, flavor), BuildOptions(flavor))


def test_parse_family():
    assert parse_family("pd3-v2-a") == ("PD3", 2, "A")
    assert parse_family("PD3") == ("PD3", 1, FULL)
    assert parse_family("PD3-B") == ("PD3", 1, "B")
    assert parse_family("sec1-r4") == ("SEC1", 4, FULL)
    assert parse_family("PREC") == ("PREC", 2, FULL)
    for bad in ("PD4", "SEC1-V2", "PD3-C"):
        with pytest.raises(CutError):
            parse_family(bad)


def test_prec_count_is_one_per_delivery_instant():
    inst = example_instance()
    g = build_graphs(inst, LT).truck
    assert len(generate("PREC", inst, g)) == sum(len(d) for d in inst.delivery_instants)


@pytest.mark.parametrize("seed", [5, 14, 148])
def test_pd3_variants_nest(seed):
    inst = tiny(seed)
    g = build_graphs(inst, LTC).truck
    for k in (1, 2):
        a, b, full = (len(generate("PD3", inst, g, k, v)) for v in ("A", "B", FULL))
        assert a <= b <= full


def test_sec_counts_grow_with_size():
    inst = tiny(14)
    g = build_graphs(inst, LTC).truck
    for fam in ("SEC1", "SEC2"):
        counts = [len(generate(fam, inst, g, k)) for k in (2, 3)]
        assert counts[0] <= counts[1]


def test_ltr_single_truck_families():
    inst = example_instance()
    g = build_graphs(inst, LTR).truck
    with pytest.raises(CutError):
        generate("PD1", inst, g)
    one = dataclasses.replace(inst, truck_starts=(0,))
    assert generate("PD1", one, build_graphs(one, LTR).truck)


def test_min_duration_example():
    inst = example_instance()
    assert min_duration(inst, [0, 1], DELIVER_FROM_START, 0) == 6
    assert duration_by_search(inst, [0, 1], DELIVER_FROM_START, 0) == 6
    assert min_duration(inst, [0], DELIVER_FROM_INSTANT, 8) == float("inf")


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([5, 14, 43, 55, 92, 148]), st.sampled_from(MODES))
def test_min_duration_dominates_singletons(seed, mode):
    inst = tiny(seed)
    anchors = range(inst.n_trucks) if mode != DELIVER_FROM_INSTANT else (0, 3)
    for a in anchors:
        for k in range(2, len(inst.requests) + 1):
            for rs in itertools.combinations(range(len(inst.requests)), k):
                whole = min_duration(inst, rs, mode, a)
                assert whole >= max(min_duration(inst, [r], mode, a) for r in rs)


def test_empty_window_request_is_skipped():
    inst = example_instance()
    late = dataclasses.replace(inst.requests[1], pickup_window=(7, 7))
    inst2 = dataclasses.replace(inst, requests=(inst.requests[0], late))
    assert min_duration(inst2, [0, 1], PICKUP_FROM_START, 0) == float("inf")
    g = build_graphs(inst2, LTC).truck
    assert all(c.provenance[0] != (0, 1) for c in generate("SEC1", inst2, g, 2))


def test_separate_thresholds():
    inst = example_instance()
    m = lt_model(inst)
    pool = build_pool(inst, m.graphs.truck, ALL)
    root = solve_root(m)
    assert np.any(np.abs(root.x - np.round(root.x)) > 1e-6)
    found = separate(pool, m, root.x)
    assert found and {c.family for c in found} & {"PREC", "PD1", "PD2"}
    viol = [c.violation(c.lhs(lambda r: root.x[m.index[r]])) for c in found]
    assert viol == sorted(viol, reverse=True)
    assert separate(pool, m, root.x, tolerance=1e9) == []
    x = warm_start_assignment(fig5_plan(), m)
    assert separate(pool, m, x) == []


def test_pool_dedup():
    inst = example_instance()
    g = build_graphs(inst, LT).truck
    pool = CutPool()
    cuts = generate("PD1", inst, g)
    assert pool.extend(cuts) == len(cuts)
    assert pool.extend(cuts) == 0
    assert pool.counts() == {"PD1": len(cuts)}


@pytest.mark.parametrize("seed", [14, 54, 148])
def test_sampled_plans_satisfy_every_cut(seed):
    inst = tiny(seed)
    plans = sample_plans(inst, 30, seed=seed)
    lt = build_graphs(inst, LT)
    for flavor in (LT, LTC):
        m = lt_model(inst, flavor)
        pool = build_pool(inst, m.graphs.truck, ALL)
        for p in plans:
            x = warm_start_assignment(convert_plan(p, lt, m.graphs), m)
            assert separate(pool, m, x) == []
