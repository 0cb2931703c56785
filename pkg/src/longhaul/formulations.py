"""Integer programs over the time-expanded digraphs.

One builder covers the three truck flavors. Trucks are modelled by per-truck
binaries (LT, LTC) or by an aggregated integer flow (LTR); drivers always use
per-driver binaries on the LTX digraph, plus one day-off binary per driver and
day.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .lp_engine import EQ, GE, LE, StandardLp
from .model_core import Instance
from .routes import Plan, RouteError, check_plan, decompose_flow
from .timegraphs import (DELIVERY, LT, LTC, LTR, LTX, PICKUP, REST, SINK_NODE,
                         SOURCE_NODE, SYNC_KINDS, Graphs, agent_arcs, arc_correspondence,
                         ltr_capacity)

ORIGINAL = "original"
PREC = "prec"
TWO_SIDED = "two-sided"
SYNC1 = "sync1"
SYNC2 = "sync2"
PRECEDENCE_OPTIONS = (ORIGINAL, PREC)
SYNC_OPTIONS = (TWO_SIDED, SYNC1, SYNC2)

SENSE_SYMBOL = {LE: "<=", EQ: "=", GE: ">="}


class ModelError(ValueError):
    """Mismatched inputs, or an assignment/solution that the model rejects."""


class VarRef(NamedTuple):
    kind: str  # "X", "Y" or "W"
    agent: int  # truck, driver, or -1 for an aggregated LTR flow
    index: int  # arc id, or day for W

    @property
    def name(self) -> str:
        if self.kind == "X":
            return f"X_a{self.index}" if self.agent < 0 else f"X_v{self.agent}_a{self.index}"
        if self.kind == "Y":
            return f"Y_d{self.agent}_a{self.index}"
        return f"W_d{self.agent}_j{self.index}"


class Row(NamedTuple):
    name: str
    family: str
    cols: tuple[int, ...]
    coefs: tuple[float, ...]
    sense: int
    rhs: float


@dataclass(frozen=True)
class BuildOptions:
    flavor: str = LT
    precedence: str = ORIGINAL
    sync: str = TWO_SIDED

    def __post_init__(self):
        if self.flavor not in (LT, LTC, LTR):
            raise ModelError(f"unknown flavor {self.flavor!r}")
        if self.precedence not in PRECEDENCE_OPTIONS:
            raise ModelError(f"unknown precedence option {self.precedence!r}")
        if self.sync not in SYNC_OPTIONS:
            raise ModelError(f"unknown sync option {self.sync!r}")


@dataclass
class MilpModel:
    inst: Instance
    graphs: Graphs
    options: BuildOptions
    variables: list[VarRef]
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray
    obj: np.ndarray
    rows: list[Row]
    notes: list[str] = field(default_factory=list)

    @cached_property
    def index(self) -> dict[VarRef, int]:
        return {v: k for k, v in enumerate(self.variables)}

    @property
    def flavor(self) -> str:
        return self.options.flavor

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def col(self, ref: VarRef) -> Optional[int]:
        return self.index.get(ref)

    def x_col(self, v: int, e: int) -> Optional[int]:
        """Column of truck ``v`` on truck arc ``e`` (``v`` ignored under LTR)."""
        if self.flavor == LTR:
            return self.index.get(VarRef("X", -1, e))
        return self.index.get(VarRef("X", v, e))

    def truck_agents(self) -> list[int]:
        return [-1] if self.flavor == LTR else list(range(self.inst.n_trucks))

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        data, ri, ci = [], [], []
        for k, row in enumerate(self.rows):
            ri.extend([k] * len(row.cols))
            ci.extend(row.cols)
            data.extend(row.coefs)
        return sp.csr_matrix((data, (ri, ci)), shape=(self.n_rows, self.n_vars))

    @property
    def senses(self) -> np.ndarray:
        return np.array([r.sense for r in self.rows], dtype=int)

    @property
    def rhs(self) -> np.ndarray:
        return np.array([r.rhs for r in self.rows], dtype=float)

    def to_lp(self) -> StandardLp:
        return StandardLp(self.obj, self.matrix, self.senses, self.rhs, self.lb, self.ub)

    def objective(self, x: np.ndarray) -> float:
        return float(self.obj @ x)

    def family_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.rows:
            out[r.family] = out.get(r.family, 0) + 1
        return out

    def violations(self, x: np.ndarray, tol: float = 1e-6, integrality: bool = True) -> list[str]:
        """Names of violated rows and bounds at ``x``."""
        x = np.asarray(x, dtype=float)
        out = []
        bad = np.flatnonzero((x < self.lb - tol) | (x > self.ub + tol))
        out += [f"bound {self.variables[j].name}" for j in bad]
        if integrality:
            frac = np.abs(x - np.round(x)) > tol
            out += [f"integrality {self.variables[j].name}" for j in np.flatnonzero(frac & self.integer)]
        act = self.matrix @ x
        for k, row in enumerate(self.rows):
            a = act[k]
            if (row.sense == LE and a > row.rhs + tol) or (row.sense == GE and a < row.rhs - tol) \
                    or (row.sense == EQ and abs(a - row.rhs) > tol):
                out.append(row.name)
        return out


# ---------------------------------------------------------------------------
# building


class _Rows:
    def __init__(self):
        self.rows: list[Row] = []

    def add(self, name: str, family: str, terms: dict[int, float], sense: int, rhs: float) -> None:
        items = sorted((c, v) for c, v in terms.items() if v != 0)
        if not items:
            # an empty row is either vacuous or proves infeasibility; keep the latter
            ok = (sense == LE and 0 <= rhs) or (sense == GE and 0 >= rhs) or (sense == EQ and rhs == 0)
            if ok:
                return
        self.rows.append(Row(name, family, tuple(c for c, _ in items),
                             tuple(float(v) for _, v in items), sense, float(rhs)))


def _acc(terms: dict[int, float], col: Optional[int], coef: float) -> None:
    if col is not None:
        terms[col] = terms.get(col, 0.0) + coef


def build_model(inst: Instance, graphs: Graphs, options: BuildOptions) -> MilpModel:
    g, x = graphs.truck, graphs.driver
    if g.flavor != options.flavor:
        raise ModelError(f"truck digraph is {g.flavor} but options ask for {options.flavor}")
    if x.flavor != LTX:
        raise ModelError("driver digraph must be LTX")
    notes: list[str] = []
    if options.flavor == LTR and options.precedence == PREC:
        msg = "precedence is structural in LTR; PREC option ignored"
        warnings.warn(msg)
        notes.append(msg)
    h = inst.horizon
    I, H = h.instants_per_day, h.days
    nV, nD = inst.n_trucks, inst.n_drivers

    variables: list[VarRef] = []
    lb: list[float] = []
    ub: list[float] = []
    obj: list[float] = []
    if options.flavor == LTR:
        for a in g.arcs:
            variables.append(VarRef("X", -1, a.id))
            lb.append(0.0)
            ub.append(float(ltr_capacity(g, a.id, inst)))
            obj.append(float(a.weight))
    else:
        for v in range(nV):
            for e in agent_arcs(g, inst.truck_starts[v]):
                variables.append(VarRef("X", v, e))
                lb.append(0.0)
                ub.append(1.0)
                obj.append(float(g.arcs[e].weight))
    for d in range(nD):
        for e in agent_arcs(x, inst.driver_starts[d]):
            variables.append(VarRef("Y", d, e))
            lb.append(0.0)
            ub.append(1.0)
            obj.append(float(x.arcs[e].weight))
    for d in range(nD):
        for j in range(H):
            variables.append(VarRef("W", d, j))
            lb.append(0.0)
            ub.append(1.0)
            obj.append(0.0)
    index = {ref: k for k, ref in enumerate(variables)}
    agents = [-1] if options.flavor == LTR else list(range(nV))

    def xc(v: int, e: int) -> Optional[int]:
        return index.get(VarRef("X", v, e))

    def yc(d: int, e: int) -> Optional[int]:
        return index.get(VarRef("Y", d, e))

    R = _Rows()
    # truck flow conservation
    for v in agents:
        tag = "" if v < 0 else f"v{v}_"
        for n in g.topological_nodes():
            if n in (SOURCE_NODE, SINK_NODE):
                continue
            t: dict[int, float] = {}
            for e in g.in_arcs[n]:
                _acc(t, xc(v, e), 1.0)
            for e in g.out_arcs[n]:
                _acc(t, xc(v, e), -1.0)
            R.add(f"flow_{tag}n{n}", "truck_flow", t, EQ, 0)
    # driver flow conservation
    for d in range(nD):
        for n in x.topological_nodes():
            if n in (SOURCE_NODE, SINK_NODE):
                continue
            t = {}
            for e in x.in_arcs[n]:
                _acc(t, yc(d, e), 1.0)
            for e in x.out_arcs[n]:
                _acc(t, yc(d, e), -1.0)
            R.add(f"dflow_d{d}_n{n}", "driver_flow", t, EQ, 0)
    # each request picked up exactly once
    for r in range(len(inst.requests)):
        t = {}
        for v in agents:
            for e in g.pickup_arcs[r]:
                _acc(t, xc(v, e), 1.0)
        R.add(f"pick_once_r{r}", "pick_once", t, EQ, 1)
    if options.flavor in (LT, LTC):
        # the truck that picks a request up also delivers it
        for v in agents:
            for r in range(len(inst.requests)):
                t = {}
                for e in g.pickup_arcs[r]:
                    _acc(t, xc(v, e), 1.0)
                for e in g.delivery_arcs[r]:
                    _acc(t, xc(v, e), -1.0)
                R.add(f"unpaired_v{v}_r{r}", "unpaired", t, EQ, 0)
        if options.precedence == ORIGINAL:
            for r in range(len(inst.requests)):
                for e in g.delivery_arcs[r]:
                    t = {}
                    start = g.tail_t(e)
                    for v in agents:
                        _acc(t, xc(v, e), -1.0)
                        for p in g.pickup_arcs[r]:
                            if g.head_t(p) <= start:
                                _acc(t, xc(v, p), 1.0)
                    R.add(f"prec_r{r}_a{e}", "precedence", t, GE, 0)
        else:
            for rr in prec_rows(inst, g, agents, xc):
                R.add(*rr)
    if options.flavor == LT:
        # one request aboard at a time: checked wherever a pickup starts or ends
        checks = sorted({i for r in range(len(inst.requests)) for i in inst.pickup_instants[r]}
                        | {g.head_t(e) for r in range(len(inst.requests)) for e in g.pickup_arcs[r]})
        for v in agents:
            for i in checks:
                t = {}
                for r in range(len(inst.requests)):
                    for e in g.pickup_arcs[r]:
                        if g.head_t(e) <= i:
                            _acc(t, xc(v, e), 1.0)
                    for e in g.delivery_arcs[r]:
                        if g.head_t(e) <= i:
                            _acc(t, xc(v, e), -1.0)
                R.add(f"cap_v{v}_i{i}", "capacity", t, LE, 1)
    # daily rest
    rest_by_t: dict[int, list[int]] = {}
    for e in x.by_kind[REST]:
        rest_by_t.setdefault(x.tail_t(e), []).append(e)
    for d in range(nD):
        for i in range(I * (H - 1) + 1):
            t = {}
            for s in range(i, i + I):
                for e in rest_by_t.get(s, ()):
                    _acc(t, yc(d, e), 1.0)
            R.add(f"daily_d{d}_i{i}", "daily_rest", t, GE, I // 2)
    # weekly rest
    for d in range(nD):
        for j in range(H - 6):
            t = {index[VarRef("W", d, jj)]: 1.0 for jj in range(j, j + 7)}
            R.add(f"week_d{d}_j{j}", "weekly", t, GE, 1)
    for d in range(nD):
        for j in range(H):
            t = {index[VarRef("W", d, j)]: -float(I)}
            for s in range(I * j, I * (j + 1)):
                for e in rest_by_t.get(s, ()):
                    _acc(t, yc(d, e), 1.0)
            R.add(f"dayoff_d{d}_j{j}", "day_off", t, GE, 0)
    # synchronisation of trucks and drivers
    for kind in SYNC_KINDS:
        for e in x.by_kind[kind]:
            truck_arcs = arc_correspondence(g, x, e)
            lo: dict[int, float] = {}
            hi: dict[int, float] = {}
            for d in range(nD):
                _acc(lo, yc(d, e), 1.0)
                _acc(hi, yc(d, e), 1.0)
            for v in agents:
                for f in truck_arcs:
                    _acc(lo, xc(v, f), -1.0)
                    _acc(hi, xc(v, f), -2.0)
            mode = TWO_SIDED if kind not in (PICKUP, DELIVERY) else options.sync
            if mode == SYNC1:
                R.add(f"sync_eq_a{e}", "sync", lo, EQ, 0)
            else:
                R.add(f"sync_lo_a{e}", "sync", lo, GE, 0)
                if mode == TWO_SIDED:
                    R.add(f"sync_hi_a{e}", "sync", hi, LE, 0)

    return MilpModel(inst, graphs, options, variables, np.array(lb), np.array(ub),
                     np.ones(len(variables), dtype=bool), np.array(obj), R.rows, notes)


def prec_rows(inst: Instance, g, agents: Sequence[int], xc) -> list[tuple]:
    """Rows of the strengthened precedence: pickups that leave time to reach the
    delivery location by ``i`` must outnumber deliveries started by ``i``."""
    out = []
    for r, req in enumerate(inst.requests):
        travel = inst.shortest_truck_time[req.pickup_loc][req.delivery_loc]
        for i in inst.delivery_instants[r]:
            t: dict[int, float] = {}
            for v in agents:
                for p in g.pickup_arcs[r]:
                    if g.head_t(p) <= i - travel:
                        _acc(t, xc(v, p), 1.0)
                for e in g.delivery_arcs[r]:
                    if g.tail_t(e) <= i:
                        _acc(t, xc(v, e), -1.0)
            out.append((f"prec_r{r}_i{i}", "precedence", t, GE, 0))
    return out


def lp_relaxation(model: MilpModel) -> MilpModel:
    relaxed = replace(model, integer=np.zeros(model.n_vars, dtype=bool))
    relaxed.__dict__.pop("matrix", None)
    relaxed.__dict__.pop("index", None)
    return relaxed


# ---------------------------------------------------------------------------
# plans <-> assignments


def warm_start_assignment(plan: Plan, model: MilpModel) -> np.ndarray:
    """0/1 (or flow) vector of a feasible plan; raises ``ModelError`` naming a
    violated row when the plan does not satisfy the model."""
    if plan.flavor != model.flavor:
        raise ModelError(f"plan is {plan.flavor} but the model is {model.flavor}")
    inst = model.inst
    vec = np.zeros(model.n_vars)
    for v, route in enumerate(plan.truck_routes):
        for e in route:
            c = model.x_col(v, e)
            if c is None:
                raise ModelError(f"truck {v} uses arc {e} outside its arc set")
            vec[c] += 1
    for d, route in enumerate(plan.driver_routes):
        for e in route:
            c = model.col(VarRef("Y", d, e))
            if c is None:
                raise ModelError(f"driver {d} uses arc {e} outside its arc set")
            vec[c] += 1
    flags = plan.day_off or plan.with_day_off(model.graphs.driver).day_off
    for d in range(inst.n_drivers):
        for j in range(inst.horizon.days):
            vec[model.index[VarRef("W", d, j)]] = float(flags[d][j])
    bad = model.violations(vec)
    if bad:
        raise ModelError(f"plan violates {bad[0]}" + (f" (+{len(bad) - 1} more)" if len(bad) > 1 else ""))
    return vec


def _follow(g, arcs_used: dict[int, int]) -> list[int]:
    """The single source-sink path carried by a 0/1 arc set (empty if unused)."""
    route: list[int] = []
    n = SOURCE_NODE
    while n != SINK_NODE:
        nxt = [e for e in g.out_arcs[n] if arcs_used.get(e, 0) > 0]
        if not nxt:
            if n == SOURCE_NODE:
                return []
            raise ModelError("route breaks off before the sink")
        if len(nxt) > 1:
            raise ModelError("route branches")
        route.append(nxt[0])
        n = g.arcs[nxt[0]].head
    if len(route) != sum(1 for c in arcs_used.values() if c > 0):
        raise ModelError("arcs outside the source-sink path carry flow")
    return route


def _normalize_drivers(g, x, inst: Instance, trucks: list[list[int]], drivers: list[list[int]]) -> list[list[int]]:
    """Swap surplus driver service arcs for rests.

    Looser synchronisation options admit drivers on service arcs that no truck
    performs, or more than two per truck. Resting in place instead costs the
    same and only helps the rest rules.
    """
    from collections import Counter

    trucks_on = Counter(g.signature(e) for r in trucks for e in r if g.arcs[e].kind in (PICKUP, DELIVERY))
    used: Counter = Counter()
    out = []
    for route in drivers:
        new: list[int] = []
        for e in route:
            a = x.arcs[e]
            if a.kind in (PICKUP, DELIVERY):
                sig = x.signature(e)
                if used[sig] < 2 * trucks_on[sig]:
                    used[sig] += 1
                    new.append(e)
                    continue
                loc = x.tail_loc(e)
                for s in range(x.tail_t(e), x.head_t(e)):
                    tail = x.node_id(loc, s)
                    new.append(x.find_arc(REST, tail, x.node_id(loc, s + 1)))
                continue
            new.append(e)
        out.append(new)
    return out


def solution_to_plan(model: MilpModel, values: np.ndarray, tol: float = 1e-6) -> Plan:
    values = np.asarray(values, dtype=float)
    bad = model.violations(values, tol)
    if bad:
        raise ModelError(f"solution violates {bad[0]}")
    inst, g, x = model.inst, model.graphs.truck, model.graphs.driver
    rounded = np.round(values).astype(int)
    per_x: dict[int, dict[int, int]] = {}
    per_y: dict[int, dict[int, int]] = {}
    for k, ref in enumerate(model.variables):
        if rounded[k] <= 0:
            continue
        if ref.kind == "X":
            per_x.setdefault(ref.agent, {})[ref.index] = rounded[k]
        elif ref.kind == "Y":
            per_y.setdefault(ref.agent, {})[ref.index] = rounded[k]
    try:
        if model.flavor == LTR:
            trucks = decompose_flow(g, per_x.get(-1, {}), inst)
        else:
            trucks = [_follow(g, per_x.get(v, {})) for v in range(inst.n_trucks)]
    except RouteError as exc:
        raise ModelError(str(exc)) from exc
    drivers = [_follow(x, per_y.get(d, {})) for d in range(inst.n_drivers)]
    if model.options.sync != SYNC1:
        drivers = _normalize_drivers(g, x, inst, trucks, drivers)
    plan = Plan(model.flavor, trucks, drivers).with_day_off(x)
    problems = check_plan(plan, inst, model.graphs)
    if problems:
        raise ModelError(f"extracted plan is infeasible: {problems[0]}")
    return plan
