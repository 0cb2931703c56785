"""Exact reference solver for tiny instances.

:func:`exhaustive_solve` runs a dynamic program over joint states of all
trucks and drivers, one time layer per instant. Agents act only when they
stand at a node; a truck picks an LT out-arc, each driver an LTX out-arc, and
a joint move is kept when every truck trip/service arc carries one or two
drivers and no driver rides an arc no truck takes. Driver states carry the
rest counts of the still-open daily windows (saturated at I/2) and, for
horizons of a week or more, the last day off. States are merged by key, so the
search is exact while staying small on tiny instances.

The same transition system serves :func:`sample_plans`, which draws random
feasible plans, and :func:`duration_by_search` is an independent check of the
minimum pickup/delivery durations used by the sequencing cuts.
"""

from __future__ import annotations

import heapq
import itertools
import math
import random
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

from .model_core import Instance, validate_instance
from .routes import Plan, check_truck_route
from .timegraphs import (DELIVERY, LT, PICKUP, REST, SINK, SOURCE, SOURCE_NODE, SYNC_KINDS,
                         Graphs, TimeExpandedDigraph, build_graphs)

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"


class OracleBudgetError(RuntimeError):
    """The search outgrew its budget; the instance is not tiny enough."""


@dataclass(frozen=True)
class OracleBudget:
    max_routes: int = 200_000
    max_states: int = 400_000  # per time layer
    time_cap: float = 120.0

    def __post_init__(self):
        if self.max_routes <= 0 or self.max_states <= 0 or self.time_cap <= 0:
            raise ValueError("oracle budgets must be positive")


@dataclass
class OracleResult:
    status: str
    value: Optional[int]
    plan: Optional[Plan]
    graphs: Graphs
    states: int = 0


# ---------------------------------------------------------------------------
# truck route enumeration


def enumerate_truck_routes(g: TimeExpandedDigraph, start_loc: Optional[int] = None,
                           budget: OracleBudget = OracleBudget()) -> Iterator[list[int]]:
    """Stream every source-sink path of ``g`` that is a valid truck route.

    Paths are explored depth first in arc-id order and pruned as soon as the
    prefix repeats a service, delivers something not aboard, or loads a second
    request. Raises :class:`OracleBudgetError` past ``budget.max_routes``.
    """
    out_arcs = [sorted(a) for a in g.out_arcs]
    emitted = 0
    path: list[int] = []

    def dfs(node: int, cargo: Optional[int], served: frozenset) -> Iterator[list[int]]:
        nonlocal emitted
        if node == 1:
            if not check_truck_route(g, path):
                emitted += 1
                if emitted > budget.max_routes:
                    raise OracleBudgetError(f"more than {budget.max_routes} truck routes")
                yield list(path)
            return
        for e in out_arcs[node]:
            a = g.arcs[e]
            if a.kind == SOURCE and start_loc is not None and g.head_loc(e) != start_loc:
                continue
            nc, ns = cargo, served
            if a.kind == PICKUP:
                if cargo is not None or a.request in served:
                    continue
                nc, ns = a.request, served | {a.request}
            elif a.kind == DELIVERY:
                if cargo != a.request:
                    continue
                nc = None
            path.append(e)
            yield from dfs(a.head, nc, ns)
            path.pop()

    yield from dfs(SOURCE_NODE, None, frozenset())


# ---------------------------------------------------------------------------
# joint dynamic program


class _Rules:
    """Daily and weekly rest bookkeeping for one driver."""

    def __init__(self, inst: Instance):
        h = inst.horizon
        self.I, self.H = h.instants_per_day, h.days
        self.half = self.I // 2
        self.last_start = self.I * (self.H - 1)
        self.weekly = self.H >= 7

    def initial(self) -> tuple:
        # (open window counts, today all rest, last day off)
        return ((), True, -1)

    def advance(self, rest_state: tuple, t0: int, t1: int, resting: bool) -> Optional[tuple]:
        """Account for instants t0..t1-1 spent resting or not; None if a rule breaks."""
        wins, today, last_off = rest_state
        wins = list(wins)
        I, half = self.I, self.half
        for u in range(t0, t1):
            if u <= self.last_start:
                wins.append(0)
            if resting:
                wins = [min(c + 1, half) for c in wins]
            first = max(0, u - I + 1)
            if u - I + 1 >= 0 and u - I + 1 <= self.last_start:
                if wins[0] < half:
                    return None
                wins.pop(0)
                first += 1
            # a window that cannot reach I/2 any more is already lost
            for k, c in enumerate(wins):
                end = first + k + I - 1
                if c + (end - u) < half:
                    return None
            if self.weekly:
                if u % I == 0:
                    today = True
                today = today and resting
                if (u + 1) % I == 0:
                    j = u // I
                    if today:
                        last_off = j
                    if j >= 6 and last_off < j - 6:
                        return None
        return (tuple(wins), today if self.weekly else True, last_off if self.weekly else -1)


@dataclass
class _Layer:
    best: dict = field(default_factory=dict)  # state -> (cost, parent state, moves)


def _truck_moves(g: TimeExpandedDigraph, node: int, cargo: Optional[int], delivered: int, aboard: set):
    for e in g.out_arcs[node]:
        a = g.arcs[e]
        if a.kind == PICKUP:
            if cargo is not None or (delivered >> a.request) & 1 or a.request in aboard:
                continue
            yield e, a.request
        elif a.kind == DELIVERY:
            if cargo != a.request:
                continue
            yield e, None
        elif a.kind == SINK:
            if cargo is not None:
                continue
            yield e, None
        else:
            yield e, cargo


class _JointSearch:
    def __init__(self, inst: Instance, budget: OracleBudget, keep_edges: bool = False):
        self.inst = inst
        self.budget = budget
        self.graphs = build_graphs(inst, LT)
        self.g, self.x = self.graphs.truck, self.graphs.driver
        self.rules = _Rules(inst)
        self.T = inst.horizon.total_instants
        self.keep_edges = keep_edges
        self.edges: list[dict] = []
        self.layers: list[dict] = []
        self.full = (1 << len(inst.requests)) - 1
        self.states = 0
        self.start = time.perf_counter()

    def start_state(self):
        g, x = self.g, self.x
        trucks = tuple((g.node_id(l, 0), None) for l in self.inst.truck_starts)
        drivers = tuple((x.node_id(l, 0), self.rules.initial()) for l in self.inst.driver_starts)
        return (trucks, drivers, 0)

    def _alive(self, t: int, trucks, delivered: int) -> bool:
        inst = self.inst
        aboard = {c for _, c in trucks if c is not None}
        for r in range(len(inst.requests)):
            if (delivered >> r) & 1:
                continue
            if r in aboard:
                if not inst.delivery_instants[r] or inst.delivery_instants[r][-1] < t:
                    return False
            elif not inst.pickup_instants[r] or inst.pickup_instants[r][-1] < t:
                return False
        return True

    def successors(self, t: int, state):
        """Joint moves from a state at instant ``t`` into layer ``t + 1`` (or the sink)."""
        g, x = self.g, self.x
        trucks, drivers, delivered = state
        final = t == self.T
        free_t = [v for v, (n, _) in enumerate(trucks) if g.nodes[n].t == t]
        free_d = [d for d, (n, _) in enumerate(drivers) if x.nodes[n].t == t]
        aboard = {c for _, c in trucks if c is not None}
        truck_opts = [list(_truck_moves(g, trucks[v][0], trucks[v][1], delivered, aboard)) for v in free_t]
        for combo in itertools.product(*truck_opts):
            picks = [c for (e, c), v in zip(combo, free_t) if g.arcs[e].kind == PICKUP]
            if len(set(picks)) != len(picks):
                continue
            new_trucks = list(trucks)
            new_delivered = delivered
            cost = 0
            demand: dict[tuple, int] = defaultdict(int)
            for v, (e, c) in zip(free_t, combo):
                a = g.arcs[e]
                new_trucks[v] = (a.head, c)
                cost += a.weight
                if a.kind == DELIVERY:
                    new_delivered |= 1 << a.request
                if a.kind in SYNC_KINDS:
                    demand[g.signature(e)] += 1
            if final and new_delivered != self.full:
                continue
            if not final and not self._alive(t + 1, new_trucks, new_delivered):
                continue
            yield from self._driver_moves(t, drivers, free_d, demand, tuple(new_trucks),
                                          new_delivered, cost, combo, free_t)

    def _driver_moves(self, t, drivers, free_d, demand, new_trucks, new_delivered, cost, tcombo, free_t):
        x = self.x
        # drivers already riding a truck arc started earlier count towards nothing now
        opts = []
        for d in free_d:
            node, rest = drivers[d]
            choices = []
            for e in x.out_arcs[node]:
                a = x.arcs[e]
                if a.kind in SYNC_KINDS and x.signature(e) not in demand:
                    continue
                choices.append(e)
            opts.append(choices)
        for combo in itertools.product(*opts):
            ride: dict[tuple, int] = defaultdict(int)
            for e in combo:
                if x.arcs[e].kind in SYNC_KINDS:
                    ride[x.signature(e)] += 1
            if any(not demand[s] <= ride.get(s, 0) <= 2 * demand[s] for s in demand):
                continue
            new_drivers = list(drivers)
            extra = 0
            ok = True
            for d, e in zip(free_d, combo):
                a = x.arcs[e]
                node, rest = drivers[d]
                if a.kind == SINK:
                    new_drivers[d] = (a.head, rest)
                    continue
                nrest = self.rules.advance(rest, t, x.nodes[a.head].t, a.kind == REST)
                if nrest is None:
                    ok = False
                    break
                new_drivers[d] = (a.head, nrest)
                extra += a.weight
            if not ok:
                continue
            moves = (tuple(zip(free_t, (e for e, _ in tcombo))), tuple(zip(free_d, combo)))
            yield (new_trucks, tuple(new_drivers), new_delivered), cost + extra, moves

    def run(self) -> Optional[tuple]:
        s0 = self.start_state()
        layer = {s0: (0, None, None)}
        self.layers = [layer]
        for t in range(self.T + 1):
            nxt: dict = {}
            edges: dict = defaultdict(list) if self.keep_edges else None
            for state in sorted(layer, key=repr) if self.keep_edges else layer:
                base = layer[state][0]
                for succ, c, moves in self.successors(t, state):
                    total = base + c
                    cur = nxt.get(succ)
                    if cur is None or total < cur[0]:
                        nxt[succ] = (total, state, moves)
                    if edges is not None:
                        edges[state].append((succ, moves))
                if time.perf_counter() - self.start > self.budget.time_cap:
                    raise OracleBudgetError(f"oracle time cap of {self.budget.time_cap}s exceeded")
            if len(nxt) > self.budget.max_states:
                raise OracleBudgetError(f"more than {self.budget.max_states} states in layer {t + 1}")
            self.states += len(nxt)
            if edges is not None:
                self.edges.append(edges)
            layer = nxt
            self.layers.append(layer)
        if not layer:
            return None
        end = min(layer, key=lambda s: (layer[s][0], repr(s)))
        return end, layer[end][0]

    def plan_from_moves(self, move_seq: Sequence[tuple]) -> Plan:
        inst, g, x = self.inst, self.g, self.x
        trucks = [[g.find_arc(SOURCE, SOURCE_NODE, g.node_id(l, 0))] for l in inst.truck_starts]
        drivers = [[x.find_arc(SOURCE, SOURCE_NODE, x.node_id(l, 0))] for l in inst.driver_starts]
        for tmoves, dmoves in move_seq:
            for v, e in tmoves:
                trucks[v].append(e)
            for d, e in dmoves:
                drivers[d].append(e)
        return Plan(LT, trucks, drivers).with_day_off(x)

    def backtrack(self, end) -> Plan:
        seq = []
        state = end
        for t in range(len(self.layers) - 1, 0, -1):
            _, parent, moves = self.layers[t][state]
            seq.append(moves)
            state = parent
        seq.reverse()
        return self.plan_from_moves(seq)


def exhaustive_solve(inst: Instance, budget: OracleBudget = OracleBudget()) -> OracleResult:
    """Global optimum over all plans, with a witness plan on the LT/LTX digraphs."""
    if validate_instance(inst):
        problems = validate_instance(inst)
        if any("no feasible" in p for p in problems):
            return OracleResult(INFEASIBLE, None, None, build_graphs(inst, LT))
        raise ValueError(f"invalid instance: {problems[0]}")
    search = _JointSearch(inst, budget)
    found = search.run()
    if found is None:
        return OracleResult(INFEASIBLE, None, None, search.graphs, search.states)
    end, value = found
    return OracleResult(OPTIMAL, int(value), search.backtrack(end), search.graphs, search.states)


def sample_plans(inst: Instance, n: int, seed: int = 0,
                 budget: OracleBudget = OracleBudget()) -> list[Plan]:
    """``n`` random feasible plans (repeats possible), drawn by walking the
    joint transition system through states from which the sink is reachable."""
    search = _JointSearch(inst, budget, keep_edges=True)
    if search.run() is None:
        return []
    live: set = set(search.layers[-1])
    live_edges = []
    for t in range(len(search.edges) - 1, -1, -1):
        keep = {}
        for state, outs in search.edges[t].items():
            good = [(s, m) for s, m in outs if s in live]
            if good:
                keep[state] = good
        live_edges.append(keep)
        live = set(keep)
    live_edges.reverse()
    rng = random.Random(seed)
    plans = []
    s0 = search.start_state()
    for _ in range(n):
        state = s0
        seq = []
        for t in range(len(live_edges)):
            state, moves = rng.choice(live_edges[t][state])
            seq.append(moves)
        plans.append(search.plan_from_moves(seq))
    return plans


# ---------------------------------------------------------------------------
# independent duration check


def duration_by_search(inst: Instance, requests: Sequence[int], mode: str, anchor: int) -> float:
    """Minimum duration by a shortest-path search over (time, place, load, progress).

    Unlike the permutation formula this explores arbitrary waits, detours and
    direct trips instant by instant; modes and anchors are those of
    ``cuts.min_duration``. In pickup mode every pickup must still be followed
    by its delivery inside the horizon.
    """
    from .cuts import DELIVER_FROM_INSTANT, PICKUP_FROM_START

    rs = list(requests)
    k = len(rs)
    T = inst.horizon.total_instants
    L = inst.n_locations
    picks = [set(inst.pickup_instants[r]) for r in rs]
    drops = [set(inst.delivery_instants[r]) for r in rs]
    # progress per request: 0 waiting, 1 aboard, 2 delivered
    starts = []
    if mode == DELIVER_FROM_INSTANT:
        t0 = anchor
        for l in range(L):
            starts.append((t0, l, (0,) * k))
            for q in range(k):
                starts.append((t0, l, tuple(1 if j == q else 0 for j in range(k))))
    else:
        t0 = 0
        starts.append((0, inst.truck_starts[anchor], (0,) * k))

    # state: (time, place, progress, completion of the latest pickup)
    heap = [(t, l, p, t0) for t, l, p in starts if t <= T]
    heapq.heapify(heap)
    seen = set()
    best = math.inf
    while heap:
        t, l, prog, lp = heapq.heappop(heap)
        if (t, l, prog, lp) in seen:
            continue
        seen.add((t, l, prog, lp))
        if all(p == 2 for p in prog):
            if mode != PICKUP_FROM_START:
                return t - t0 if mode == DELIVER_FROM_INSTANT else t
            # every pickup must still be followed by its delivery
            best = min(best, lp)
            continue
        nxt = []
        if t + 1 <= T:
            nxt.append((t + 1, l, prog, lp))
        for l2 in range(L):
            if l2 != l and t + inst.truck_time[l][l2] <= T:
                nxt.append((t + inst.truck_time[l][l2], l2, prog, lp))
        loaded = 1 in prog
        for j, r in enumerate(rs):
            req = inst.requests[r]
            if prog[j] == 0 and not loaded and l == req.pickup_loc and t in picks[j]:
                p2 = list(prog)
                p2[j] = 1
                nxt.append((t + req.pickup_service, l, tuple(p2), t + req.pickup_service))
            if prog[j] == 1 and l == req.delivery_loc and t in drops[j]:
                p2 = list(prog)
                p2[j] = 2
                nxt.append((t + req.delivery_service, l, tuple(p2), lp))
        for item in nxt:
            if item not in seen:
                heapq.heappush(heap, item)
    return best
