"""Route and plan semantics on the time-expanded digraphs."""

from __future__ import annotations

from collections import Counter, defaultdict, deque
from dataclasses import dataclass
from typing import Optional, Sequence

from .model_core import Instance
from .timegraphs import (DELIVERY, LT, LTR, PICKUP, REST, SINK, SINK_NODE,
                         SOURCE, SOURCE_NODE, SYNC_KINDS, TAXI, TRIP, Graphs,
                         TimeExpandedDigraph)

REPEATED = "repeated"
UNPAIRED = "unpaired"
DISORDERED = "disordered"
EXCESS = "excess-capacity"
DAILY = "daily-rest"
WEEKLY = "weekly-rest"


class RouteError(ValueError):
    """An arc sequence that is not a source-sink path, or an undecomposable flow."""


@dataclass
class Plan:
    flavor: str
    truck_routes: list[list[int]]
    driver_routes: list[list[int]]
    day_off: Optional[list[list[int]]] = None

    def with_day_off(self, ltx: TimeExpandedDigraph) -> "Plan":
        """Copy of the plan whose day-off flags are derived from the driver routes."""
        flags = [day_off_days(ltx, r) for r in self.driver_routes]
        return Plan(self.flavor, [list(r) for r in self.truck_routes],
                    [list(r) for r in self.driver_routes], flags)


@dataclass
class CostBreakdown:
    truck_travel: int = 0
    taxi_travel: int = 0
    delay_penalties: int = 0

    @property
    def total(self) -> int:
        return self.truck_travel + self.taxi_travel + self.delay_penalties


# ---------------------------------------------------------------------------
# paths


def check_path(g: TimeExpandedDigraph, route: Sequence[int]) -> None:
    if not route:
        return
    arcs = g.arcs
    if arcs[route[0]].tail != SOURCE_NODE:
        raise RouteError("route does not start at the source")
    if arcs[route[-1]].head != SINK_NODE:
        raise RouteError("route does not end at the sink")
    for a, b in zip(route, route[1:]):
        if arcs[a].head != arcs[b].tail:
            raise RouteError(f"arcs {a} and {b} are not consecutive")


def start_location(g: TimeExpandedDigraph, route: Sequence[int]) -> Optional[int]:
    return g.head_loc(route[0]) if route else None


def check_truck_route(g: TimeExpandedDigraph, route: Sequence[int]) -> list[str]:
    """Forbidden-path categories present in a truck route.

    Categories made impossible by the digraph structure are not reported:
    excess capacity in LTC, and everything but repeated services in LTR.
    """
    check_path(g, route)
    out: list[str] = []
    picks: Counter = Counter()
    drops: Counter = Counter()
    load = 0
    disordered = excess = False
    for e in route:
        a = g.arcs[e]
        if a.kind == PICKUP:
            picks[a.request] += 1
            load += 1
            if load > 1:
                excess = True
        elif a.kind == DELIVERY:
            if picks[a.request] == 0:
                disordered = True
            drops[a.request] += 1
            load -= 1
    if any(c > 1 for c in picks.values()) or any(c > 1 for c in drops.values()):
        out.append(REPEATED)
    if g.flavor != LTR:
        if any(picks[r] != drops[r] for r in set(picks) | set(drops)):
            out.append(UNPAIRED)
        if disordered:
            out.append(DISORDERED)
        if excess and g.flavor == LT:
            out.append(EXCESS)
    return out


def disordered_alternative(g: TimeExpandedDigraph, route: Sequence[int]) -> bool:
    """Some prefix has more deliveries than pickups of one request."""
    bal: Counter = Counter()
    for e in route:
        a = g.arcs[e]
        if a.kind == PICKUP:
            bal[a.request] += 1
        elif a.kind == DELIVERY:
            bal[a.request] -= 1
            if bal[a.request] < 0:
                return True
    return False


def rest_instants(g: TimeExpandedDigraph, route: Sequence[int]) -> set[int]:
    return {g.tail_t(e) for e in route if g.arcs[e].kind == REST}


def day_off_days(g: TimeExpandedDigraph, route: Sequence[int]) -> list[int]:
    """Per day, 1 if the route only rests during it (a rest arc keeps its location)."""
    h = g.horizon
    rests = rest_instants(g, route)
    I = h.instants_per_day
    return [int(all(t in rests for t in range(I * j, I * (j + 1)))) for j in range(h.days)]


def check_driver_route(g: TimeExpandedDigraph, route: Sequence[int]) -> list[str]:
    check_path(g, route)
    h = g.horizon
    I, H = h.instants_per_day, h.days
    rests = rest_instants(g, route)
    out: list[str] = []
    for i in range(I * (H - 1) + 1):
        if sum(1 for t in range(i, i + I) if t in rests) < I // 2:
            out.append(DAILY)
            break
    if H >= 7:
        off = day_off_days(g, route)
        if any(not any(off[j:j + 7]) for j in range(H - 6)):
            out.append(WEEKLY)
    return out


# ---------------------------------------------------------------------------
# plans


def _sync_counts(g: TimeExpandedDigraph, routes: Sequence[Sequence[int]]) -> Counter:
    c: Counter = Counter()
    for route in routes:
        for e in route:
            if g.arcs[e].kind in SYNC_KINDS:
                c[g.signature(e)] += 1
    return c


def check_sync(plan: Plan, inst: Instance, graphs: Graphs) -> list[str]:
    """Drivers aboard every truck trip/service arc (1 or 2 per truck) and coverage."""
    out: list[str] = []
    trucks = _sync_counts(graphs.truck, plan.truck_routes)
    drivers = _sync_counts(graphs.driver, plan.driver_routes)
    for sig in sorted(set(trucks) | set(drivers), key=repr):
        v, d = trucks.get(sig, 0), drivers.get(sig, 0)
        if not v <= d <= 2 * v:
            out.append(f"sync: {sig[0]} {sig[1]}@{sig[2]}->{sig[3]}@{sig[4]} trucks={v} drivers={d}")
    g = graphs.truck
    picks: Counter = Counter()
    drops: Counter = Counter()
    for route in plan.truck_routes:
        for e in route:
            a = g.arcs[e]
            if a.kind == PICKUP:
                picks[a.request] += 1
            elif a.kind == DELIVERY:
                drops[a.request] += 1
    for r, req in enumerate(inst.requests):
        if picks[r] != 1 or drops[r] != 1:
            out.append(f"coverage: request {req.id} picked {picks[r]} delivered {drops[r]}")
    return out


def check_plan(plan: Plan, inst: Instance, graphs: Graphs) -> list[str]:
    """Every structural, labour, and synchronisation check on a full plan."""
    if plan.flavor != graphs.truck.flavor:
        raise ValueError(f"plan flavor {plan.flavor} does not match graph {graphs.truck.flavor}")
    out: list[str] = []
    if len(plan.truck_routes) != inst.n_trucks or len(plan.driver_routes) != inst.n_drivers:
        return ["plan has the wrong number of routes"]
    for v, route in enumerate(plan.truck_routes):
        try:
            bad = check_truck_route(graphs.truck, route)
        except RouteError as exc:
            out.append(f"truck {v}: {exc}")
            continue
        out += [f"truck {v}: {b}" for b in bad]
        if route and start_location(graphs.truck, route) != inst.truck_starts[v]:
            out.append(f"truck {v}: wrong start location")
    for d, route in enumerate(plan.driver_routes):
        try:
            bad = check_driver_route(graphs.driver, route)
        except RouteError as exc:
            out.append(f"driver {d}: {exc}")
            continue
        out += [f"driver {d}: {b}" for b in bad]
        if route and start_location(graphs.driver, route) != inst.driver_starts[d]:
            out.append(f"driver {d}: wrong start location")
        if plan.day_off is not None:
            actual = day_off_days(graphs.driver, route)
            for j, flag in enumerate(plan.day_off[d]):
                if flag and not actual[j]:
                    out.append(f"driver {d}: day {j} flagged off but not rested")
    out += check_sync(plan, inst, graphs)
    return out


def plan_cost(plan: Plan, inst: Instance, graphs: Graphs) -> CostBreakdown:
    cb = CostBreakdown()
    g = graphs.truck
    for route in plan.truck_routes:
        for e in route:
            a = g.arcs[e]
            if a.kind == TRIP:
                cb.truck_travel += a.weight
            elif a.kind == DELIVERY:
                cb.delay_penalties += a.weight
    x = graphs.driver
    for route in plan.driver_routes:
        for e in route:
            a = x.arcs[e]
            cb.taxi_travel += a.weight if a.kind == TAXI else 0
    return cb


# ---------------------------------------------------------------------------
# building and translating routes


def lift_route(g: TimeExpandedDigraph, signatures: Sequence[tuple]) -> list[int]:
    """Map cargo-free arc signatures onto ``g``, tracking the cargo tag."""
    route: list[int] = []
    node = SOURCE_NODE
    for sig in signatures:
        choices = [e for e in g.matching(sig) if g.arcs[e].tail == node]
        if len(choices) != 1:
            raise RouteError(f"cannot place arc {sig} in {g.flavor}")
        route.append(choices[0])
        node = g.arcs[choices[0]].head
    return route


def convert_route(src: TimeExpandedDigraph, dst: TimeExpandedDigraph, route: Sequence[int]) -> list[int]:
    return lift_route(dst, [src.signature(e) for e in route])


def convert_plan(plan: Plan, src: Graphs, dst: Graphs) -> Plan:
    trucks = [convert_route(src.truck, dst.truck, r) for r in plan.truck_routes]
    drivers = [convert_route(src.driver, dst.driver, r) for r in plan.driver_routes]
    day_off = None if plan.day_off is None else [list(f) for f in plan.day_off]
    return Plan(dst.truck.flavor, trucks, drivers, day_off)


def steps_to_signatures(inst: Instance, start_loc: int, steps: Sequence[tuple],
                        vehicle: str = "truck") -> list[tuple]:
    """Expand ("rest", n) / ("trip", l) / ("taxi", l) / ("pickup", r) / ("delivery", r, t?)
    steps into arc signatures, resting until the horizon end and entering the sink.

    Services start at the current instant; ("wait", t) rests until instant t.
    """
    T = inst.horizon.total_instants
    loc, t = start_loc, 0
    sigs = [(SOURCE, None, None, loc, 0, None)]
    for step in steps:
        kind = step[0]
        if kind == "rest":
            for _ in range(step[1]):
                sigs.append((REST, loc, t, loc, t + 1, None))
                t += 1
        elif kind == "wait":
            while t < step[1]:
                sigs.append((REST, loc, t, loc, t + 1, None))
                t += 1
        elif kind in ("trip", "taxi"):
            dest = step[1]
            dt = (inst.truck_time if kind == "trip" else inst.taxi_time)[loc][dest]
            sigs.append((TRIP if kind == "trip" else TAXI, loc, t, dest, t + dt, None))
            loc, t = dest, t + dt
        elif kind in ("pickup", "delivery"):
            r = step[1]
            req = inst.requests[r]
            s = req.pickup_service if kind == "pickup" else req.delivery_service
            sigs.append((PICKUP if kind == "pickup" else DELIVERY, loc, t, loc, t + s, r))
            t += s
        else:
            raise ValueError(f"unknown step {step}")
        if t > T:
            raise RouteError("steps run past the planning horizon")
    while t < T:
        sigs.append((REST, loc, t, loc, t + 1, None))
        t += 1
    sigs.append((SINK, loc, T, None, None, None))
    return sigs


def build_route(g: TimeExpandedDigraph, inst: Instance, start_loc: int, steps: Sequence[tuple]) -> list[int]:
    return lift_route(g, steps_to_signatures(inst, start_loc, steps))


def resting_route(g: TimeExpandedDigraph, inst: Instance, start_loc: int) -> list[int]:
    return build_route(g, inst, start_loc, [])


# ---------------------------------------------------------------------------
# flow decomposition


def decompose_flow(g: TimeExpandedDigraph, flow: dict[int, int], inst: Instance) -> list[list[int]]:
    """Split an integral source-sink arc flow into per-truck routes.

    Paths are extracted one at a time as fewest-arc source-sink paths in the
    flow support (ties to the smallest arc id) and assigned to the trucks whose
    start location matches, in truck order. Trucks without a path get ``[]``.
    """
    rest = {e: int(round(x)) for e, x in flow.items() if round(x) > 0}
    inflow: Counter = Counter()
    outflow: Counter = Counter()
    for e, x in rest.items():
        outflow[g.arcs[e].tail] += x
        inflow[g.arcs[e].head] += x
    for n in set(inflow) | set(outflow):
        if n not in (SOURCE_NODE, SINK_NODE) and inflow[n] != outflow[n]:
            raise RouteError(f"flow conservation violated at node {n}")
    total = outflow[SOURCE_NODE]
    paths: list[list[int]] = []
    for _ in range(total):
        pred: dict[int, int] = {}
        queue = deque([SOURCE_NODE])
        seen = {SOURCE_NODE}
        while queue and SINK_NODE not in seen:
            u = queue.popleft()
            for e in sorted(g.out_arcs[u]):
                if rest.get(e, 0) > 0 and g.arcs[e].head not in seen:
                    seen.add(g.arcs[e].head)
                    pred[g.arcs[e].head] = e
                    queue.append(g.arcs[e].head)
        if SINK_NODE not in seen:
            raise RouteError("flow is not decomposable into source-sink paths")
        path = []
        n = SINK_NODE
        while n != SOURCE_NODE:
            e = pred[n]
            path.append(e)
            n = g.arcs[e].tail
        path.reverse()
        for e in path:
            rest[e] -= 1
        paths.append(path)
    if any(x > 0 for x in rest.values()):
        raise RouteError("flow left over after extracting all paths")
    routes: list[list[int]] = [[] for _ in range(inst.n_trucks)]
    free = defaultdict(list)
    for v, l in enumerate(inst.truck_starts):
        free[l].append(v)
    for p in paths:
        loc = g.head_loc(p[0])
        if not free[loc]:
            raise RouteError(f"more paths than trucks starting at location {loc}")
        routes[free[loc].pop(0)] = p
    return routes


def route_flow(routes: Sequence[Sequence[int]]) -> Counter:
    c: Counter = Counter()
    for r in routes:
        c.update(r)
    return c
