"""Time-expanded digraphs for truck routes (LT, LTC, LTR) and driver routes (LTX).

Nodes are (location, instant, cargo) triples plus a source and a sink. The
cargo tag is ``None`` in LT/LTX, ``EMPTY``/``LOADED`` in LTC, and ``EMPTY`` or a
request index in LTR. Arcs get integer ids in construction order; LTC and LTR
are pruned to the nodes lying on some source-sink path and renumbered.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional

from .model_core import Instance, delay_penalty

LT, LTC, LTR, LTX = "LT", "LTC", "LTR", "LTX"
TRUCK_FLAVORS = (LT, LTC, LTR)

REST, TRIP, PICKUP, DELIVERY, TAXI, SOURCE, SINK = (
    "rest", "trip", "pickup", "delivery", "taxi", "source", "sink")
SYNC_KINDS = (TRIP, PICKUP, DELIVERY)

EMPTY = -1
LOADED = -2

SOURCE_NODE = 0
SINK_NODE = 1


@dataclass(frozen=True)
class GNode:
    loc: Optional[int]
    t: Optional[int]
    cargo: Optional[int] = None

    @property
    def is_terminal(self) -> bool:
        return self.loc is None


@dataclass(frozen=True)
class GArc:
    id: int
    kind: str
    tail: int
    head: int
    weight: int
    request: Optional[int] = None


def _cargo_label(c: Optional[int]) -> str:
    if c is None:
        return ""
    if c == EMPTY:
        return "o"
    if c == LOADED:
        return "*"
    return f"r{c}"


class TimeExpandedDigraph:
    """Immutable weighted multidigraph over (location, instant, cargo) nodes."""

    def __init__(self, flavor: str, inst: Instance, nodes: list[GNode], arcs: list[GArc]):
        self.flavor = flavor
        self.horizon = inst.horizon
        self.n_requests = len(inst.requests)
        self.nodes = nodes
        self.arcs = arcs
        self.node_index = {n: k for k, n in enumerate(nodes)}
        self.out_arcs: list[list[int]] = [[] for _ in nodes]
        self.in_arcs: list[list[int]] = [[] for _ in nodes]
        self.by_kind: dict[str, list[int]] = {k: [] for k in (REST, TRIP, PICKUP, DELIVERY, TAXI, SOURCE, SINK)}
        self.pickup_arcs: list[list[int]] = [[] for _ in inst.requests]
        self.delivery_arcs: list[list[int]] = [[] for _ in inst.requests]
        self._signature: dict[tuple, list[int]] = defaultdict(list)
        for a in arcs:
            self.out_arcs[a.tail].append(a.id)
            self.in_arcs[a.head].append(a.id)
            self.by_kind[a.kind].append(a.id)
            if a.kind == PICKUP:
                self.pickup_arcs[a.request].append(a.id)
            elif a.kind == DELIVERY:
                self.delivery_arcs[a.request].append(a.id)
            self._signature[self.signature(a.id)].append(a.id)

    # -- accessors ---------------------------------------------------------
    def arc(self, e: int) -> GArc:
        return self.arcs[e]

    def tail_loc(self, e: int) -> Optional[int]:
        return self.nodes[self.arcs[e].tail].loc

    def head_loc(self, e: int) -> Optional[int]:
        return self.nodes[self.arcs[e].head].loc

    def tail_t(self, e: int) -> Optional[int]:
        return self.nodes[self.arcs[e].tail].t

    def head_t(self, e: int) -> Optional[int]:
        return self.nodes[self.arcs[e].head].t

    def signature(self, e: int) -> tuple:
        """Cargo-free identity of an arc, shared by its copies across flavors."""
        a = self.arcs[e]
        t, h = self.nodes[a.tail], self.nodes[a.head]
        return (a.kind, t.loc, t.t, h.loc, h.t, a.request)

    def matching(self, signature: tuple) -> list[int]:
        return list(self._signature.get(signature, ()))

    def node_id(self, loc: int, t: int, cargo: Optional[int] = None) -> Optional[int]:
        return self.node_index.get(GNode(loc, t, cargo))

    def find_arc(self, kind: str, tail: int, head: int, request: Optional[int] = None) -> Optional[int]:
        for e in self.out_arcs[tail]:
            a = self.arcs[e]
            if a.kind == kind and a.head == head and a.request == request:
                return e
        return None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    def topological_nodes(self) -> list[int]:
        """Node ids ordered by instant (source first, sink last)."""
        inner = [k for k, n in enumerate(self.nodes) if not n.is_terminal]
        inner.sort(key=lambda k: (self.nodes[k].t, k))
        return [SOURCE_NODE] + inner + [SINK_NODE]

    def to_dot(self) -> str:
        """Debug listing in DOT syntax; not a stable format."""
        lines = [f"digraph {self.flavor} {{"]
        for k, n in enumerate(self.nodes):
            if k == SOURCE_NODE:
                label = "source"
            elif k == SINK_NODE:
                label = "sink"
            else:
                label = f"l{n.loc},{n.t}{_cargo_label(n.cargo)}"
            lines.append(f'  n{k} [label="{label}"];')
        for a in self.arcs:
            tag = a.kind if a.request is None else f"{a.kind}:r{a.request}"
            lines.append(f'  n{a.tail} -> n{a.head} [label="{a.id}:{tag}:{a.weight}"];')
        lines.append("}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# construction


def _adjacent_pairs(inst: Instance, adjacency: Optional[Iterable[tuple[int, int]]]) -> list[tuple[int, int]]:
    n = inst.n_locations
    if adjacency is None:
        return [(a, b) for a in range(n) for b in range(n) if a != b]
    return sorted({(a, b) for a, b in adjacency if a != b})


class _Builder:
    def __init__(self, inst: Instance, cargos: list[Optional[int]]):
        self.inst = inst
        self.nodes: list[GNode] = [GNode(None, None), GNode(None, None, 1)]
        self.index: dict[GNode, int] = {}
        T = inst.horizon.total_instants
        for c in cargos:
            for l in range(inst.n_locations):
                for t in range(T + 1):
                    node = GNode(l, t, c)
                    self.index[node] = len(self.nodes)
                    self.nodes.append(node)
        self.arcs: list[tuple[str, int, int, int, Optional[int]]] = []

    def n(self, l: int, t: int, c: Optional[int]) -> int:
        return self.index[GNode(l, t, c)]

    def add(self, kind: str, tail: int, head: int, weight: int = 0, request: Optional[int] = None) -> None:
        self.arcs.append((kind, tail, head, weight, request))

    def add_rests(self, cargo: Optional[int]) -> None:
        T = self.inst.horizon.total_instants
        for l in range(self.inst.n_locations):
            for t in range(T):
                self.add(REST, self.n(l, t, cargo), self.n(l, t + 1, cargo))

    def add_moves(self, kind: str, pairs, times, costs, cargo: Optional[int]) -> None:
        T = self.inst.horizon.total_instants
        for a, b in pairs:
            delta = times[a][b]
            for t in range(T - delta + 1):
                self.add(kind, self.n(a, t, cargo), self.n(b, t + delta, cargo), costs[a][b])

    def add_services(self, pick_cargo, loaded_cargo, penalize: bool = True) -> None:
        """Pickup arcs go pick_cargo -> loaded_cargo(r); deliveries the reverse."""
        inst = self.inst
        for r, req in enumerate(inst.requests):
            full = loaded_cargo(r)
            for t in inst.pickup_instants[r]:
                self.add(PICKUP, self.n(req.pickup_loc, t, pick_cargo),
                         self.n(req.pickup_loc, t + req.pickup_service, full), 0, r)
        for r, req in enumerate(inst.requests):
            full = loaded_cargo(r)
            for t in inst.delivery_instants[r]:
                self.add(DELIVERY, self.n(req.delivery_loc, t, full),
                         self.n(req.delivery_loc, t + req.delivery_service, pick_cargo),
                         delay_penalty(req, t, inst.horizon) if penalize else 0, r)

    def add_terminals(self, starts: list[int], cargo: Optional[int]) -> None:
        T = self.inst.horizon.total_instants
        for l in starts:
            self.add(SOURCE, SOURCE_NODE, self.n(l, 0, cargo))
        for l in range(self.inst.n_locations):
            self.add(SINK, self.n(l, T, cargo), SINK_NODE)

    def finish(self, flavor: str, prune: bool) -> TimeExpandedDigraph:
        nodes, arcs = self.nodes, self.arcs
        if prune:
            nodes, arcs = _prune(nodes, arcs)
        garcs = [GArc(k, kind, t, h, w, r) for k, (kind, t, h, w, r) in enumerate(arcs)]
        return TimeExpandedDigraph(flavor, self.inst, nodes, garcs)


def _prune(nodes: list[GNode], arcs: list[tuple]) -> tuple[list[GNode], list[tuple]]:
    """Keep only nodes that are reachable from the source and reach the sink."""
    out: list[list[int]] = [[] for _ in nodes]
    inc: list[list[int]] = [[] for _ in nodes]
    for k, (_, t, h, _, _) in enumerate(arcs):
        out[t].append(h)
        inc[h].append(t)

    def reach(start: int, adj: list[list[int]]) -> set[int]:
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen

    alive = reach(SOURCE_NODE, out) & reach(SINK_NODE, inc)
    alive |= {SOURCE_NODE, SINK_NODE}
    keep = [k for k in range(len(nodes)) if k in alive]
    remap = {old: new for new, old in enumerate(keep)}
    new_nodes = [nodes[k] for k in keep]
    new_arcs = [(kind, remap[t], remap[h], w, r) for kind, t, h, w, r in arcs
                if t in alive and h in alive]
    return new_nodes, new_arcs


def build_lt(inst: Instance, adjacency=None) -> TimeExpandedDigraph:
    b = _Builder(inst, [None])
    pairs = _adjacent_pairs(inst, adjacency)
    b.add_rests(None)
    b.add_moves(TRIP, pairs, inst.truck_time, inst.truck_cost, None)
    b.add_services(None, lambda r: None)
    b.add_terminals(inst.truck_start_set, None)
    return b.finish(LT, prune=False)


def build_ltx(inst: Instance, adjacency=None) -> TimeExpandedDigraph:
    """LT node set with truck arcs, taxi arcs, and driver source arcs."""
    b = _Builder(inst, [None])
    pairs = _adjacent_pairs(inst, adjacency)
    b.add_rests(None)
    b.add_moves(TRIP, pairs, inst.truck_time, [[0] * inst.n_locations] * inst.n_locations, None)
    # trip and service arcs are free for drivers; the truck carries their cost
    b.add_services(None, lambda r: None, penalize=False)
    b.add_moves(TAXI, pairs, inst.taxi_time, inst.taxi_cost, None)
    b.add_terminals(inst.driver_start_set, None)
    return b.finish(LTX, prune=False)


def build_ltc(inst: Instance, adjacency=None, prune: bool = True) -> TimeExpandedDigraph:
    b = _Builder(inst, [EMPTY, LOADED])
    pairs = _adjacent_pairs(inst, adjacency)
    for q in (EMPTY, LOADED):
        b.add_rests(q)
    for q in (EMPTY, LOADED):
        b.add_moves(TRIP, pairs, inst.truck_time, inst.truck_cost, q)
    b.add_services(EMPTY, lambda r: LOADED)
    b.add_terminals(inst.truck_start_set, EMPTY)
    return b.finish(LTC, prune)


def build_ltr(inst: Instance, adjacency=None, prune: bool = True) -> TimeExpandedDigraph:
    cargos = [EMPTY] + list(range(len(inst.requests)))
    b = _Builder(inst, cargos)
    pairs = _adjacent_pairs(inst, adjacency)
    for q in cargos:
        b.add_rests(q)
    for q in cargos:
        b.add_moves(TRIP, pairs, inst.truck_time, inst.truck_cost, q)
    b.add_services(EMPTY, lambda r: r)
    b.add_terminals(inst.truck_start_set, EMPTY)
    return b.finish(LTR, prune)


BUILDERS = {LT: build_lt, LTC: build_ltc, LTR: build_ltr, LTX: build_ltx}


def build(flavor: str, inst: Instance, adjacency=None) -> TimeExpandedDigraph:
    return BUILDERS[flavor](inst, adjacency)


@dataclass
class Graphs:
    """The truck digraph of one flavor together with the driver digraph."""
    truck: TimeExpandedDigraph
    driver: TimeExpandedDigraph

    @property
    def flavor(self) -> str:
        return self.truck.flavor


def build_graphs(inst: Instance, flavor: str, adjacency=None) -> Graphs:
    return Graphs(build(flavor, inst, adjacency), build_ltx(inst, adjacency))


# ---------------------------------------------------------------------------
# correspondences, agent filters, capacities


def arc_correspondence(target: TimeExpandedDigraph, ltx: TimeExpandedDigraph, e: int) -> list[int]:
    """Arcs of ``target`` matching the LTX trip/pickup/delivery arc ``e``."""
    kind = ltx.arcs[e].kind
    if kind not in SYNC_KINDS:
        raise ValueError(f"arc {e} of kind {kind} is not synchronised")
    return target.matching(ltx.signature(e))


def agent_arcs(g: TimeExpandedDigraph, start_loc: int) -> list[int]:
    """All arcs except source arcs leading away from ``start_loc``."""
    return [a.id for a in g.arcs
            if a.kind != SOURCE or g.nodes[a.head].loc == start_loc]


def ltr_capacity(g: TimeExpandedDigraph, e: int, inst: Instance) -> int:
    a = g.arcs[e]
    if a.kind == SOURCE:
        loc = g.nodes[a.head].loc
        return sum(1 for l in inst.truck_starts if l == loc)
    ends = (g.nodes[a.tail], g.nodes[a.head])
    if any(n.loc is not None and n.cargo is not None and n.cargo >= 0 for n in ends):
        return 1
    return inst.n_trucks
