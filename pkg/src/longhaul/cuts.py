"""Valid inequalities for the truck side of the integer programs.

Every generator returns :class:`Cut` objects over :class:`VarRef` keys, so a
cut can be attached to any model built on the same digraph. Families:

* ``PREC``: a delivery by instant ``i`` needs a pickup that ended early
  enough to reach the delivery location by ``i``;
* ``PD1``/``PD2``: every pickup at ``l`` is followed by its own trip out of
  ``l`` (and every delivery at ``l`` preceded by a trip into ``l``);
* ``PD3``: a request loaded after ``e1`` and unloaded before ``e2`` forces a
  trip out of the pickup location in between;
* ``SEC1``/``SEC2``: a truck cannot deliver (or pick up) a whole request set
  faster than the shortest pickup/delivery sequence allows.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field
from itertools import combinations, permutations
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .formulations import MilpModel, VarRef
from .lp_engine import GE, LE
from .model_core import Instance
from .timegraphs import LOADED, LT, LTC, LTR, TRIP, TimeExpandedDigraph

INF = math.inf

DELIVER_FROM_START = "deliver-from-start"
PICKUP_FROM_START = "pickup-from-start"
DELIVER_FROM_INSTANT = "deliver-from-instant"
MODES = (DELIVER_FROM_START, PICKUP_FROM_START, DELIVER_FROM_INSTANT)

FULL, VARIANT_A, VARIANT_B = "Full", "A", "B"

MAX_SEQUENCE = 7


class CutError(ValueError):
    """A family requested on a flavor or fleet it does not apply to."""


@dataclass(frozen=True)
class Cut:
    terms: tuple[tuple[VarRef, float], ...]
    sense: int
    rhs: float
    family: str
    provenance: tuple

    def key(self) -> tuple:
        return (self.family, self.provenance)

    def lhs(self, value_of) -> float:
        return sum(c * value_of(ref) for ref, c in self.terms)

    def violation(self, lhs: float) -> float:
        return lhs - self.rhs if self.sense == LE else self.rhs - lhs


def _make_cut(terms: dict[VarRef, float], sense: int, rhs: float, family: str,
              provenance: tuple) -> Optional[Cut]:
    items = tuple(sorted(((k, v) for k, v in terms.items() if v != 0)))
    if not items:
        return None
    return Cut(items, sense, float(rhs), family, provenance)


@dataclass
class CutPool:
    cuts: list[Cut] = field(default_factory=list)
    _keys: dict = field(default_factory=dict, repr=False)

    def add(self, cut: Cut) -> bool:
        if cut.key() in self._keys:
            return False
        self._keys[cut.key()] = len(self.cuts)
        self.cuts.append(cut)
        return True

    def extend(self, cuts) -> int:
        return sum(self.add(c) for c in cuts)

    def __len__(self) -> int:
        return len(self.cuts)

    def __iter__(self):
        return iter(self.cuts)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for c in self.cuts:
            out[c.family] = out.get(c.family, 0) + 1
        return out

    def by_family(self, prefix: str) -> list[Cut]:
        return [c for c in self.cuts if c.family == prefix or c.family.startswith(prefix + "-")]

    def rows(self, model: MilpModel, cuts: Optional[Sequence[Cut]] = None):
        """Sparse rows (matrix, senses, rhs) of ``cuts`` over the model's columns."""
        cuts = self.cuts if cuts is None else cuts
        data, ri, ci = [], [], []
        for k, c in enumerate(cuts):
            for ref, coef in c.terms:
                col = model.index.get(ref)
                if col is None:
                    raise CutError(f"cut {c.family} {c.provenance} uses unknown variable {ref.name}")
                ri.append(k)
                ci.append(col)
                data.append(coef)
        A = sp.csr_matrix((data, (ri, ci)), shape=(len(cuts), model.n_vars))
        return A, np.array([c.sense for c in cuts], dtype=int), np.array([c.rhs for c in cuts])


# ---------------------------------------------------------------------------
# helpers


def _agents(inst: Instance, g: TimeExpandedDigraph, family: str, per_truck: bool = True) -> list[int]:
    if g.flavor in (LT, LTC):
        return list(range(inst.n_trucks))
    if g.flavor == LTR:
        if per_truck and inst.n_trucks != 1:
            raise CutError(f"{family} applies to LTR only with a single truck")
        return [-1]
    raise CutError(f"{family} is not defined on {g.flavor}")


def _x(v: int, e: int) -> VarRef:
    return VarRef("X", v, e)


def _trip_arcs(g: TimeExpandedDigraph) -> list[int]:
    """Trip arcs usable in PD cuts: loaded trips only in LTC."""
    if g.flavor == LTC:
        return [e for e in g.by_kind[TRIP] if g.nodes[g.arcs[e].tail].cargo == LOADED]
    return list(g.by_kind[TRIP])


def _travel(inst: Instance, r: int) -> int:
    req = inst.requests[r]
    return inst.shortest_truck_time[req.pickup_loc][req.delivery_loc]


# ---------------------------------------------------------------------------
# PREC


def gen_prec(inst: Instance, g: TimeExpandedDigraph, flavor: Optional[str] = None) -> list[Cut]:
    flavor = flavor or g.flavor
    if flavor == LTR:
        return []  # precedence is built into the request layers
    agents = _agents(inst, g, "PREC")
    out = []
    for r in range(len(inst.requests)):
        travel = _travel(inst, r)
        for i in inst.delivery_instants[r]:
            t: dict[VarRef, float] = {}
            for v in agents:
                for p in g.pickup_arcs[r]:
                    if g.head_t(p) <= i - travel:
                        t[_x(v, p)] = 1.0
                for e in g.delivery_arcs[r]:
                    if g.tail_t(e) <= i:
                        t[_x(v, e)] = -1.0
            c = _make_cut(t, GE, 0, "PREC", (r, i))
            if c:
                out.append(c)
    return out


# ---------------------------------------------------------------------------
# PD1 / PD2


def gen_pd1(inst: Instance, g: TimeExpandedDigraph, flavor: Optional[str] = None) -> list[Cut]:
    agents = _agents(inst, g, "PD1")
    trips = _trip_arcs(g)
    out = []
    for side in ("P", "D"):
        for l in range(inst.n_locations):
            if side == "P":
                rs = [r for r, q in enumerate(inst.requests) if q.pickup_loc == l]
                services = [e for r in rs for e in g.pickup_arcs[r]]
                moves = [e for e in trips if g.tail_loc(e) == l]
            else:
                rs = [r for r, q in enumerate(inst.requests) if q.delivery_loc == l]
                services = [e for r in rs for e in g.delivery_arcs[r]]
                moves = [e for e in trips if g.head_loc(e) == l]
            if not rs:
                continue
            for v in agents:
                t = {_x(v, e): 1.0 for e in moves}
                for e in services:
                    t[_x(v, e)] = -1.0
                c = _make_cut(t, GE, 0, "PD1", (side, l, v))
                if c:
                    out.append(c)
    return out


def gen_pd2(inst: Instance, g: TimeExpandedDigraph, flavor: Optional[str] = None) -> list[Cut]:
    agents = _agents(inst, g, "PD2")
    trips = _trip_arcs(g)
    out = []
    for l in range(inst.n_locations):
        rs = [r for r, q in enumerate(inst.requests) if q.pickup_loc == l]
        if rs:
            s_min = min(inst.requests[r].pickup_service for r in rs)
            instants = sorted({i for r in rs for i in inst.pickup_instants[r]})
            services = [e for r in rs for e in g.pickup_arcs[r]]
            moves = [e for e in trips if g.tail_loc(e) == l]
            for i in instants:
                for v in agents:
                    t = {_x(v, e): 1.0 for e in moves if g.tail_t(e) >= i + s_min}
                    for e in services:
                        if g.tail_t(e) >= i:
                            t[_x(v, e)] = -1.0
                    c = _make_cut(t, GE, 0, "PD2", ("P", l, i, v))
                    if c:
                        out.append(c)
        rs = [r for r, q in enumerate(inst.requests) if q.delivery_loc == l]
        if rs:
            instants = sorted({i for r in rs for i in inst.delivery_instants[r]})
            services = [e for r in rs for e in g.delivery_arcs[r]]
            moves = [e for e in trips if g.head_loc(e) == l]
            for i in instants:
                for v in agents:
                    t = {_x(v, e): 1.0 for e in moves if g.head_t(e) <= i}
                    for e in services:
                        if g.tail_t(e) <= i:
                            t[_x(v, e)] = -1.0
                    c = _make_cut(t, GE, 0, "PD2", ("D", l, i, v))
                    if c:
                        out.append(c)
    return out


# ---------------------------------------------------------------------------
# PD3


def gen_pd3(inst: Instance, g: TimeExpandedDigraph, k: int = 1, variant: str = FULL,
            flavor: Optional[str] = None) -> list[Cut]:
    if k < 1:
        raise CutError("PD3 needs k >= 1")
    if variant not in (FULL, VARIANT_A, VARIANT_B):
        raise CutError(f"unknown PD3 variant {variant!r}")
    I = inst.horizon.instants_per_day
    if g.flavor == LTR:
        subsets = [(-1,)]
    else:
        _agents(inst, g, "PD3")
        subsets = [s for size in range(1, min(k, inst.n_trucks) + 1)
                   for s in combinations(range(inst.n_trucks), size)]
    family = f"PD3-V{k}-{variant}"
    trips = _trip_arcs(g)
    out = []
    for r, req in enumerate(inst.requests):
        travel = _travel(inst, r)
        moves = [e for e in trips if g.tail_loc(e) == req.pickup_loc]
        picks = sorted({(g.tail_t(e), g.head_t(e)) for e in g.pickup_arcs[r]})
        drops = sorted({(g.tail_t(e), g.head_t(e)) for e in g.delivery_arcs[r]})
        for p_start, p_end in picks:
            open_p = p_start % I == req.pickup_window[0]
            for d_start, d_end in drops:
                if p_end + travel > d_start:
                    continue
                close_d = d_start % I == req.delivery_window[1]
                if variant == VARIANT_A and not (open_p and close_d):
                    continue
                if variant == VARIANT_B and not (open_p or close_d):
                    continue
                for sub in subsets:
                    t: dict[VarRef, float] = {}
                    for v in sub:
                        for e in g.pickup_arcs[r]:
                            if g.tail_t(e) >= p_start:
                                t[_x(v, e)] = t.get(_x(v, e), 0.0) + 1.0
                        for e in g.delivery_arcs[r]:
                            if g.head_t(e) <= d_end:
                                t[_x(v, e)] = t.get(_x(v, e), 0.0) + 1.0
                        for e in moves:
                            if g.tail_t(e) >= p_end and g.head_t(e) <= d_start:
                                t[_x(v, e)] = t.get(_x(v, e), 0.0) - 1.0
                    c = _make_cut(t, LE, 1, family, (r, p_start, d_start, sub))
                    if c:
                        out.append(c)
    return out


# ---------------------------------------------------------------------------
# minimum durations


def _next_at_or_after(instants: Sequence[int], t: float) -> float:
    k = bisect_left(instants, t)
    return instants[k] if k < len(instants) else INF


def _run(inst: Instance, order: Sequence[int], loc: int, t: float, mode: str,
         preloaded: bool = False) -> float:
    """Earliest completion of serving ``order`` one request at a time.

    With ``preloaded`` the first request is already aboard and the truck
    stands at its delivery location.
    """
    sp_ = inst.shortest_truck_time
    last_pick = t
    for n, r in enumerate(order):
        req = inst.requests[r]
        if not (preloaded and n == 0):
            t += sp_[loc][req.pickup_loc]
            p = _next_at_or_after(inst.pickup_instants[r], t)
            if p == INF:
                return INF
            t = p + req.pickup_service
            last_pick = t
            loc = req.pickup_loc
        t += sp_[loc][req.delivery_loc]
        d = _next_at_or_after(inst.delivery_instants[r], t)
        if d == INF:
            return INF
        t = d + req.delivery_service
        loc = req.delivery_loc
    return last_pick if mode == PICKUP_FROM_START else t


def min_duration(inst: Instance, requests: Sequence[int], mode: str, anchor: int) -> float:
    """Shortest time for one truck to serve ``requests`` in some order.

    ``anchor`` is a truck index for the two from-start modes (the truck leaves
    its start location at instant 0 and the result is the completion instant
    of the last delivery, or of the last pickup in a sequence whose deliveries
    also fit in the horizon). For ``deliver-from-instant``
    it is an instant ``i``; the truck needs no initial trip and may already
    carry the first request, and the result is measured from ``i``. Waiting is
    free and capacity is one, so the earliest timing of each request order is
    optimal. Returns ``inf`` when some order cannot be completed at all.
    """
    rs = tuple(requests)
    if not 1 <= len(rs) <= MAX_SEQUENCE:
        raise CutError(f"request set size {len(rs)} outside 1..{MAX_SEQUENCE}")
    if mode not in MODES:
        raise CutError(f"unknown duration mode {mode!r}")
    best = INF
    if mode == DELIVER_FROM_INSTANT:
        i = anchor
        for order in permutations(rs):
            first = inst.requests[order[0]]
            best = min(best,
                       _run(inst, order, first.pickup_loc, i, mode),
                       _run(inst, order, first.delivery_loc, i, mode, preloaded=True))
        return best - i if best < INF else INF
    loc = inst.truck_starts[anchor]
    for order in permutations(rs):
        best = min(best, _run(inst, order, loc, 0, mode))
    return best


class DurationCache:
    def __init__(self, inst: Instance):
        self.inst = inst
        self._memo: dict[tuple, float] = {}

    def __call__(self, requests: Sequence[int], mode: str, anchor: int) -> float:
        key = (tuple(sorted(requests)), mode, anchor)
        if key not in self._memo:
            self._memo[key] = min_duration(self.inst, key[0], mode, anchor)
        return self._memo[key]


# ---------------------------------------------------------------------------
# SEC


def _subsets(n: int, kmax: int):
    for size in range(2, min(kmax, n) + 1):
        yield from combinations(range(n), size)


def gen_sec1(inst: Instance, g: TimeExpandedDigraph, kmax: int = 2,
             cache: Optional[DurationCache] = None) -> list[Cut]:
    if kmax < 2:
        raise CutError("SEC needs kmax >= 2")
    agents = _agents(inst, g, "SEC1")
    cache = cache or DurationCache(inst)
    out = []
    for sub in _subsets(len(inst.requests), kmax):
        for v in agents:
            truck = 0 if v < 0 else v
            for mode, arcs_of in ((DELIVER_FROM_START, g.delivery_arcs),
                                  (PICKUP_FROM_START, g.pickup_arcs)):
                dur = cache(sub, mode, truck)
                if dur == INF:
                    continue
                per_r = [[e for e in arcs_of[r] if g.head_t(e) < dur] for r in sub]
                if any(not arcs for arcs in per_r):
                    continue
                t = {_x(v, e): 1.0 for arcs in per_r for e in arcs}
                c = _make_cut(t, LE, len(sub) - 1, f"SEC1-R{kmax}", (sub, v, mode))
                if c:
                    out.append(c)
    return out


def gen_sec2(inst: Instance, g: TimeExpandedDigraph, kmax: int = 2,
             cache: Optional[DurationCache] = None) -> list[Cut]:
    if kmax < 2:
        raise CutError("SEC needs kmax >= 2")
    agents = _agents(inst, g, "SEC2")
    cache = cache or DurationCache(inst)
    out = []
    last = inst.horizon.total_instants
    for sub in _subsets(len(inst.requests), kmax):
        seen: set = set()
        for i in range(last + 1):
            dur = cache(sub, DELIVER_FROM_INSTANT, i)
            if dur == INF:
                continue
            per_r = [tuple(e for e in g.delivery_arcs[r] if g.tail_t(e) >= i and g.head_t(e) < i + dur)
                     for r in sub]
            if any(not arcs for arcs in per_r) or tuple(per_r) in seen:
                continue
            seen.add(tuple(per_r))
            for v in agents:
                t = {_x(v, e): 1.0 for arcs in per_r for e in arcs}
                c = _make_cut(t, LE, len(sub) - 1, f"SEC2-R{kmax}", (sub, v, i))
                if c:
                    out.append(c)
    return out


# ---------------------------------------------------------------------------
# family registry and separation


def generate(family: str, inst: Instance, g: TimeExpandedDigraph, k: int = 2,
             variant: str = FULL, cache: Optional[DurationCache] = None) -> list[Cut]:
    """Generate one family by name: PREC, PD1, PD2, PD3, SEC1 or SEC2."""
    if family == "PREC":
        return gen_prec(inst, g)
    if family == "PD1":
        return gen_pd1(inst, g)
    if family == "PD2":
        return gen_pd2(inst, g)
    if family == "PD3":
        return gen_pd3(inst, g, k, variant)
    if family == "SEC1":
        return gen_sec1(inst, g, k, cache)
    if family == "SEC2":
        return gen_sec2(inst, g, k, cache)
    raise CutError(f"unknown cut family {family!r}")


def separate(pool: CutPool, model: MilpModel, x: np.ndarray, tolerance: float = 1e-6,
             cap: int = 50, skip: Optional[set] = None) -> list[Cut]:
    """Cuts of ``pool`` violated at ``x`` by more than ``tolerance``, most violated first."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_vars,):
        raise CutError(f"point has shape {x.shape}, model has {model.n_vars} columns")
    scored = []
    for k, c in enumerate(pool.cuts):
        if skip and c.key() in skip:
            continue
        lhs = sum(coef * x[model.index[ref]] for ref, coef in c.terms)
        viol = c.violation(lhs)
        if viol > tolerance:
            scored.append((-viol, k, c))
    scored.sort(key=lambda s: (s[0], s[1]))
    return [c for _, _, c in scored[:cap]]


def parse_family(spec: str) -> tuple[str, int, str]:
    """Split a family name such as ``PD3-V2-A`` or ``sec1-r3`` into (family, k, variant)."""
    parts = spec.strip().upper().split("-")
    family, variant = parts[0], FULL
    k = 1 if family == "PD3" else 2
    if family not in ("PREC", "PD1", "PD2", "PD3", "SEC1", "SEC2"):
        raise CutError(f"unknown cut family {spec!r}")
    for p in parts[1:]:
        if family == "PD3" and p in ("A", "B", "FULL"):
            variant = FULL if p == "FULL" else p
        elif family == "PD3" and p.startswith("V") and p[1:].isdigit():
            k = int(p[1:])
        elif family.startswith("SEC") and p.startswith("R") and p[1:].isdigit():
            k = int(p[1:])
        else:
            raise CutError(f"bad qualifier {p!r} in cut family {spec!r}")
    return family, k, variant


def build_pool(inst: Instance, g: TimeExpandedDigraph, specs: Sequence[str],
               cache: Optional[DurationCache] = None) -> CutPool:
    """Pool holding every cut of the named families."""
    pool = CutPool()
    cache = cache or DurationCache(inst)
    for spec in specs:
        family, k, variant = parse_family(spec)
        pool.extend(generate(family, inst, g, k, variant, cache))
    return pool
