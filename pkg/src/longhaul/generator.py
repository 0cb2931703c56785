"""Seeded instance generator and a greedy warm-start heuristic."""

from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass
from typing import Optional

from .model_core import (DELIVERY, PICKUP, Horizon, Instance, InstanceError, Request, service_start_instants,
                         validate_instance)
from .routes import Plan, build_route, check_plan, resting_route
from .timegraphs import LT, build_graphs


@dataclass(frozen=True)
class GenSpec:
    seed: int = 0
    n_locations: int = 3
    n_requests: int = 3
    days: int = 2
    instants_per_day: int = 8
    n_trucks: int = 1
    n_drivers: int = 2
    box_km: float = 300.0
    speed_kmh: float = 90.0
    taxi_factor: int = 2
    max_window: Optional[int] = None  # widest window, in instants; default I/2
    penalty_range: tuple[int, int] = (1, 3)
    service: int = 1

    @property
    def hours_per_instant(self) -> float:
        return 24.0 / self.instants_per_day

    def check(self) -> None:
        if self.n_locations < 2:
            raise InstanceError("a generated instance needs at least two locations")
        for name in ("n_requests", "n_trucks", "n_drivers"):
            if getattr(self, name) < 0:
                raise InstanceError(f"{name} must be non-negative")
        if self.days < 1 or self.instants_per_day < 2 or self.instants_per_day % 2:
            raise InstanceError("H must be positive and I even and at least 2")
        if self.speed_kmh <= 0 or self.box_km <= 0:
            raise InstanceError("speed and box size must be positive")


def travel_instants(distance_km: float, speed_kmh: float, hours_per_instant: float) -> int:
    """Whole instants needed to cover a distance, never less than one."""
    return max(1, math.ceil(distance_km / speed_kmh / hours_per_instant - 1e-9))


def _reachable(r: Request, horizon: Horizon, travel: int) -> bool:
    """Some delivery start follows the earliest pickup plus the direct trip."""
    picks = service_start_instants(r, PICKUP, horizon)
    drops = service_start_instants(r, DELIVERY, horizon)
    return bool(picks and drops) and drops[-1] >= picks[0] + r.pickup_service + travel


def generate(spec: GenSpec) -> Instance:
    """Random instance drawn from ``spec``; the same spec always gives the same instance.

    Locations are uniform points in a square; windows start uniformly and are
    up to ``max_window`` instants wide (wrapping past midnight allowed);
    delivery days are uniform between the pickup day and the last day.
    A request whose delivery cannot follow its pickup is redrawn.
    """
    spec.check()
    rng = random.Random(spec.seed)
    I, H, n = spec.instants_per_day, spec.days, spec.n_locations
    pts = [(rng.uniform(0, spec.box_km), rng.uniform(0, spec.box_km)) for _ in range(n)]
    length = [[0 if a == b else travel_instants(math.dist(pts[a], pts[b]), spec.speed_kmh,
                                                spec.hours_per_instant)
               for b in range(n)] for a in range(n)]
    taxi_cost = [[spec.taxi_factor * length[a][b] for b in range(n)] for a in range(n)]
    width = spec.max_window if spec.max_window is not None else I // 2
    requests = []
    horizon = Horizon(H, I)
    for k in range(spec.n_requests):
        for _ in range(100):
            p, d = rng.sample(range(n), 2)
            pday = rng.randrange(H)
            dday = rng.randint(pday, H - 1)
            pa = rng.randrange(I)
            pw = (pa, (pa + rng.randint(0, width)) % I)
            da = rng.randrange(I)
            dw = (da, (da + rng.randint(0, width)) % I)
            pen = rng.randint(*spec.penalty_range)
            req = Request(f"r{k + 1}", p, d, pday, dday, pw, dw, spec.service, spec.service, pen)
            if _reachable(req, horizon, length[p][d]):
                break
        requests.append(req)
    as_tuple = lambda m: tuple(tuple(row) for row in m)
    inst = Instance(
        horizon=horizon,
        locations=tuple(f"l{k + 1}" for k in range(n)),
        truck_starts=tuple(rng.randrange(n) for _ in range(spec.n_trucks)),
        driver_starts=tuple(rng.randrange(n) for _ in range(spec.n_drivers)),
        requests=tuple(requests),
        truck_time=as_tuple(length),
        truck_cost=as_tuple(length),
        taxi_time=as_tuple(length),
        taxi_cost=as_tuple(taxi_cost),
        name=f"gen-{spec.seed}",
        notes={"generator": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(spec).items()},
               "distributions": "uniform locations, window starts, widths, days and penalties"},
    )
    return inst


PRESETS: dict[str, dict] = {
    "desk": dict(n_locations=3, n_requests=3, days=2, instants_per_day=24, n_trucks=1, n_drivers=2,
                 box_km=300.0),
    "S1": dict(n_locations=3, n_requests=(4, 5, 6), days=7, instants_per_day=24, n_trucks=1, n_drivers=2),
    "S2": dict(n_locations=3, n_requests=(7, 8, 9), days=7, instants_per_day=24, n_trucks=1, n_drivers=2),
    "S3": dict(n_locations=3, n_requests=(8, 9, 10), days=7, instants_per_day=24, n_trucks=2, n_drivers=4),
    "S4": dict(n_locations=6, n_requests=(4, 5, 6), days=7, instants_per_day=24, n_trucks=1, n_drivers=2),
    "S5": dict(n_locations=3, n_requests=(40, 42), days=(40, 42), instants_per_day=24, n_trucks=1, n_drivers=3),
}

TINY_SHAPES = [(8, 1), (4, 2), (6, 2), (8, 2)]

# Seeds of tiny instances that are feasible and solve exactly in well under a second.
TINY_CORPUS = (5, 14, 20, 43, 54, 55, 86, 87, 90, 92, 97, 106,
               112, 117, 127, 131, 136, 148, 153, 156, 160, 161, 182, 188)


def preset_spec(name: str, seed: int, **overrides) -> GenSpec:
    """Spec for a named preset; tuple-valued fields are drawn by seed."""
    if name == "tiny":
        return tiny_spec(seed, **overrides)
    try:
        fields = dict(PRESETS[name])
    except KeyError:
        raise InstanceError(f"unknown preset {name!r}") from None
    rng = random.Random(seed * 7919 + 17)
    for k, v in fields.items():
        if isinstance(v, tuple):
            fields[k] = rng.choice(v)
    fields.setdefault("box_km", 600.0)
    fields.update(overrides)
    return GenSpec(seed=seed, **fields)


def tiny_spec(seed: int, **overrides) -> GenSpec:
    """Oracle-sized shapes: |L| <= 3, H*I <= 16, |V| <= 2, |D| <= 2, |R| <= 3."""
    rng = random.Random(seed * 104729 + 3)
    I, H = rng.choice(TINY_SHAPES)
    trucks = rng.randint(1, 2)
    fields = dict(n_locations=rng.choice((2, 3)), n_requests=rng.randint(1, 3), days=H,
                  instants_per_day=I, n_trucks=trucks, n_drivers=rng.randint(trucks, 2),
                  box_km=100.0 * 24 / I, max_window=I - 2)
    fields.update(overrides)
    return GenSpec(seed=seed, **fields)


def tiny_corpus() -> list[Instance]:
    return [generate(tiny_spec(s)) for s in TINY_CORPUS]


# ---------------------------------------------------------------------------
# greedy warm start


class _Crew:
    """A truck and the driver who mirrors it, scheduled step by step."""

    def __init__(self, inst: Instance, loc: int):
        self.inst = inst
        h = inst.horizon
        self.I, self.H, self.T = h.instants_per_day, h.days, h.total_instants
        self.loc = loc
        self.t = 0
        self.work: set[int] = set()
        self.steps: list[tuple] = []

    def clone(self) -> "_Crew":
        c = _Crew.__new__(_Crew)
        c.__dict__.update(self.__dict__)
        c.work = set(self.work)
        c.steps = list(self.steps)
        return c

    def _fits(self, start: int, length: int) -> bool:
        if start + length > self.T:
            return False
        block = range(start, start + length)
        if self.H >= 7 and any((u // self.I) % 7 == 6 for u in block):
            return False
        work = self.work | set(block)
        last = self.I * (self.H - 1)
        for i in range(max(0, start - self.I + 1), min(start + length - 1, last) + 1):
            if sum(1 for u in range(i, i + self.I) if u in work) > self.I // 2:
                return False
        return True

    def _place(self, length: int, allowed=None) -> Optional[int]:
        """Earliest start >= now for a work block (optionally restricted to ``allowed``)."""
        for start in range(self.t, self.T - length + 1):
            if allowed is not None and start not in allowed:
                continue
            if self._fits(start, length):
                return start
        return None

    def _do(self, start: int, length: int, step: tuple, dest: Optional[int] = None) -> None:
        if start > self.t:
            self.steps.append(("wait", start))
        self.steps.append(step)
        self.work.update(range(start, start + length))
        self.t = start + length
        if dest is not None:
            self.loc = dest

    def serve(self, r: int) -> bool:
        inst = self.inst
        req = inst.requests[r]
        for target, side, instants in ((req.pickup_loc, "pickup", inst.pickup_instants[r]),
                                       (req.delivery_loc, "delivery", inst.delivery_instants[r])):
            if self.loc != target:
                dt = inst.truck_time[self.loc][target]
                start = self._place(dt)
                if start is None:
                    return False
                self._do(start, dt, ("trip", target), target)
            s = req.pickup_service if side == "pickup" else req.delivery_service
            start = self._place(s, set(instants))
            if start is None:
                return False
            self._do(start, s, (side, r))
        return True


def greedy_warm_start(inst: Instance) -> Optional[Plan]:
    """Sequential-insertion plan in the LT flavor, or None if insertion fails.

    Each truck is paired with a driver starting at the same location; the
    driver mirrors the truck and rests whenever it waits. Requests are taken
    by delivery day and inserted into the crew that finishes them earliest.
    """
    if validate_instance(inst):
        return None
    graphs = build_graphs(inst, LT)
    unused = list(range(inst.n_drivers))
    pairs: list[tuple[int, int]] = []
    for v, l in enumerate(inst.truck_starts):
        for d in unused:
            if inst.driver_starts[d] == l:
                pairs.append((v, d))
                unused.remove(d)
                break
    crews = {v: _Crew(inst, inst.truck_starts[v]) for v, _ in pairs}
    order = sorted(range(len(inst.requests)),
                   key=lambda r: (inst.requests[r].delivery_day, inst.requests[r].pickup_day, r))
    for r in order:
        best = None
        for v, _ in pairs:
            trial = crews[v].clone()
            if trial.serve(r) and (best is None or trial.t < best[1].t):
                best = (v, trial)
        if best is None:
            return None
        crews[best[0]] = best[1]
    trucks: list[list[int]] = [[] for _ in range(inst.n_trucks)]
    drivers = [resting_route(graphs.driver, inst, l) for l in inst.driver_starts]
    for v, d in pairs:
        steps = crews[v].steps
        if steps:
            trucks[v] = build_route(graphs.truck, inst, inst.truck_starts[v], steps)
            drivers[d] = build_route(graphs.driver, inst, inst.driver_starts[d], steps)
    plan = Plan(LT, trucks, drivers).with_day_off(graphs.driver)
    if check_plan(plan, inst, graphs):
        return None
    return plan


