"""Instance data model: horizon arithmetic, requests, time windows, penalties."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

PICKUP = "pickup"
DELIVERY = "delivery"


class InstanceError(ValueError):
    """Raised for malformed instances or out-of-range queries."""


@dataclass(frozen=True)
class Horizon:
    days: int  # H
    instants_per_day: int  # I

    @property
    def total_instants(self) -> int:
        """Index of the last instant, I*H (the instant set is 0..I*H)."""
        return self.days * self.instants_per_day

    def day(self, i: int) -> int:
        self._check(i)
        return i // self.instants_per_day

    def time(self, i: int) -> int:
        self._check(i)
        return i % self.instants_per_day

    def _check(self, i: int) -> None:
        if not 0 <= i <= self.total_instants:
            raise InstanceError(f"instant {i} outside 0..{self.total_instants}")


@dataclass(frozen=True)
class Request:
    id: str
    pickup_loc: int
    delivery_loc: int
    pickup_day: int
    delivery_day: int
    pickup_window: tuple[int, int]
    delivery_window: tuple[int, int]
    pickup_service: int = 1
    delivery_service: int = 1
    penalty: int = 0

    def location(self, side: str) -> int:
        return self.pickup_loc if side == PICKUP else self.delivery_loc

    def service(self, side: str) -> int:
        return self.pickup_service if side == PICKUP else self.delivery_service

    def window(self, side: str) -> tuple[int, int]:
        return self.pickup_window if side == PICKUP else self.delivery_window

    def start_day(self, side: str) -> int:
        return self.pickup_day if side == PICKUP else self.delivery_day


def window_times(a: int, b: int, instants_per_day: int) -> frozenset[int]:
    """Times of day at which a window [a, b] is open; a > b wraps past midnight."""
    if a <= b:
        return frozenset(range(a, b + 1))
    return frozenset(range(a, instants_per_day)) | frozenset(range(0, b + 1))


def day(i: int, horizon: Horizon) -> int:
    return horizon.day(i)


def time(i: int, horizon: Horizon) -> int:
    return horizon.time(i)


def service_start_instants(r: Request, side: str, horizon: Horizon) -> list[int]:
    """Instants at which the pickup or delivery of ``r`` may begin.

    A window repeats every day from the request's start day onwards. For a
    wrapping window the early part is open on the start day too and the late
    part on the last day, so the rule reduces to ``day >= start day`` and
    ``time in window``. The service must finish by the end of the horizon.
    """
    a, b = r.window(side)
    s = r.service(side)
    times = window_times(a, b, horizon.instants_per_day)
    first = r.start_day(side) * horizon.instants_per_day
    last = horizon.total_instants - s
    return [i for i in range(first, last + 1) if i % horizon.instants_per_day in times]


def delay_penalty(r: Request, i: int, horizon: Horizon) -> int:
    """Penalty of starting the delivery of ``r`` at instant ``i``."""
    lateness = horizon.day(i) - r.delivery_day
    if lateness < 0 or i + r.delivery_service > horizon.total_instants:
        raise InstanceError(f"instant {i} is not a delivery start instant of {r.id}")
    if (i % horizon.instants_per_day) not in window_times(*r.delivery_window, horizon.instants_per_day):
        raise InstanceError(f"instant {i} is outside the delivery window of {r.id}")
    return r.penalty * lateness


@dataclass(frozen=True)
class Instance:
    horizon: Horizon
    locations: tuple[str, ...]
    truck_starts: tuple[int, ...]
    driver_starts: tuple[int, ...]
    requests: tuple[Request, ...]
    truck_time: tuple[tuple[int, ...], ...]
    truck_cost: tuple[tuple[int, ...], ...]
    taxi_time: tuple[tuple[int, ...], ...]
    taxi_cost: tuple[tuple[int, ...], ...]
    name: str = ""
    notes: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def n_locations(self) -> int:
        return len(self.locations)

    @property
    def n_trucks(self) -> int:
        return len(self.truck_starts)

    @property
    def n_drivers(self) -> int:
        return len(self.driver_starts)

    @property
    def truck_start_set(self) -> list[int]:
        return sorted(set(self.truck_starts))

    @property
    def driver_start_set(self) -> list[int]:
        return sorted(set(self.driver_starts))

    @cached_property
    def pickup_instants(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(service_start_instants(r, PICKUP, self.horizon)) for r in self.requests)

    @cached_property
    def delivery_instants(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(service_start_instants(r, DELIVERY, self.horizon)) for r in self.requests)

    @cached_property
    def shortest_truck_time(self) -> tuple[tuple[int, ...], ...]:
        """All-pairs shortest truck travel times (Floyd-Warshall over len^V)."""
        n = self.n_locations
        dist = [list(row) for row in self.truck_time]
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    if dist[i][k] + dist[k][j] < dist[i][j]:
                        dist[i][j] = dist[i][k] + dist[k][j]
        return tuple(tuple(row) for row in dist)


def validate_instance(inst: Instance) -> list[str]:
    """Return the list of violated invariants; an empty list means valid."""
    out: list[str] = []
    h = inst.horizon
    if h.days < 1:
        out.append("H must be at least 1")
    if h.instants_per_day < 2:
        out.append("I must be at least 2")
    if h.instants_per_day % 2:
        out.append("I must be even")
    n = inst.n_locations
    if n < 1:
        out.append("at least one location is required")
    for name, starts in (("truck", inst.truck_starts), ("driver", inst.driver_starts)):
        for k, l in enumerate(starts):
            if not 0 <= l < n:
                out.append(f"{name} {k} starts at unknown location {l}")
    for label, mat in (("len^V", inst.truck_time), ("cost^V", inst.truck_cost),
                       ("len^T", inst.taxi_time), ("cost^T", inst.taxi_cost)):
        if len(mat) != n or any(len(row) != n for row in mat):
            out.append(f"{label} must be a {n}x{n} matrix")
            continue
        for a in range(n):
            for b in range(n):
                v = mat[a][b]
                if a == b and label.startswith("len") and v != 0:
                    out.append(f"{label}[{a}][{a}] must be 0")
                if a != b and label.startswith("len") and v < 1:
                    out.append(f"{label}[{a}][{b}] must be at least 1")
                if v < 0:
                    out.append(f"{label}[{a}][{b}] must be non-negative")
    ids = [r.id for r in inst.requests]
    if len(set(ids)) != len(ids):
        out.append("request ids must be unique")
    I = h.instants_per_day
    for r in inst.requests:
        if not (0 <= r.pickup_loc < n and 0 <= r.delivery_loc < n):
            out.append(f"request {r.id} uses an unknown location")
        if r.pickup_loc == r.delivery_loc:
            out.append(f"request {r.id} has identical pickup and delivery locations")
        for side in (PICKUP, DELIVERY):
            a, b = r.window(side)
            if not (0 <= a < I and 0 <= b < I):
                out.append(f"request {r.id} {side} window outside 0..{I - 1}")
            if not 0 <= r.start_day(side) < max(h.days, 1):
                out.append(f"request {r.id} {side} day outside 0..{h.days - 1}")
            if r.service(side) < 1:
                out.append(f"request {r.id} {side} service time must be at least 1")
        if r.penalty < 0:
            out.append(f"request {r.id} has a negative penalty")
    if out:
        return out
    for r in inst.requests:
        for side in (PICKUP, DELIVERY):
            if not service_start_instants(r, side, h):
                out.append(f"request {r.id} has no feasible {side} start instant")
    return out


def example_instance() -> Instance:
    """The two-location, two-request toy instance (one day of eight instants).

    Truck costs equal travel times and taxi costs are twice that, as in the
    generator's convention.
    """
    one = ((0, 1), (1, 0))
    two = ((0, 2), (2, 0))
    return Instance(
        horizon=Horizon(days=1, instants_per_day=8),
        locations=("l1", "l2"),
        truck_starts=(0, 1),
        driver_starts=(0, 1),
        requests=(
            Request("r1", 0, 1, 0, 0, (0, 2), (6, 2), 1, 1, 0),
            Request("r2", 1, 0, 0, 0, (3, 5), (3, 5), 1, 1, 0),
        ),
        truck_time=one,
        truck_cost=one,
        taxi_time=one,
        taxi_cost=two,
        name="example1",
    )
