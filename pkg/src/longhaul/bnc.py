"""LP-based branch-and-cut over a :class:`MilpModel`."""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .cuts import CutPool, separate
from .formulations import MilpModel
from .lp_engine import INFEASIBLE, OPTIMAL, HighsSession, StandardLp, solve_lp

log = logging.getLogger(__name__)

STATUS_OPTIMAL = "Optimal"
STATUS_FEASIBLE = "Feasible"
STATUS_INFEASIBLE = "Infeasible"
STATUS_LIMIT = "LimitReached"


@dataclass
class SolverConfig:
    time_limit: Optional[float] = None
    node_limit: Optional[int] = None
    abs_gap: float = 0.0
    rel_gap: float = 1e-6
    int_tol: float = 1e-6
    root_cut_rounds: int = 20
    cuts_per_round: int = 50
    cut_tol: float = 1e-6
    node_cuts: bool = False
    families: Optional[tuple[str, ...]] = None  # None keeps every family in the pool
    lp_backend: str = "highs"
    log_every: int = 100
    seed: int = 0
    on_log: Optional[Callable[[str], None]] = None

    def __post_init__(self):
        for name in ("time_limit", "node_limit"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class SolveResult:
    status: str
    x: Optional[np.ndarray]
    objective: Optional[float]
    bound: float
    nodes: int
    cuts_added: dict[str, int]
    root_lp: float
    root_bound: float
    wall_time: float
    log: list[str] = field(default_factory=list)

    @property
    def gap(self) -> float:
        if self.objective is None:
            return math.inf
        return (self.objective - self.bound) / max(1.0, abs(self.objective))


@dataclass(order=True)
class _Node:
    bound: float
    id: int
    lb: np.ndarray = field(compare=False)
    ub: np.ndarray = field(compare=False)
    depth: int = field(compare=False, default=0)


class _Search:
    def __init__(self, model: MilpModel, pool: Optional[CutPool], config: SolverConfig):
        self.model = model
        self.cfg = config
        self.pool = pool
        if pool is not None and config.families is not None:
            keep = tuple(config.families)
            self.pool = CutPool()
            self.pool.extend(c for c in pool if c.family.split("-")[0] in keep)
        self.lp: StandardLp = model.to_lp()
        self.session = HighsSession(self.lp) if config.lp_backend == "highs" else None
        self.added: set = set()
        self.cuts_added: dict[str, int] = {}
        self.integral_obj = bool(np.all(model.obj == np.round(model.obj)) and np.all(model.integer))
        self.inc_x: Optional[np.ndarray] = None
        self.inc_obj = math.inf
        self.nodes = 0
        self.start = time.perf_counter()
        self.lines: list[str] = []

    # -- utilities -----------------------------------------------------------
    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def out_of_time(self) -> bool:
        return self.cfg.time_limit is not None and self.elapsed() >= self.cfg.time_limit

    def out_of_nodes(self) -> bool:
        return self.cfg.node_limit is not None and self.nodes >= self.cfg.node_limit

    def effective(self, bound: float) -> float:
        """Node bound tightened by integrality of the objective."""
        return math.ceil(bound - 1e-6) if self.integral_obj else bound

    def closed(self, bound: float) -> bool:
        if self.inc_x is None:
            return False
        slack = self.inc_obj - self.effective(bound)
        return slack <= self.cfg.abs_gap + 1e-9 or slack <= self.cfg.rel_gap * max(1.0, abs(self.inc_obj))

    def emit(self, bound: float) -> None:
        inc = "-" if self.inc_x is None else f"{self.inc_obj:.10g}"
        gap = "-" if self.inc_x is None else f"{(self.inc_obj - bound) / max(1.0, abs(self.inc_obj)):.6g}"
        line = f"node={self.nodes} bound={bound:.10g} inc={inc} gap={gap} cuts={sum(self.cuts_added.values())}"
        self.lines.append(line)
        if self.cfg.on_log:
            self.cfg.on_log(line)
        log.debug(line)

    def relax(self, lb: np.ndarray, ub: np.ndarray):
        if self.session is not None:
            self.session.set_bounds(lb, ub)
            return self.session.solve()
        return solve_lp(self.lp.with_bounds(lb, ub), backend=self.cfg.lp_backend)

    def try_incumbent(self, x: np.ndarray) -> bool:
        xr = x.copy()
        ints = self.model.integer
        xr[ints] = np.round(xr[ints])
        if self.model.violations(xr, tol=1e-6):
            return False
        obj = self.model.objective(xr)
        if obj < self.inc_obj - 1e-9:
            self.inc_obj, self.inc_x = obj, xr
            return True
        return False

    def fractional(self, x: np.ndarray) -> Optional[int]:
        frac = np.abs(x - np.round(x))
        frac[~self.model.integer] = 0.0
        if frac.max(initial=0.0) <= self.cfg.int_tol:
            return None
        return int(np.argmax(frac))  # first maximum wins ties

    def cut_round(self, x: np.ndarray) -> int:
        if self.pool is None or len(self.pool) == 0:
            return 0
        found = separate(self.pool, self.model, x, self.cfg.cut_tol, self.cfg.cuts_per_round, self.added)
        if not found:
            return 0
        A, sense, rhs = self.pool.rows(self.model, found)
        self.lp = self.lp.with_rows(A, sense, rhs)
        if self.session is not None:
            self.session.add_rows(A, sense, rhs)
        for c in found:
            self.added.add(c.key())
            self.cuts_added[c.family] = self.cuts_added.get(c.family, 0) + 1
        return len(found)

    def cut_loop(self, lb, ub, out, rounds: int):
        for _ in range(rounds):
            if out.status != OPTIMAL or self.out_of_time():
                break
            if not self.cut_round(out.x):
                break
            out = self.relax(lb, ub)
        return out


@dataclass
class RootResult:
    status: str
    root_lp: float
    root_bound: float
    cuts_added: dict[str, int]
    rounds: int
    wall_time: float
    x: Optional[np.ndarray] = None


def solve_root(model: MilpModel, pool: Optional[CutPool] = None,
               config: Optional[SolverConfig] = None) -> RootResult:
    """Root relaxation followed by the cut loop, without branching."""
    cfg = config or SolverConfig()
    s = _Search(model, pool, cfg)
    out = s.relax(model.lb, model.ub)
    if out.status == INFEASIBLE:
        return RootResult(STATUS_INFEASIBLE, math.inf, math.inf, {}, 0, s.elapsed())
    if out.status != OPTIMAL:
        raise RuntimeError(f"root relaxation ended with status {out.status}")
    root_lp = out.objective
    rounds = 0
    while rounds < cfg.root_cut_rounds and not s.out_of_time():
        if not s.cut_round(out.x):
            break
        rounds += 1
        out = s.relax(model.lb, model.ub)
        if out.status == INFEASIBLE:
            return RootResult(STATUS_INFEASIBLE, root_lp, math.inf, dict(s.cuts_added), rounds, s.elapsed())
        if out.status != OPTIMAL:
            raise RuntimeError(f"relaxation ended with status {out.status}")
    return RootResult(STATUS_OPTIMAL, root_lp, out.objective, dict(s.cuts_added), rounds, s.elapsed(), out.x)


def solve_milp(model: MilpModel, pool: Optional[CutPool] = None, warm_start: Optional[np.ndarray] = None,
               config: Optional[SolverConfig] = None) -> SolveResult:
    cfg = config or SolverConfig()
    s = _Search(model, pool, cfg)
    if warm_start is not None:
        ws = np.asarray(warm_start, dtype=float)
        bad = model.violations(ws)
        if bad:
            raise ValueError(f"warm start violates {bad[0]}")
        s.inc_x, s.inc_obj = ws.copy(), model.objective(ws)

    def result(status: str, bound: float, root_lp: float, root_bound: float) -> SolveResult:
        if s.inc_x is not None:
            bound = min(bound, s.inc_obj)
        s.emit(bound)
        obj = None if s.inc_x is None else s.inc_obj
        return SolveResult(status, s.inc_x, obj, bound, s.nodes, dict(s.cuts_added), root_lp,
                           root_bound, s.elapsed(), s.lines)

    lb0, ub0 = model.lb.copy(), model.ub.copy()
    out = s.relax(lb0, ub0)
    if out.status == INFEASIBLE:
        return result(STATUS_INFEASIBLE, math.inf, math.inf, math.inf)
    if out.status != OPTIMAL:
        raise RuntimeError(f"root relaxation ended with status {out.status}")
    root_lp = out.objective
    if s.out_of_nodes() or s.out_of_time():
        status = STATUS_FEASIBLE if s.inc_x is not None else STATUS_LIMIT
        return result(status, root_lp, root_lp, root_lp)
    out = s.cut_loop(lb0, ub0, out, cfg.root_cut_rounds)
    if out.status == INFEASIBLE:
        return result(STATUS_INFEASIBLE, math.inf, root_lp, math.inf)
    root_bound = out.objective
    s.emit(root_bound)

    heap: list[_Node] = []
    next_id = 0
    global_bound = root_bound
    dive: Optional[tuple[_Node, object]] = (_Node(root_bound, next_id, lb0, ub0), out)
    next_id += 1
    limit_hit = False
    while dive is not None or heap:
        if s.out_of_nodes() or s.out_of_time():
            limit_hit = True
            break
        if dive is not None:
            node, out = dive
            dive = None
        else:
            node = heapq.heappop(heap)
            if s.closed(node.bound):
                continue
            out = None
        if heap:
            global_bound = max(global_bound, min(node.bound, heap[0].bound))
        else:
            global_bound = max(global_bound, node.bound)
        if out is None:
            out = s.relax(node.lb, node.ub)
        s.nodes += 1
        if out.status == OPTIMAL and cfg.node_cuts and s.nodes > 1:
            out = s.cut_loop(node.lb, node.ub, out, 1)
        if out.status != OPTIMAL:
            continue
        if s.closed(out.objective):
            continue
        j = s.fractional(out.x)
        if j is None:
            if s.try_incumbent(out.x):
                s.emit(global_bound)
            continue
        if s.nodes % cfg.log_every == 0:
            s.emit(global_bound)
        value = out.x[j]
        down_ub = node.ub.copy()
        down_ub[j] = math.floor(value)
        up_lb = node.lb.copy()
        up_lb[j] = math.ceil(value)
        down = _Node(out.objective, next_id, node.lb, down_ub, node.depth + 1)
        up = _Node(out.objective, next_id + 1, up_lb, node.ub, node.depth + 1)
        next_id += 2
        heapq.heappush(heap, down)
        dive = (up, s.relax(up.lb, up.ub))
    if limit_hit:
        open_bounds = [n.bound for n in heap]
        if dive is not None:
            open_bounds.append(dive[0].bound)
        bound = max(global_bound, min(open_bounds)) if open_bounds else global_bound
        status = STATUS_FEASIBLE if s.inc_x is not None else STATUS_LIMIT
        return result(status, bound, root_lp, root_bound)
    if s.inc_x is None:
        return result(STATUS_INFEASIBLE, math.inf, root_lp, root_bound)
    return result(STATUS_OPTIMAL, s.inc_obj, root_lp, root_bound)
