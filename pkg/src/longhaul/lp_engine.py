"""LP relaxation solver.

Two backends solve the same :class:`StandardLp`:

* ``"highs"`` hands the problem to the HiGHS library (used by branch-and-cut,
  which keeps one :class:`HighsSession` alive across nodes);
* ``"simplex"`` is a dense bounded-variable revised primal simplex with a
  two-phase start, Dantzig pricing, and a switch to Bland's rule after a run
  of degenerate pivots. It also accepts a warm basis.

Rows are ``A x (<=|=|>=) rhs`` with ``lb <= x <= ub``; the objective is minimised.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import highspy
import numpy as np
import scipy.sparse as sp

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"
ITERATION_LIMIT = "IterationLimit"

LE, EQ, GE = -1, 0, 1

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
ZERO_TOL = 1e-11


@dataclass
class StandardLp:
    c: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.sense = np.asarray(self.sense, dtype=int)
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def with_bounds(self, lb: np.ndarray, ub: np.ndarray) -> "StandardLp":
        return StandardLp(self.c, self.A, self.sense, self.rhs, lb, ub, self.offset)

    def with_rows(self, A: sp.spmatrix, sense, rhs) -> "StandardLp":
        if A.shape[0] == 0:
            return self
        return StandardLp(self.c, sp.vstack([self.A, sp.csr_matrix(A)], format="csr"),
                          np.concatenate([self.sense, np.asarray(sense, dtype=int)]),
                          np.concatenate([self.rhs, np.asarray(rhs, dtype=float)]),
                          self.lb, self.ub, self.offset)

    def row_violation(self, x: np.ndarray) -> float:
        """Largest violation of a row or bound, relative to (1 + |rhs|)."""
        act = self.A @ x
        viol = np.zeros_like(act)
        le = self.sense == LE
        ge = self.sense == GE
        eq = self.sense == EQ
        viol[le] = np.maximum(act[le] - self.rhs[le], 0)
        viol[ge] = np.maximum(self.rhs[ge] - act[ge], 0)
        viol[eq] = np.abs(act[eq] - self.rhs[eq])
        scale = 1 + np.abs(self.rhs)
        worst = float(np.max(viol / scale)) if viol.size else 0.0
        bnd = max(float(np.max(self.lb - x, initial=0)), float(np.max(x - self.ub, initial=0)))
        return max(worst, bnd)


@dataclass
class LpOutcome:
    status: str
    x: Optional[np.ndarray] = None
    objective: float = float("nan")
    duals: Optional[np.ndarray] = None  # d objective / d rhs, one per row
    reduced_costs: Optional[np.ndarray] = None
    basis: Optional[tuple] = None
    iterations: int = 0
    dual_objective: float = float("nan")
    info: dict = field(default_factory=dict)


def solve_lp(lp: StandardLp, warm_basis: Optional[tuple] = None, backend: str = "highs",
             max_iter: int = 100_000, bland_after: int = 1000) -> LpOutcome:
    if backend == "highs":
        return _solve_highs(lp)
    if backend == "simplex":
        return BoundedSimplex(lp, bland_after=bland_after, max_iter=max_iter).solve(warm_basis)
    raise ValueError(f"unknown LP backend {backend!r}")


# ---------------------------------------------------------------------------
# HiGHS


def _row_bounds(sense: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo = np.where(sense == LE, -highspy.kHighsInf, rhs)
    hi = np.where(sense == GE, highspy.kHighsInf, rhs)
    return lo, hi


def _finite(a: np.ndarray) -> np.ndarray:
    return np.where(np.isfinite(a), a, np.where(a > 0, highspy.kHighsInf, -highspy.kHighsInf))


class HighsSession:
    """A HiGHS instance kept alive across re-solves.

    Bound changes and appended rows keep the previous basis, so the dual
    simplex restarts warm; this is what branch-and-cut uses per node.
    """

    def __init__(self, lp: StandardLp):
        self.lp = lp
        self.h = highspy.Highs()
        self.h.setOptionValue("output_flag", False)
        self.h.setOptionValue("random_seed", 0)
        m, n = lp.shape
        model = highspy.HighsLp()
        model.num_col_ = n
        model.num_row_ = m
        model.col_cost_ = lp.c
        model.col_lower_ = _finite(lp.lb)
        model.col_upper_ = _finite(lp.ub)
        lo, hi = _row_bounds(lp.sense, lp.rhs)
        model.row_lower_ = lo
        model.row_upper_ = hi
        A = sp.csc_matrix(lp.A)
        model.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        model.a_matrix_.start_ = A.indptr
        model.a_matrix_.index_ = A.indices
        model.a_matrix_.value_ = A.data
        model.a_matrix_.num_col_ = n
        model.a_matrix_.num_row_ = m
        self.h.passModel(model)
        self.lb, self.ub = lp.lb.copy(), lp.ub.copy()
        self.sense, self.rhs = lp.sense.copy(), lp.rhs.copy()

    def set_bounds(self, lb: np.ndarray, ub: np.ndarray) -> None:
        changed = np.flatnonzero((lb != self.lb) | (ub != self.ub))
        if changed.size:
            self.h.changeColsBounds(changed.size, changed.astype(np.int32),
                                    _finite(lb[changed]), _finite(ub[changed]))
            self.lb, self.ub = lb.copy(), ub.copy()

    def add_rows(self, A: sp.spmatrix, sense: np.ndarray, rhs: np.ndarray) -> None:
        A = sp.csr_matrix(A)
        if A.shape[0] == 0:
            return
        lo, hi = _row_bounds(np.asarray(sense), np.asarray(rhs, dtype=float))
        self.h.addRows(A.shape[0], lo, hi, A.nnz, A.indptr[:-1].astype(np.int32),
                       A.indices.astype(np.int32), A.data)
        self.sense = np.concatenate([self.sense, sense])
        self.rhs = np.concatenate([self.rhs, rhs])

    def solve(self) -> LpOutcome:
        self.h.run()
        status = self.h.getModelStatus()
        iters = int(self.h.getInfo().simplex_iteration_count)
        if status == highspy.HighsModelStatus.kInfeasible:
            return LpOutcome(INFEASIBLE, iterations=iters)
        if status in (highspy.HighsModelStatus.kUnbounded, highspy.HighsModelStatus.kUnboundedOrInfeasible):
            # re-solve from scratch to separate the two cases
            self.h.clearSolver()
            self.h.run()
            status = self.h.getModelStatus()
            if status == highspy.HighsModelStatus.kInfeasible:
                return LpOutcome(INFEASIBLE, iterations=iters)
            if status != highspy.HighsModelStatus.kOptimal:
                return LpOutcome(UNBOUNDED, iterations=iters)
        if status != highspy.HighsModelStatus.kOptimal:
            return LpOutcome(ITERATION_LIMIT, iterations=iters, info={"status": str(status)})
        sol = self.h.getSolution()
        x = np.array(sol.col_value)
        duals = np.array(sol.row_dual)
        reduced = np.array(sol.col_dual)
        lo, hi = _row_bounds(self.sense, self.rhs)
        dual_obj = float(np.sum(np.where(duals > 0, np.where(np.isfinite(lo), lo, 0), np.where(np.isfinite(hi), hi, 0)) * duals))
        dual_obj += float(np.sum(np.where(reduced > 0, np.where(np.isfinite(self.lb), self.lb, 0),
                                          np.where(np.isfinite(self.ub), self.ub, 0)) * reduced))
        obj = float(self.lp.c @ x)
        return LpOutcome(OPTIMAL, x, obj + self.lp.offset, duals, reduced, None, iters,
                         dual_obj + self.lp.offset)


def _solve_highs(lp: StandardLp) -> LpOutcome:
    return HighsSession(lp).solve()


# ---------------------------------------------------------------------------
# bounded-variable revised simplex


class BoundedSimplex:
    """Dense revised simplex over ``[A, -I] (x, s) = 0`` with bounded columns.

    The logical column ``s_i`` carries row ``i``'s activity and the row's bounds,
    so every constraint becomes a bound. Phase 1 adds one artificial per row
    whose logical cannot start basic and minimises their sum; phase 2 fixes the
    artificials at zero and minimises the true objective.
    """

    refactor_every = 50

    def __init__(self, lp: StandardLp, bland_after: int = 1000, max_iter: int = 100_000):
        self.lp = lp
        self.bland_after = bland_after
        self.max_iter = max_iter
        m, n = lp.shape
        self.m, self.n = m, n
        row_lo = np.where(lp.sense == LE, -np.inf, lp.rhs)
        row_hi = np.where(lp.sense == GE, np.inf, lp.rhs)
        self.M = np.hstack([lp.A.toarray(), -np.eye(m)]) if m else np.zeros((0, n))
        self.lo = np.concatenate([lp.lb, row_lo])
        self.hi = np.concatenate([lp.ub, row_hi])
        self.cost = np.concatenate([lp.c, np.zeros(m)])
        self.iterations = 0

    # -- helpers -------------------------------------------------------------
    def _start_value(self, j: int) -> float:
        if np.isfinite(self.lo[j]):
            return self.lo[j]
        if np.isfinite(self.hi[j]):
            return self.hi[j]
        return 0.0

    def _refactor(self) -> None:
        self.Binv = np.linalg.inv(self.M[:, self.basis])

    def _basic_values(self) -> None:
        nonbasic = np.ones(self.M.shape[1], dtype=bool)
        nonbasic[self.basis] = False
        rhs = -self.M[:, nonbasic] @ self.z[nonbasic]
        self.z[self.basis] = self.Binv @ rhs

    def _iterate(self, cost: np.ndarray) -> str:
        degenerate = 0
        since_refactor = 0
        total_cols = self.M.shape[1]
        while True:
            if self.iterations >= self.max_iter:
                return ITERATION_LIMIT
            y = cost[self.basis] @ self.Binv
            d = cost - y @ self.M
            in_basis = np.zeros(total_cols, dtype=bool)
            in_basis[self.basis] = True
            at_lo = np.isclose(self.z, self.lo, atol=FEAS_TOL) & np.isfinite(self.lo)
            at_hi = np.isclose(self.z, self.hi, atol=FEAS_TOL) & np.isfinite(self.hi)
            fixed = at_lo & at_hi
            can_up = ~in_basis & ~fixed & ~at_hi & (d < -OPT_TOL)
            can_down = ~in_basis & ~fixed & ~at_lo & (d > OPT_TOL)
            eligible = np.flatnonzero(can_up | can_down)
            if eligible.size == 0:
                self.y, self.d = y, d
                return OPTIMAL
            if degenerate >= self.bland_after:
                j = int(eligible[0])
            else:
                j = int(eligible[np.argmax(np.abs(d[eligible]))])
            direction = 1.0 if can_up[j] else -1.0
            alpha = self.Binv @ self.M[:, j]
            alpha[np.abs(alpha) < ZERO_TOL] = 0.0
            step = direction * alpha  # basic values move by -theta * step
            theta = self.hi[j] - self.lo[j]
            leave = -1
            xb = self.z[self.basis]
            lob, hib = self.lo[self.basis], self.hi[self.basis]
            best_piv = 0.0
            for i in np.flatnonzero(step):
                if step[i] > 0 and np.isfinite(lob[i]):
                    t = max((xb[i] - lob[i]) / step[i], 0.0)
                elif step[i] < 0 and np.isfinite(hib[i]):
                    t = max((hib[i] - xb[i]) / -step[i], 0.0)
                else:
                    continue
                better = t < theta - ZERO_TOL
                tie = abs(t - theta) <= ZERO_TOL and leave >= 0
                if tie:
                    if degenerate >= self.bland_after:
                        better = self.basis[i] < self.basis[leave]
                    else:
                        better = abs(step[i]) > best_piv
                if better:
                    theta, leave, best_piv = t, i, abs(step[i])
            if not np.isfinite(theta):
                return UNBOUNDED
            self.iterations += 1
            degenerate = degenerate + 1 if theta <= ZERO_TOL else 0
            self.z[self.basis] = xb - theta * step
            self.z[j] += direction * theta
            if leave < 0:
                continue  # bound flip
            out = self.basis[leave]
            # snap the leaving variable exactly onto the bound it reached
            self.z[out] = lob[leave] if step[leave] > 0 else hib[leave]
            self.basis[leave] = j
            piv = alpha[leave]
            row = self.Binv[leave] / piv
            self.Binv -= np.outer(alpha, row)
            self.Binv[leave] = row
            since_refactor += 1
            if since_refactor >= self.refactor_every:
                self._refactor()
                self._basic_values()
                since_refactor = 0

    # -- driver --------------------------------------------------------------
    def solve(self, warm_basis: Optional[tuple] = None) -> LpOutcome:
        m, n = self.m, self.n
        if m == 0:
            return self._trivial()
        total = n + m
        if warm_basis is not None:
            started = self._warm(warm_basis)
            if started:
                status = self._iterate(self.cost)
                return self._finish(status)
        self.z = np.array([self._start_value(j) for j in range(total)])
        act = self.M[:, :n] @ self.z[:n]
        art_sign = np.zeros(m)
        basis = []
        for i in range(m):
            if self.lo[n + i] - FEAS_TOL <= act[i] <= self.hi[n + i] + FEAS_TOL:
                basis.append(n + i)
            else:
                bound = self.lo[n + i] if act[i] < self.lo[n + i] else self.hi[n + i]
                self.z[n + i] = bound
                art_sign[i] = 1.0 if act[i] - bound < 0 else -1.0
        arts = np.flatnonzero(art_sign)
        if arts.size:
            A_art = np.zeros((m, arts.size))
            A_art[arts, np.arange(arts.size)] = art_sign[arts]
            self.M = np.hstack([self.M, A_art])
            self.lo = np.concatenate([self.lo, np.zeros(arts.size)])
            self.hi = np.concatenate([self.hi, np.full(arts.size, np.inf)])
            self.cost = np.concatenate([self.cost, np.zeros(arts.size)])
            self.z = np.concatenate([self.z, np.zeros(arts.size)])
            # artificial k is basic in row arts[k]
            art_of_row = {int(i): total + k for k, i in enumerate(arts)}
            basis = [art_of_row.get(i, n + i) for i in range(m)]
        self.basis = list(basis)
        self._refactor()
        self._basic_values()
        if arts.size:
            phase1 = np.zeros(self.M.shape[1])
            phase1[total:] = 1.0
            status = self._iterate(phase1)
            if status == ITERATION_LIMIT:
                return self._finish(status)
            if float(np.sum(self.z[total:])) > FEAS_TOL * (1 + m):
                return LpOutcome(INFEASIBLE, iterations=self.iterations)
            self.hi[total:] = 0.0
            self.z[total:] = np.minimum(self.z[total:], 0.0)
            self._basic_values()
        status = self._iterate(self.cost)
        return self._finish(status)

    def _warm(self, warm_basis: tuple) -> bool:
        basic, at_upper = warm_basis
        total = self.n + self.m
        if len(basic) != self.m:
            return False
        self.z = np.array([self._start_value(j) for j in range(total)])
        for j in at_upper:
            if np.isfinite(self.hi[j]):
                self.z[j] = self.hi[j]
        self.basis = list(basic)
        try:
            self._refactor()
        except np.linalg.LinAlgError:
            return False
        self._basic_values()
        xb = self.z[self.basis]
        ok = np.all(xb >= self.lo[self.basis] - FEAS_TOL) and np.all(xb <= self.hi[self.basis] + FEAS_TOL)
        return bool(ok)

    def _trivial(self) -> LpOutcome:
        lp = self.lp
        x = np.where(lp.c > 0, lp.lb, np.where(lp.c < 0, lp.ub, np.where(np.isfinite(lp.lb), lp.lb, 0.0)))
        if not np.all(np.isfinite(x)):
            return LpOutcome(UNBOUNDED)
        obj = float(lp.c @ x) + lp.offset
        return LpOutcome(OPTIMAL, x, obj, np.zeros(0), lp.c.copy(), ((), ()), 0, obj)

    def _finish(self, status: str) -> LpOutcome:
        if status != OPTIMAL:
            return LpOutcome(status, iterations=self.iterations)
        n, m = self.n, self.m
        x = self.z[:n].copy()
        obj = float(self.lp.c @ x) + self.lp.offset
        d = self.d
        # reduced cost of logical s_i is +y_i: the objective rate per unit of row activity
        duals = d[n:n + m].copy()
        reduced = d[:n].copy()
        in_basis = np.zeros(self.M.shape[1], dtype=bool)
        in_basis[self.basis] = True
        dual_obj = float(np.sum(d[:n + m][~in_basis[:n + m]] * self.z[:n + m][~in_basis[:n + m]]))
        at_upper = tuple(j for j in range(n + m) if not in_basis[j] and np.isfinite(self.hi[j])
                         and abs(self.z[j] - self.hi[j]) <= FEAS_TOL and not np.isclose(self.lo[j], self.hi[j]))
        basis = None
        if all(b < n + m for b in self.basis):
            basis = (tuple(int(b) for b in self.basis), at_upper)
        return LpOutcome(OPTIMAL, x, obj, duals, reduced, basis, self.iterations,
                         dual_obj + self.lp.offset)
