"""Dense two-phase primal simplex with dual recovery.

The solver works on a full tableau. Entering columns follow Dantzig's rule
(largest reduced cost, lowest index on ties) until a long run of degenerate
pivots is seen, after which Bland's rule takes over for the rest of the phase.
Everything is deterministic: the same program always takes the same pivots.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .entropy_lp import EQ, GE, LE, LinearProgram

# Tolerances, in one place.
ZERO_TOL = 1e-13  # tableau entries at or below this are structural zeros
PIVOT_TOL = 1e-11  # smallest pivot ever accepted
FEAS_TOL = 1e-9  # reduced-cost threshold and "healthy" pivot size
ACCEPT_TOL = 1e-7  # residuals allowed in an accepted solution
GAP_TOL = 1e-6  # allowed |primal - dual| objective gap


class SolverError(RuntimeError):
    """Numerical breakdown: no usable pivot, singular basis, or iteration limit."""


class Status(enum.Enum):
    OPTIMAL = "optimal"
    UNBOUNDED = "unbounded"
    INFEASIBLE = "infeasible"


@dataclass
class LpSolution:
    status: Status
    objective: float
    primal: Optional[np.ndarray]
    duals: Optional[np.ndarray]
    ray: Optional[np.ndarray] = None
    dual_objective: float = math.nan
    iterations: int = 0
    bland: bool = False


def _dense(lp: LinearProgram) -> tuple[np.ndarray, np.ndarray, list[str], np.ndarray]:
    m, nv = len(lp.constraints), lp.n_vars
    A = np.zeros((m, nv))
    b = np.zeros(m)
    rel = []
    for i, con in enumerate(lp.constraints):
        for k, c in con.terms.items():
            A[i, k] = c
        b[i] = con.rhs
        rel.append(con.relation)
    c = np.zeros(nv)
    for k, v in lp.objective.items():
        c[k] = v
    return A, b, rel, c


class _Tableau:
    def __init__(self, A: np.ndarray, b: np.ndarray, rel: list[str]):
        m, nv = A.shape
        self.sign = np.where(b < 0, -1.0, 1.0)
        A = A * self.sign[:, None]
        b = b * self.sign
        rel = [
            {LE: GE, GE: LE}.get(r, r) if s < 0 else r for r, s in zip(rel, self.sign)
        ]
        n_slack = sum(r != EQ for r in rel)
        n_art = sum(r != LE for r in rel)
        self.nv, self.n_slack, self.n_art = nv, n_slack, n_art
        N = nv + n_slack + n_art
        M = np.zeros((m, N))
        M[:, :nv] = A
        basis = []
        s = nv
        a = nv + n_slack
        for i, r in enumerate(rel):
            if r == LE:
                M[i, s] = 1.0
                basis.append(s)
                s += 1
            elif r == GE:
                M[i, s] = -1.0
                s += 1
                M[i, a] = 1.0
                basis.append(a)
                a += 1
            else:
                M[i, a] = 1.0
                basis.append(a)
                a += 1
        self.M = M  # standard form, kept for dual recovery
        self.T = M.copy()
        self.beta = b.copy()
        self.basis = basis
        self.m, self.N = m, N
        self.iterations = 0
        self.used_bland = False

    @property
    def artificial(self) -> np.ndarray:
        mask = np.zeros(self.N, dtype=bool)
        mask[self.nv + self.n_slack :] = True
        return mask

    def pivot(self, r: int, j: int) -> None:
        T, beta = self.T, self.beta
        piv = T[r, j]
        T[r] /= piv
        beta[r] /= piv
        col = T[:, j].copy()
        col[r] = 0.0
        nz = np.nonzero(col)[0]
        if nz.size:
            T[nz] -= np.outer(col[nz], T[r])
            beta[nz] -= col[nz] * beta[r]
        T[:, j] = 0.0
        T[r, j] = 1.0
        np.maximum(beta, 0.0, out=beta, where=beta > -FEAS_TOL)
        self.basis[r] = j
        self.iterations += 1

    def _ratio_row(self, j: int, rows: np.ndarray, bland: bool) -> int:
        col = self.T[rows, j]
        ratios = self.beta[rows] / col
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * (1.0 + abs(best))]
        if bland:
            return int(min(ties, key=lambda i: self.basis[i]))
        return int(ties[0])

    def run(self, cost: np.ndarray, allowed: np.ndarray, max_iter: int) -> tuple[str, int]:
        """Maximize ``cost`` from the current basic feasible solution.

        Returns ``("optimal", -1)`` or ``("unbounded", entering_column)``.
        """
        d = cost - cost[self.basis] @ self.T
        for i in self.basis:
            d[i] = 0.0
        degenerate = 0
        bland = False
        limit = 5 * (self.m + self.N)
        while True:
            cand = np.nonzero(allowed & (d > FEAS_TOL))[0]
            if cand.size == 0:
                return "optimal", -1
            if bland:
                order = cand
            else:
                order = cand[np.lexsort((cand, -d[cand]))]
            choice = None
            weak = None
            for j in order:
                col = self.T[:, j]
                healthy = np.nonzero(col > FEAS_TOL)[0]
                if healthy.size:
                    choice = (self._ratio_row(j, healthy, bland), j)
                    break
                usable = np.nonzero(col > PIVOT_TOL)[0]
                if usable.size:
                    if weak is None:
                        weak = (self._ratio_row(j, usable, bland), j)
                    continue
                if not np.any(col > ZERO_TOL):
                    return "unbounded", int(j)
            if choice is None:
                choice = weak
            if choice is None:
                raise SolverError("no pivot above 1e-11 for any improving column")
            r, j = choice
            step = self.beta[r] / self.T[r, j]
            dj = d[j]
            self.pivot(r, j)
            d -= dj * self.T[r]
            d[j] = 0.0
            if step <= FEAS_TOL:
                degenerate += 1
                if degenerate > limit and not bland:
                    bland = self.used_bland = True
            else:
                degenerate = 0
            if self.iterations > max_iter:
                raise SolverError(f"iteration limit {max_iter} exceeded")

    def drive_out_artificials(self) -> None:
        art = self.artificial
        for r in range(self.m):
            if not art[self.basis[r]]:
                continue
            row = np.abs(self.T[r])
            row[art] = 0.0
            j = int(np.argmax(row))
            if row[j] > FEAS_TOL:
                self.pivot(r, j)
            # otherwise the row is redundant; the artificial stays basic at zero


def solve(lp: LinearProgram, max_iter: Optional[int] = None) -> LpSolution:
    """Solve ``max c·x s.t. constraints, x >= 0``.

    Unbounded and infeasible programs are reported through ``status``; only
    numerical breakdown raises :class:`SolverError`.
    """
    A, b, rel, c = _dense(lp)
    tab = _Tableau(A, b, rel)
    max_iter = max_iter or 50 * (tab.m + tab.N) + 100
    art = tab.artificial

    if tab.n_art:
        cost1 = np.where(art, -1.0, 0.0)
        tab.run(cost1, np.ones(tab.N, dtype=bool), max_iter)
        infeas = float(sum(tab.beta[i] for i in range(tab.m) if art[tab.basis[i]]))
        if infeas > ACCEPT_TOL * max(1.0, float(np.abs(b).max(initial=0.0))):
            return LpSolution(Status.INFEASIBLE, math.nan, None, None, iterations=tab.iterations)
        tab.drive_out_artificials()

    cost2 = np.zeros(tab.N)
    cost2[: tab.nv] = c
    outcome, j = tab.run(cost2, ~art, max_iter)

    x = np.zeros(tab.N)
    x[tab.basis] = tab.beta
    primal = x[: tab.nv].copy()

    if outcome == "unbounded":
        ray = np.zeros(tab.N)
        ray[j] = 1.0
        ray[tab.basis] = -tab.T[:, j]
        ray[np.abs(ray) <= ZERO_TOL] = 0.0
        return LpSolution(
            Status.UNBOUNDED, math.inf, primal, None, ray=ray[: tab.nv],
            iterations=tab.iterations, bland=tab.used_bland,
        )

    B = tab.M[:, tab.basis]
    try:
        y_std = np.linalg.solve(B.T, cost2[tab.basis])
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular final basis: {exc}") from None
    duals = y_std * tab.sign
    return LpSolution(
        Status.OPTIMAL, float(c @ primal), primal, duals,
        dual_objective=float(duals @ b), iterations=tab.iterations, bland=tab.used_bland,
    )


@dataclass(frozen=True)
class Residuals:
    primal: float
    dual: float
    gap: float

    def ok(self, feas_tol: float = ACCEPT_TOL, gap_tol: float = GAP_TOL) -> bool:
        return self.primal <= feas_tol and self.dual <= feas_tol and self.gap <= gap_tol


def check_solution(lp: LinearProgram, sol: LpSolution) -> Residuals:
    """Max primal residual, max dual infeasibility, and duality gap of ``sol``."""
    A, b, rel, c = _dense(lp)
    x = np.asarray(sol.primal, dtype=float)
    y = np.asarray(sol.duals, dtype=float)
    ax = A @ x
    viol = [0.0, float(np.max(-x, initial=0.0))]
    dual_bad = [0.0]
    for i, r in enumerate(rel):
        if r == LE:
            viol.append(ax[i] - b[i])
            dual_bad.append(-y[i])
        elif r == GE:
            viol.append(b[i] - ax[i])
            dual_bad.append(y[i])
        else:
            viol.append(abs(ax[i] - b[i]))
    dual_bad.append(float(np.max(c - A.T @ y, initial=0.0)))
    gap = abs(float(c @ x) - float(y @ b))
    return Residuals(max(viol), max(dual_bad), gap)
