"""Dantzig selector, addition thresholding and the Gauss-Dantzig refit.

The Dantzig selector

    min ||b||_1   s.t.   ||A'(y - A b)||_inf <= eps

is posed as a linear program in ``b = u - v`` (``u, v >= 0``) with one
boxed slack per row of the Gram system::

    G u - G v + z = g,    G = A'A,  g = A'y,   -eps <= z <= eps.

The all-slack basis is dual feasible for unit costs, so the program is
solved by a bounded-variable dual simplex starting there: each pivot repairs
one violated correlation constraint, and the iteration count tracks the size
of the active set rather than ``m``.  A ``v`` column is the negated ``u``
column, so its reduced cost is ``2 - d_u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .numerics import ContractError, SingularMatrixError, as_index_set, columns, least_squares

__all__ = [
    "DsProblem",
    "DsSolution",
    "ConvergenceError",
    "solve_ds",
    "threshold_additions",
    "default_max_add",
    "lambda_m",
    "gauss_dantzig",
]

FEAS_TOL = 1e-9
GAP_TOL = 1e-7
PIVOT_TOL = 1e-9


class ConvergenceError(RuntimeError):
    """The simplex did not certify an optimum within its iteration budget."""

    def __init__(self, message, beta=None, gap=math.inf, iterations=0):
        super().__init__(message)
        self.beta = beta
        self.gap = gap
        self.iterations = iterations


@dataclass
class DsProblem:
    A: np.ndarray
    y: np.ndarray
    eps: float

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.A.ndim != 2 or self.y.shape != (self.A.shape[0],):
            raise ContractError(f"inconsistent shapes A{self.A.shape}, y{self.y.shape}")
        if not self.eps > 0:
            raise ContractError(f"constraint level must be positive, got {self.eps}")


@dataclass
class DsSolution:
    beta_hat: np.ndarray
    objective: float
    feasibility_gap: float
    iterations: int
    duality_gap: float = 0.0


def lambda_m(m: int, log_base: float = 2.0) -> float:
    """sqrt(2 log m); the simulations use base 2 (giving 4 for m=256)."""
    if log_base == math.e:
        return math.sqrt(2.0 * math.log(m))
    return math.sqrt(2.0 * math.log(m, log_base))


def default_max_add(n: int, m: int) -> int:
    """Cap on additions per step, floor(1.25 n / log2 m)."""
    return int(math.floor(1.25 * n / math.log2(m)))


class _DualSimplex:
    """Bounded dual simplex over the active set of the Dantzig program.

    A basis always holds ``k`` structural columns ``J`` (each ``u_j`` or
    ``v_j``) plus the slacks of every row outside a set ``R`` of ``k`` rows
    whose slacks sit at a bound.  Everything the simplex needs follows from
    the ``k x k`` matrix ``M = G[R, J] * sign(J)``:

    * primal values ``x_J = M^{-1} (g_R - z_R)``, free slacks ``g - G_J x_J``;
    * multipliers ``pi_R = M^{-T} 1`` (zero elsewhere);
    * the pivot row of a leaving variable through one more ``M^{-T}`` solve.

    Values are rebuilt from scratch every iteration, so no tableau drift
    accumulates.  Variable codes for Bland's rule: ``u_j -> j``,
    ``v_j -> m + j``, ``z_i -> 2m + i``.
    """

    def __init__(self, G, g, eps, max_iter):
        self.G, self.g, self.eps = G, g, eps
        self.m = G.shape[0]
        self.max_iter = max_iter
        self.J = []  # structural codes, column order of M
        self.R = []  # rows with nonbasic slack, row order of M
        self.zval = np.zeros(self.m)  # bound value of each nonbasic slack
        self.iterations = 0
        self.degenerate = 0
        self.bland = False
        self._evaluate()

    def _evaluate(self):
        m, G = self.m, self.G
        J = np.array(self.J, dtype=np.int64)
        R = np.array(self.R, dtype=np.int64)
        self.cols = J % m
        self.signs = np.where(J < m, 1.0, -1.0)
        self.Rarr = R
        k = J.size
        if k:
            M = G[np.ix_(R, self.cols)] * self.signs
            self.lu = scipy.linalg.lu_factor(M)
            self.xJ = scipy.linalg.lu_solve(self.lu, self.g[R] - self.zval[R])
            self.piR = scipy.linalg.lu_solve(self.lu, np.ones(k), trans=1)
            self.z = self.g - G[:, self.cols] @ (self.signs * self.xJ)
            self.d_u = 1.0 - G[:, R] @ self.piR
        else:
            self.lu = None
            self.xJ = np.zeros(0)
            self.piR = np.zeros(0)
            self.z = self.g.copy()
            self.d_u = np.ones(m)
        self.in_R = np.zeros(m, dtype=bool)
        self.in_R[R] = True
        self.z[R] = self.zval[R]

    @property
    def pi(self):
        pi = np.zeros(self.m)
        pi[self.Rarr] = self.piR
        return pi

    def _choose_leaving(self):
        """Most violated basic variable (lowest code under Bland's rule)."""
        eps, m = self.eps, self.m
        viol_x = -self.xJ
        free = np.flatnonzero(~self.in_R)
        zf = self.z[free]
        viol_z = np.maximum(zf - eps, -eps - zf)
        codes = np.concatenate([np.array(self.J, dtype=np.int64), 2 * m + free])
        viol = np.concatenate([viol_x, viol_z])
        bad = np.flatnonzero(viol > FEAS_TOL)
        if bad.size == 0:
            return None
        if self.bland:
            pick = bad[np.argmin(codes[bad])]
        else:
            pick = bad[np.argmax(viol[bad])]
        if pick < len(self.J):
            return ("x", pick, 1)  # x_J[pick] < 0: leaves at its lower bound 0
        i = free[pick - len(self.J)]
        return ("z", i, 1 if self.z[i] < -eps else -1)

    def _pivot_row(self, leaving):
        """Row of B^{-1} A for the leaving variable, split by variable kind."""
        G, m = self.G, self.m
        kind, which, _ = leaving
        k = len(self.J)
        if kind == "x":
            e = np.zeros(k)
            e[which] = 1.0
            rhoR = scipy.linalg.lu_solve(self.lu, e, trans=1)
            alpha_u = G[:, self.Rarr] @ rhoR
        else:
            i = which
            if k:
                rhs = -self.signs * G[self.cols, i]
                rhoR = scipy.linalg.lu_solve(self.lu, rhs, trans=1)
                alpha_u = G[:, self.Rarr] @ rhoR + G[:, i]
            else:
                rhoR = np.zeros(0)
                alpha_u = G[:, i].copy()
        alpha_z = np.zeros(m)
        alpha_z[self.Rarr] = rhoR
        return alpha_u, alpha_z

    def _choose_entering(self, leaving):
        m = self.m
        direction = leaving[2]
        alpha_u, alpha_z = self._pivot_row(leaving)
        alpha = np.concatenate([alpha_u, -alpha_u, alpha_z])
        d = np.concatenate([self.d_u, 2.0 - self.d_u, np.zeros(m)])
        d[2 * m:][self.Rarr] = -self.piR
        nonbasic = np.ones(3 * m, dtype=bool)
        nonbasic[np.array(self.J, dtype=np.int64)] = False
        nonbasic[2 * m:] = self.in_R
        at_upper = np.zeros(3 * m, dtype=bool)
        at_upper[2 * m:] = self.in_R & (self.zval > 0)
        sa = direction * alpha
        cand = nonbasic & np.where(at_upper, sa > PIVOT_TOL, sa < -PIVOT_TOL)
        idx = np.flatnonzero(cand)
        if idx.size == 0:
            return None, 0.0
        ratios = np.abs(d[idx]) / np.abs(alpha[idx])
        best = ratios.min()
        ties = idx[ratios <= best + 1e-12]
        if self.bland:
            q = ties.min()
        else:
            q = ties[np.argmax(np.abs(alpha[ties]))]
        return int(q), best

    def _pivot(self, leaving, q):
        m, eps = self.m, self.eps
        kind, which, direction = leaving
        if kind == "x":
            del self.J[which]
        else:
            self.R.append(int(which))
            self.zval[which] = -eps if direction > 0 else eps
        if q < 2 * m:
            self.J.append(q)
        else:
            i = q - 2 * m
            self.R.remove(i)
            self.zval[i] = 0.0
        self._evaluate()

    def beta(self):
        beta = np.zeros(self.m)
        np.add.at(beta, self.cols, self.signs * self.xJ)
        return beta

    def solve(self):
        m = self.m
        while True:
            leaving = self._choose_leaving()
            if leaving is None:
                return
            if self.iterations >= self.max_iter:
                raise ConvergenceError(
                    f"dual simplex hit the iteration limit ({self.max_iter})",
                    beta=self.beta(),
                    iterations=self.iterations,
                )
            q, ratio = self._choose_entering(leaving)
            if q is None:
                raise ConvergenceError(
                    "no entering column; the correlation constraints look infeasible",
                    beta=self.beta(),
                    iterations=self.iterations,
                )
            if ratio <= 1e-12:
                self.degenerate += 1
                if self.degenerate > 50 * m:
                    self.bland = True
            self._pivot(leaving, q)
            self.iterations += 1


def solve_ds(p: DsProblem, max_iter: int | None = None) -> DsSolution:
    """Solve the Dantzig selector program ``p`` to a certified optimum.

    Optimality is certified by a dual lower bound: the simplex multipliers
    ``pi`` rescaled so that ``||G pi||_inf <= 1`` give
    ``g'pi - eps ||pi||_1 <= min ||b||_1``.
    """
    A, y, eps = p.A, p.y, float(p.eps)
    m = A.shape[1]
    G = A.T @ A
    g = A.T @ y
    if np.abs(g).max(initial=0.0) <= eps:
        return DsSolution(np.zeros(m), 0.0, 0.0, 0, 0.0)

    solver = _DualSimplex(G, g, eps, max_iter if max_iter is not None else 40 * m + 500)
    solver.solve()

    beta = solver.beta()
    beta[np.abs(beta) < 1e-14] = 0.0
    objective = float(np.abs(beta).sum())
    feas_gap = max(0.0, float(np.abs(A.T @ (y - A @ beta)).max()) - eps)
    pi = solver.pi
    scale = max(1.0, float(np.abs(G @ pi).max()))
    pi = pi / scale
    dual = float(g @ pi - eps * np.abs(pi).sum())
    gap = max(0.0, objective - dual)
    if gap > GAP_TOL * (1.0 + abs(objective)) or feas_gap > 1e-7:
        raise ConvergenceError(
            f"could not certify optimality: duality gap {gap:.3e}, "
            f"feasibility gap {feas_gap:.3e}",
            beta=beta,
            gap=gap,
            iterations=solver.iterations,
        )
    return DsSolution(beta, objective, feas_gap, solver.iterations, gap)


def threshold_additions(beta_hat, T_prev, alpha_a: float, max_add: int | None = None) -> np.ndarray:
    """Indices outside ``T_prev`` whose squared estimate exceeds ``alpha_a``.

    At most ``max_add`` of them are kept, largest ``|beta_hat|`` first with
    ties going to the lower index.
    """
    if alpha_a < 0 or (max_add is not None and max_add < 0):
        raise ContractError("alpha_a and max_add must be non-negative")
    beta_hat = np.asarray(beta_hat, dtype=float)
    outside = np.ones(beta_hat.size, dtype=bool)
    outside[as_index_set(T_prev, beta_hat.size)] = False
    cand = np.flatnonzero(outside & (beta_hat**2 > alpha_a))
    if max_add is not None and cand.size > max_add:
        # stable sort on -|b| keeps lower indices first among equal magnitudes
        order = np.argsort(-np.abs(beta_hat[cand]), kind="stable")
        cand = np.sort(cand[order[:max_add]])
    return cand.astype(np.int64)


def gauss_dantzig(p: DsProblem, alpha: float):
    """Dantzig selector, threshold at ``alpha``, then least-squares refit.

    Returns ``(support, x_hat)``. When the thresholded support is rank
    deficient, the smallest-magnitude entries are dropped until the refit
    is well posed.
    """
    if alpha < 0:
        raise ContractError("alpha must be non-negative")
    m = p.A.shape[1]
    sol = solve_ds(p)
    beta = sol.beta_hat
    support = np.flatnonzero(beta**2 > alpha)
    order = support[np.argsort(-np.abs(beta[support]), kind="stable")]
    order = order[: p.A.shape[0]]
    x_hat = np.zeros(m)
    while order.size:
        T = np.sort(order)
        try:
            x_hat[T] = least_squares(columns(p.A, T), p.y)
            return T.astype(np.int64), x_hat
        except SingularMatrixError:
            order = order[:-1]
    return np.zeros(0, dtype=np.int64), x_hat
