"""Restricted isometry / orthogonality constants by exhaustive enumeration.

Estimating these constants by sampling subsets would underestimate them
and could wrongly certify a matrix, so only exact enumeration is offered.
A work budget guards against combinatorial blow-up.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import ContractError

__all__ = [
    "BudgetExceededError",
    "DEFAULT_BUDGET",
    "delta_S",
    "theta_S_Sp",
    "IncoherenceReport",
    "incoherence_report",
    "compressibility_check",
    "theorem1_condition",
]

DEFAULT_BUDGET = 1e9
_CHUNK = 4096


class BudgetExceededError(RuntimeError):
    """Exhaustive enumeration would exceed the configured work budget."""


def _combos(pool, r):
    """Yield ``(chunk, r)`` int arrays of r-subsets of ``pool``."""
    pool = np.asarray(pool, dtype=np.int64)
    it = itertools.combinations(range(pool.size), r)
    while True:
        block = list(itertools.islice(it, _CHUNK))
        if not block:
            return
        yield pool[np.array(block, dtype=np.int64).reshape(len(block), r)]


def delta_S(A, S: int, budget: float = DEFAULT_BUDGET) -> float:
    """Restricted isometry constant of order ``S``.

    Worst deviation from 1 of the extreme eigenvalues of ``A_T'A_T`` over
    all ``|T| = S`` (smaller sets cannot do worse, by eigenvalue
    interlacing).  Clipped at 0 from below.
    """
    A = np.asarray(A, dtype=float)
    m = A.shape[1]
    if not 0 <= S <= m:
        raise ContractError(f"S={S} outside [0, {m}]")
    if S == 0:
        return 0.0
    work = math.comb(m, S) * S**3
    if work > budget:
        raise BudgetExceededError(
            f"delta_{S} needs C({m},{S})*{S}^3 = {work:.3g} operations (budget {budget:.3g})"
        )
    G = A.T @ A
    worst = 0.0
    for idx in _combos(np.arange(m), S):
        sub = G[idx[:, :, None], idx[:, None, :]]
        w = np.linalg.eigvalsh(sub)
        worst = max(worst, float(np.max(w[:, -1] - 1.0)), float(np.max(1.0 - w[:, 0])))
    return max(worst, 0.0)


def theta_S_Sp(A, S: int, Sp: int, budget: float = DEFAULT_BUDGET) -> float:
    """Restricted orthogonality constant: the largest spectral norm of
    ``A_T' A_T'`` over disjoint ``|T| = S``, ``|T'| = Sp``."""
    A = np.asarray(A, dtype=float)
    m = A.shape[1]
    if S < 0 or Sp < 0 or S + Sp > m:
        raise ContractError(f"need S + S' <= m, got {S} + {Sp} > {m}")
    if S == 0 or Sp == 0:
        return 0.0
    if S > Sp:
        S, Sp = Sp, S
    pairs = math.comb(m, S) * math.comb(m - S, Sp)
    work = pairs * max(S, Sp) ** 3
    if work > budget:
        raise BudgetExceededError(
            f"theta_{S},{Sp} needs {pairs:.3g} subset pairs (work {work:.3g}, budget {budget:.3g})"
        )
    G = A.T @ A
    everything = np.arange(m)
    worst = 0.0
    for block in _combos(everything, S):
        for T in block:
            rest = np.setdiff1d(everything, T)
            for Tp in _combos(rest, Sp):
                sub = G[T][:, Tp]  # (S, chunk, Sp)
                sub = np.moveaxis(sub, 1, 0)
                sv = np.linalg.svd(sub, compute_uv=False)
                worst = max(worst, float(sv[:, 0].max()))
    return worst


@dataclass
class IncoherenceReport:
    delta: dict = field(default_factory=dict)
    theta: dict = field(default_factory=dict)
    budget_S_max: int = 0
    S_fa: int = 0
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def incoherence_report(A, S_max: int, S_fa: int | None = None,
                       budget: float = DEFAULT_BUDGET) -> IncoherenceReport:
    """Evaluate the incoherence conditions needed by the error bounds.

    Checks ``delta_{S_max + S_fa} < 1`` and ``delta_{2 S_max} + delta_{3 S_max} < 1``.
    Orders larger than the number of columns count as failures (infinite
    constants).  Raises BudgetExceededError when any order is too costly.
    """
    A = np.asarray(A, dtype=float)
    m = A.shape[1]
    S_fa = 0 if S_fa is None else int(S_fa)
    rep = IncoherenceReport(budget_S_max=S_max, S_fa=S_fa)
    orders = sorted({1, S_max, S_max + S_fa, 2 * S_max, 3 * S_max})
    for S in orders:
        rep.delta[S] = delta_S(A, S, budget) if S <= m else math.inf
    if 3 * S_max <= m:
        rep.theta[(S_max, 2 * S_max)] = theta_S_Sp(A, S_max, 2 * S_max, budget)
    else:
        rep.theta[(S_max, 2 * S_max)] = math.inf
    rep.checks["delta_Smax_plus_Sfa_lt_1"] = rep.delta[S_max + S_fa] < 1
    rep.checks["delta_2Smax_plus_delta_3Smax_lt_1"] = (
        rep.delta[2 * S_max] + rep.delta[3 * S_max] < 1
    )
    return rep


def compressibility_check(beta_cov_diag_T, x_min_energy: float) -> bool:
    """True when the largest conditional second moment of the residual
    coefficients on ``T`` is strictly below the smallest signal energy."""
    b = np.asarray(beta_cov_diag_T, dtype=float)
    largest = b.max() if b.size else -math.inf
    return bool(largest < x_min_energy)


def theorem1_condition(t: int, t_a: int, sigma_sys_sq: float, delta_T: float,
                       theta: float, lambda_max_cond: float, sigma_obs_sq: float) -> bool:
    """Slow-support-change condition under which the LS residual is compressible:

        (t - t_a + 1) sigma_sys^2 >= theta^2 / (1 - delta)^2 * lambda_max
                                     + sigma_obs^2 / (1 - delta)
    """
    if delta_T >= 1:
        return False
    lhs = (t - t_a + 1) * sigma_sys_sq
    rhs = theta**2 / (1.0 - delta_T) ** 2 * lambda_max_cond + sigma_obs_sq / (1.0 - delta_T)
    return bool(lhs >= rhs)
