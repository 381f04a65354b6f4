"""Causal sparse-sequence estimators over a reduced-order state.

Every filter keeps its state restricted to the estimated support ``T``:
``x_hat`` is a full length-``m`` vector that is zero off ``T``, while the
error covariance ``P`` is the ``|T| x |T|`` block on ``T``.  Entries off the
support are implicitly zero, which is the same as zeroing rows and columns
of the full covariance.

The per-step functions take a state and return a new one; nothing is
mutated in place.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .dantzig import DsProblem, gauss_dantzig, solve_ds, threshold_additions
from .model import MeasurementModel, SystemModel
from .numerics import (
    ContractError,
    SingularMatrixError,
    as_index_set,
    columns,
    eig_extremes,
    least_squares,
    spd_solve,
)

__all__ = [
    "Thresholds",
    "StepInfo",
    "FilterState",
    "initial_state",
    "kf_temporary",
    "fen_value",
    "fen_test",
    "kfcs_step",
    "lscs_step",
    "ga_kf_step",
    "ga_ls_step",
    "simple_cs_step",
]

LAMBDA_MIN_TOL = 1e-10


@dataclass
class Thresholds:
    alpha_a: float
    alpha_fe: float
    alpha_z: float
    k: int = 5
    k_prime: int = 3
    max_add: int | None = None
    final_ls: bool = False
    deletion_enabled: bool = True

    def __post_init__(self):
        if not self.k_prime < self.k:
            raise ContractError(f"need k' < k, got k'={self.k_prime}, k={self.k}")
        if min(self.alpha_a, self.alpha_fe, self.alpha_z) < 0:
            raise ContractError("thresholds must be non-negative")
        if self.k_prime < 1:
            raise ContractError("k' must be at least 1")


@dataclass
class StepInfo:
    """Diagnostics of one filter step, kept for traces and audits."""

    x_tmp: np.ndarray | None = None
    fen: float | None = None
    beta_hat: np.ndarray | None = None
    added: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    deleted: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    rejected: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))


@dataclass
class FilterState:
    t: int
    T: np.ndarray
    x_hat: np.ndarray
    P: np.ndarray
    support_unchanged_since: int = 0
    recent_estimates: deque = field(default_factory=deque)
    info: StepInfo | None = None

    @property
    def m(self) -> int:
        return self.x_hat.size


def initial_state(m: int, T0=None, k_prime: int = 3) -> FilterState:
    """``x_0 = 0``, ``P_0 = 0``; ``T_0`` empty unless the support is known."""
    T0 = as_index_set([] if T0 is None else T0, m)
    return FilterState(
        t=0,
        T=T0,
        x_hat=np.zeros(m),
        P=np.zeros((T0.size, T0.size)),
        recent_estimates=deque(maxlen=k_prime),
    )


def _kf_update(x_T, P_pred, A_T, y, sigma_obs_sq):
    """Measurement update of a KF restricted to the columns ``A_T``.

    Returns the updated mean, covariance (Joseph form) and the innovation
    covariance ``A_T P_pred A_T' + sigma_obs^2 I``.
    """
    n = y.size
    S = A_T @ P_pred @ A_T.T + sigma_obs_sq * np.eye(n)
    if x_T.size == 0:
        return x_T, P_pred, S
    innov = y - A_T @ x_T
    K = spd_solve(S, A_T @ P_pred).T
    x_new = x_T + K @ innov
    IKA = np.eye(x_T.size) - K @ A_T
    P_new = IKA @ P_pred @ IKA.T + sigma_obs_sq * (K @ K.T)
    return x_new, 0.5 * (P_new + P_new.T), S


def _expand(state: FilterState, T_new, sys: SystemModel):
    """Prior mean and predicted covariance on ``T_new`` (a superset of ``T``).

    Coefficients already tracked get ``P + sigma_sys^2 I``; coefficients new
    to the support start at zero with variance ``sigma_init^2``.
    """
    k = T_new.size
    pos = np.searchsorted(T_new, state.T)
    P_pred = np.zeros((k, k))
    P_pred[np.ix_(pos, pos)] = state.P
    is_old = np.zeros(k, dtype=bool)
    is_old[pos] = True
    P_pred[np.diag_indices(k)] += np.where(is_old, sys.sigma_sys_sq, sys.sigma_init_sq)
    return state.x_hat[T_new].copy(), P_pred


def kf_temporary(state: FilterState, y, meas: MeasurementModel, sys: SystemModel):
    """Temporary KF prediction/update on the previous support ``T_{t-1}``.

    Returns ``(x_tmp, P_tmp, innovation_cov)``; ``x_tmp`` is length ``m``
    and zero off the support.
    """
    y = np.asarray(y, dtype=float)
    T = state.T
    A_T = columns(meas.A, T)
    P_pred = state.P + sys.sigma_sys_sq * np.eye(T.size)
    x_T, P_tmp, S = _kf_update(state.x_hat[T], P_pred, A_T, y, meas.sigma_obs_sq)
    x_tmp = np.zeros(state.m)
    x_tmp[T] = x_T
    return x_tmp, P_tmp, S


def fen_value(residual, innovation_cov) -> float:
    """Filtering error norm ``r' Sigma^{-1} r``."""
    r = np.asarray(residual, dtype=float)
    if not r.any():
        return 0.0
    return float(r @ spd_solve(innovation_cov, r))


def fen_test(residual, innovation_cov, alpha_fe: float) -> bool:
    return fen_value(residual, innovation_cov) > alpha_fe


def _ls_fen(residual, sigma_obs_sq):
    rr = float(residual @ residual)
    if rr == 0.0:
        return 0.0
    return rr / sigma_obs_sq if sigma_obs_sq > 0 else math.inf


def _detect_additions(state, residual, fen, meas, th, info):
    """CS on the filtering residual; returns the accepted new support."""
    info.fen = fen
    if not fen > th.alpha_fe:
        return state.T
    sol = solve_ds(DsProblem(meas.A, residual, meas.eps))
    info.beta_hat = sol.beta_hat
    added = threshold_additions(sol.beta_hat, state.T, th.alpha_a, th.max_add)
    if added.size == 0:
        return state.T
    T_new = np.union1d(state.T, added).astype(np.int64)
    A_T = columns(meas.A, T_new)
    if T_new.size > meas.n or eig_extremes(A_T.T @ A_T)[0] < LAMBDA_MIN_TOL:
        info.rejected = added
        return state.T
    info.added = added
    return T_new


def _ls_on(meas, T, y):
    A_T = columns(meas.A, T)
    x = np.zeros(meas.m)
    x[T] = least_squares(A_T, y)
    if T.size:
        P = meas.sigma_obs_sq * spd_solve(A_T.T @ A_T, np.eye(T.size))
    else:
        P = np.zeros((0, 0))
    return x, 0.5 * (P + P.T)


def _finish(state, t, T_new, x_hat, P, th, info):
    """Deletion check and bookkeeping shared by KF-CS and LS-CS."""
    changed = not np.array_equal(T_new, state.T)
    since = t if changed else state.support_unchanged_since
    recent = deque(state.recent_estimates, maxlen=th.k_prime)
    recent.append(x_hat)
    if th.deletion_enabled and t - since >= th.k and len(recent) == th.k_prime:
        energy = np.mean(np.square(np.array(recent)[:, T_new]), axis=0)
        zero = T_new[energy < th.alpha_z]
        if zero.size:
            keep = ~np.isin(T_new, zero)
            T_new = T_new[keep]
            P = P[np.ix_(keep, keep)]
            x_hat = x_hat.copy()
            x_hat[zero] = 0.0
            recent[-1] = x_hat
            info.deleted = zero
            since = t
    return FilterState(t, T_new, x_hat, P, since, recent, info)


def kfcs_step(state: FilterState, y, meas: MeasurementModel, sys: SystemModel,
              th: Thresholds) -> FilterState:
    """One step of KF-CS: temporary KF, CS on the residual, KF, deletions."""
    y = np.asarray(y, dtype=float)
    t = state.t + 1
    info = StepInfo()
    x_tmp, _, S = kf_temporary(state, y, meas, sys)
    info.x_tmp = x_tmp
    residual = y - meas.A @ x_tmp
    T_new = _detect_additions(state, residual, fen_value(residual, S), meas, th, info)

    if th.final_ls and T_new.size != state.T.size:
        x_hat, P = _ls_on(meas, T_new, y)
    else:
        x_prior, P_pred = _expand(state, T_new, sys)
        x_T, P, _ = _kf_update(x_prior, P_pred, columns(meas.A, T_new), y, meas.sigma_obs_sq)
        x_hat = np.zeros(state.m)
        x_hat[T_new] = x_T
    return _finish(state, t, T_new, x_hat, P, th, info)


def lscs_step(state: FilterState, y, meas: MeasurementModel, th: Thresholds) -> FilterState:
    """One step of LS-CS: KF-CS with both KF updates replaced by least squares.

    The addition gate uses ``||r||^2 / sigma_obs^2`` since LS carries no
    prior covariance.
    """
    y = np.asarray(y, dtype=float)
    t = state.t + 1
    info = StepInfo()
    x_tmp, _ = _ls_on(meas, state.T, y)
    info.x_tmp = x_tmp
    residual = y - meas.A @ x_tmp
    fen = _ls_fen(residual, meas.sigma_obs_sq)
    T_new = _detect_additions(state, residual, fen, meas, th, info)
    x_hat, P = _ls_on(meas, T_new, y)
    return _finish(state, t, T_new, x_hat, P, th, info)


def ga_kf_step(state: FilterState, y, meas: MeasurementModel, sys: SystemModel,
               true_support) -> FilterState:
    """Genie-aided KF: the full KF run on the true support ``N_t``."""
    y = np.asarray(y, dtype=float)
    N = as_index_set(true_support, state.m)
    keep = np.isin(state.T, N)
    if not keep.all():
        state = FilterState(state.t, state.T[keep], state.x_hat, state.P[np.ix_(keep, keep)])
    x_prior, P_pred = _expand(state, N, sys)
    x_N, P, _ = _kf_update(x_prior, P_pred, columns(meas.A, N), y, meas.sigma_obs_sq)
    x_hat = np.zeros(state.m)
    x_hat[N] = x_N
    since = state.t + 1 if not np.array_equal(N, state.T) else state.support_unchanged_since
    return FilterState(state.t + 1, N, x_hat, P, since)


def ga_ls_step(state: FilterState, y, meas: MeasurementModel, true_support) -> FilterState:
    """Genie-aided LS: least squares on the true support ``N_t``."""
    N = as_index_set(true_support, state.m)
    x_hat, P = _ls_on(meas, N, np.asarray(y, dtype=float))
    since = state.t + 1 if not np.array_equal(N, state.T) else state.support_unchanged_since
    return FilterState(state.t + 1, N, x_hat, P, since)


def simple_cs_step(y, meas: MeasurementModel, alpha: float):
    """Gauss-Dantzig on the raw observation; returns ``(support, x_hat)``."""
    y = np.asarray(y, dtype=float)
    if not y.any():
        return np.zeros(0, dtype=np.int64), np.zeros(meas.m)
    return gauss_dantzig(DsProblem(meas.A, y, meas.eps), alpha)
