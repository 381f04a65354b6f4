"""Ground truth: random-walk sparse signals, measurement matrices, noise.

Randomness comes from ``numpy.random.Generator`` objects seeded through
``SeedSequence``.  Each role (matrix, schedule, signal, noise) gets its own
stream (see :func:`rng_for`), so changing how many draws one role makes
leaves the others untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dantzig import lambda_m as _lambda_m
from .numerics import ContractError, as_index_set

__all__ = [
    "ROLES",
    "rng_for",
    "SystemModel",
    "MeasurementModel",
    "TrueState",
    "published_sigma_obs_sq",
    "gen_matrix",
    "step_signal",
    "measure",
    "published_schedule",
    "simulate",
]

ROLES = {"matrix": 0, "schedule": 1, "signal": 2, "noise": 3}


def rng_for(master_seed: int, role: str, trial: int = 0) -> np.random.Generator:
    """Independent generator for ``(master_seed, trial, role)``."""
    ss = np.random.SeedSequence([int(master_seed), int(trial), ROLES[role]])
    return np.random.Generator(np.random.PCG64(ss))


def published_sigma_obs_sq(n: int) -> float:
    """Observation noise variance ((1/3) sqrt(16/n))^2 used in the simulations."""
    return (math.sqrt(16.0 / n) / 3.0) ** 2


@dataclass
class SystemModel:
    """Random-walk model with a monotonically growing support.

    ``schedule`` is a list of ``(t, indices)`` pairs; ``indices`` join the
    support at time ``t``.
    """

    m: int
    sigma_sys_sq: float
    sigma_init_sq: float
    schedule: list = field(default_factory=list)

    def __post_init__(self):
        sched = [(int(t), as_index_set(idx, self.m)) for t, idx in self.schedule]
        times = [t for t, _ in sched]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ContractError("schedule times must be strictly increasing")
        if times and times[0] < 1:
            raise ContractError("additions start at t >= 1")
        allidx = np.concatenate([idx for _, idx in sched]) if sched else np.zeros(0, np.int64)
        if np.unique(allidx).size != allidx.size:
            raise ContractError("scheduled index sets must be pairwise disjoint")
        if self.sigma_sys_sq < 0 or self.sigma_init_sq < 0:
            raise ContractError("variances must be non-negative")
        self.schedule = sched

    def additions_at(self, t: int) -> np.ndarray:
        for ts, idx in self.schedule:
            if ts == t:
                return idx
        return np.zeros(0, dtype=np.int64)

    def support_at(self, t: int) -> np.ndarray:
        parts = [idx for ts, idx in self.schedule if ts <= t]
        if not parts:
            return np.zeros(0, dtype=np.int64)
        return np.sort(np.concatenate(parts))

    @property
    def s_max(self) -> int:
        return int(sum(idx.size for _, idx in self.schedule))

    @property
    def last_addition(self) -> int:
        return self.schedule[-1][0] if self.schedule else 0


@dataclass
class MeasurementModel:
    A: np.ndarray
    sigma_obs_sq: float
    lambda_m: float
    noise_kind: str = "gaussian"

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        n, m = self.A.shape
        if not n < m:
            raise ContractError(f"need fewer measurements than unknowns, got n={n}, m={m}")
        norms = np.linalg.norm(self.A, axis=0)
        if np.abs(norms - 1.0).max() > 1e-10:
            raise ContractError("measurement matrix columns must have unit norm")
        if self.noise_kind not in ("gaussian", "truncated_gaussian"):
            raise ContractError(f"unknown noise kind {self.noise_kind!r}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[1]

    @property
    def sigma_obs(self) -> float:
        return math.sqrt(self.sigma_obs_sq)

    @property
    def eps(self) -> float:
        """Dantzig selector constraint level lambda_m * sigma_obs."""
        return self.lambda_m * self.sigma_obs

    @property
    def noise_cutoff(self) -> float:
        """Truncation point making |A_i' w| <= lambda_m sigma_obs for every i."""
        return self.eps / np.abs(self.A).sum(axis=0).max()


@dataclass
class TrueState:
    t: int
    x: np.ndarray
    N: np.ndarray


def gen_matrix(n, m, seed, sigma_obs_sq=None, lam=None, noise_kind="gaussian",
               log_base=2.0) -> MeasurementModel:
    """i.i.d. Gaussian ``n x m`` matrix with columns normalised to unit length."""
    if not 0 < n < m:
        raise ContractError(f"need 0 < n < m, got n={n}, m={m}")
    rng = seed if isinstance(seed, np.random.Generator) else rng_for(seed, "matrix")
    A = rng.standard_normal((n, m))
    A /= np.linalg.norm(A, axis=0)
    if sigma_obs_sq is None:
        sigma_obs_sq = published_sigma_obs_sq(n)
    if lam is None:
        lam = _lambda_m(m, log_base)
    return MeasurementModel(A, sigma_obs_sq, lam, noise_kind)


def initial_state(m: int) -> TrueState:
    return TrueState(0, np.zeros(m), np.zeros(0, dtype=np.int64))


def step_signal(prev: TrueState, sys: SystemModel, rng: np.random.Generator) -> TrueState:
    """Advance the random walk from ``prev.t`` to ``prev.t + 1``.

    Coefficients already on the support take an N(0, sigma_sys^2) step;
    coefficients joining now start fresh from N(0, sigma_init^2).
    """
    t = prev.t + 1
    new = sys.additions_at(t)
    x = prev.x.copy()
    if prev.N.size:
        x[prev.N] += math.sqrt(sys.sigma_sys_sq) * rng.standard_normal(prev.N.size)
    if new.size:
        x[new] = math.sqrt(sys.sigma_init_sq) * rng.standard_normal(new.size)
    N = np.union1d(prev.N, new).astype(np.int64)
    return TrueState(t, x, N)


def _truncated_normal(rng, sigma, cutoff, size):
    w = sigma * rng.standard_normal(size)
    bad = np.abs(w) > cutoff
    while bad.any():
        w[bad] = sigma * rng.standard_normal(int(bad.sum()))
        bad = np.abs(w) > cutoff
    return w


def measure(x, meas: MeasurementModel, rng: np.random.Generator) -> np.ndarray:
    """Observation ``A x + w``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (meas.m,):
        raise ContractError(f"signal has shape {x.shape}, expected ({meas.m},)")
    if meas.sigma_obs_sq == 0:
        return meas.A @ x
    if meas.noise_kind == "truncated_gaussian":
        w = _truncated_normal(rng, meas.sigma_obs, meas.noise_cutoff, meas.n)
    else:
        w = meas.sigma_obs * rng.standard_normal(meas.n)
    return meas.A @ x + w


def random_schedule(sizes, m, rng, sigma_sys_sq=1.0, sigma_init_sq=3.0) -> SystemModel:
    """Schedule adding ``sizes[t]`` fresh uniformly drawn indices at each ``t``."""
    if sum(sizes.values()) > m:
        raise ContractError("more scheduled additions than coordinates")
    perm = rng.permutation(m)
    sched, pos = [], 0
    for t in sorted(sizes):
        k = int(sizes[t])
        sched.append((t, np.sort(perm[pos:pos + k])))
        pos += k
    return SystemModel(m, sigma_sys_sq, sigma_init_sq, sched)


def published_schedule(which: str, m: int, seed, sigma_sys_sq=1.0, sigma_init_sq=None) -> SystemModel:
    """Support schedules of the two published simulation studies.

    ``experiment1``: 8 indices at t=1 and 4 more at t=10, 20, 30.
    ``experiment2``: 8 at t=1 and 2 every 5 steps for 10 <= t <= 50.
    """
    if m < 26:
        raise ContractError("the published schedules need m >= 26")
    if which == "experiment1":
        sizes = {1: 8, 10: 4, 20: 4, 30: 4}
    elif which == "experiment2":
        sizes = {1: 8, **{t: 2 for t in range(10, 51, 5)}}
    else:
        raise ContractError(f"unknown schedule {which!r}")
    if sigma_init_sq is None:
        sigma_init_sq = 3.0 * sigma_sys_sq
    rng = seed if isinstance(seed, np.random.Generator) else rng_for(seed, "schedule")
    return random_schedule(sizes, m, rng, sigma_sys_sq, sigma_init_sq)


def simulate(sys: SystemModel, meas: MeasurementModel, horizon: int,
             signal_rng, noise_rng):
    """Trajectory ``x_1..x_horizon`` with observations ``y_1..y_horizon``."""
    states, ys = [], []
    state = initial_state(sys.m)
    for _ in range(horizon):
        state = step_signal(state, sys, signal_rng)
        states.append(state)
        ys.append(measure(state.x, meas, noise_rng))
    return states, np.array(ys).reshape(horizon, meas.n)
