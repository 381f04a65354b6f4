"""Empirical checks of the error bounds on a small, exactly certified instance.

The instance is the simplex equiangular tight frame: 13 unit vectors in
R^12 with pairwise inner product -1/12.  Its Gram matrix is
``(13/12) I - (1/12) 11'``, so every ``delta_S = (S - 1)/12`` and the
incoherence conditions for ``S_max = 2`` hold with room to spare
(``delta_4 + delta_6 = 2/3``).  All constants are still enumerated, never
taken from the closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import filters as F
from .bounds import BoundInputs, b1, dantzig_constants, min_over_S_bound, tau_epsilon
from .dantzig import DsProblem, lambda_m, solve_ds
from .metrics import IncoherenceReport, delta_S, incoherence_report, theta_S_Sp, theorem1_condition
from .model import MeasurementModel, SystemModel, measure, rng_for, simulate
from .numerics import ContractError, columns, eig_extremes, least_squares

__all__ = [
    "simplex_etf",
    "CertifiedInstance",
    "certified_instance",
    "Lemma2Report",
    "lemma2_audit",
    "ConvergenceReport",
    "convergence_audit",
    "CslseReport",
    "cslse_audit",
]

# Small enough that the detection delay for eps = 0.1 is a handful of steps.
CERTIFIED_SIGMA_OBS_SQ = 1e-5


def simplex_etf(n: int) -> np.ndarray:
    """``n x (n+1)`` matrix of unit columns with pairwise inner products ``-1/n``.

    Columns are the centred standard basis of R^(n+1) written in the
    Helmert basis of the hyperplane orthogonal to the all-ones vector.
    """
    if n < 1:
        raise ContractError("need n >= 1")
    H = np.zeros((n, n + 1))
    for k in range(1, n + 1):
        H[k - 1, :k] = 1.0
        H[k - 1, k] = -k
        H[k - 1] /= math.sqrt(k * (k + 1))
    return H / np.linalg.norm(H, axis=0)


@dataclass
class CertifiedInstance:
    meas: MeasurementModel
    S_max: int
    report: IncoherenceReport
    C1: float
    c1: object
    c2: object
    c3: object

    @property
    def B1(self) -> float:
        return b1(self.bound_inputs())

    def bound_inputs(self, **kw) -> BoundInputs:
        return BoundInputs(C1=self.C1, C2=self.c2, C3=self.c3, lambda_m=self.meas.lambda_m,
                           S_max=self.S_max, sigma_obs_sq=self.meas.sigma_obs_sq, **kw)


def certified_instance(sigma_obs_sq: float = CERTIFIED_SIGMA_OBS_SQ, n: int = 12,
                       S_max: int = 2) -> CertifiedInstance:
    """Simplex-frame instance with truncated noise and enumerated constants.

    Raises ContractError if the enumerated constants fail the incoherence
    conditions (so the bound audits would be meaningless).
    """
    A = simplex_etf(n)
    lam = lambda_m(A.shape[1])
    meas = MeasurementModel(A, sigma_obs_sq, lam, "truncated_gaussian")
    report = incoherence_report(A, S_max, S_fa=0)
    if not report.passed:
        raise ContractError(f"instance fails incoherence checks: {report.checks}")
    c1, c2, c3 = dantzig_constants(A, lam)
    C1 = c1(S_max)
    if not math.isfinite(C1):
        raise ContractError("Dantzig selector constant is unbounded on this instance")
    return CertifiedInstance(meas, S_max, report, C1, c1, c2, c3)


def _schedule(inst: CertifiedInstance, rng, times, sigma_sys_sq=1.0):
    """One fresh index joins at each of ``times`` (new coefficients start at
    variance ``sigma_sys^2``, as for a plain random walk from zero)."""
    idx = rng.permutation(inst.meas.m)[: len(times)]
    return SystemModel(inst.meas.m, sigma_sys_sq, sigma_sys_sq,
                       [(t, [i]) for t, i in zip(times, idx)])


def _bound_thresholds(inst: CertifiedInstance) -> F.Thresholds:
    # DS runs at every step (alpha_fe = 0) and no deletions, so the estimated
    # support can only grow by threshold-B1 detections.
    return F.Thresholds(alpha_a=inst.B1, alpha_fe=0.0, alpha_z=0.0, max_add=None,
                        final_ls=True, deletion_enabled=False)


@dataclass
class Lemma2Report:
    B1: float
    n_trials: int
    n_checks: int
    false_additions: int
    worst_error: float

    def passed(self, slack: float = 1e-6) -> bool:
        return self.false_additions == 0 and self.worst_error <= self.B1 + slack


def lemma2_audit(n_trials: int = 200, horizon: int = 50, seed: int = 0,
                 inst: CertifiedInstance | None = None) -> Lemma2Report:
    """KF-CS with ``alpha_a = B1`` under bounded noise: count false additions and
    track the worst ``||x_t - x_tmp - beta_hat||^2`` against ``B1``."""
    inst = certified_instance() if inst is None else inst
    th = _bound_thresholds(inst)
    times = [1, 10][: inst.S_max] if inst.S_max <= 2 else list(range(1, 10 * inst.S_max, 10))
    false_add, checks, worst = 0, 0, 0.0
    for trial in range(n_trials):
        sysm = _schedule(inst, rng_for(seed, "schedule", trial), times)
        states, Y = simulate(sysm, inst.meas, horizon, rng_for(seed, "signal", trial),
                             rng_for(seed, "noise", trial))
        fs = F.initial_state(inst.meas.m)
        for st, y in zip(states, Y):
            fs = F.kfcs_step(fs, y, inst.meas, sysm, th)
            false_add += int(np.setdiff1d(fs.info.added, st.N).size)
            if fs.info.beta_hat is not None:
                checks += 1
                e = float(np.sum((st.x - fs.info.x_tmp - fs.info.beta_hat) ** 2))
                worst = max(worst, e)
    return Lemma2Report(inst.B1, n_trials, checks, false_add, worst)


@dataclass
class ConvergenceReport:
    tau: int
    t_check: int
    median_gap: float
    median_energy: float

    @property
    def ratio(self) -> float:
        return self.median_gap / self.median_energy


def convergence_audit(n_trials: int = 200, t_a_max: int = 10, eps: float = 0.1,
                      seed: int = 0, inst: CertifiedInstance | None = None) -> ConvergenceReport:
    """Median ``||x_hat_KFCS - x_hat_GAKF||^2`` at ``t_a_max + tau_eps`` versus
    the median signal energy, with additions ending at ``t_a_max``."""
    inst = certified_instance() if inst is None else inst
    th = _bound_thresholds(inst)
    tau = tau_epsilon(eps, inst.bound_inputs(), sigma_sys_sq=1.0)
    t_check = t_a_max + tau
    times = [1, t_a_max] if inst.S_max == 2 else np.linspace(1, t_a_max, inst.S_max).astype(int).tolist()
    gaps, energies = [], []
    for trial in range(n_trials):
        sysm = _schedule(inst, rng_for(seed, "schedule", trial), times)
        states, Y = simulate(sysm, inst.meas, t_check, rng_for(seed, "signal", trial),
                             rng_for(seed, "noise", trial))
        kf = F.initial_state(inst.meas.m)
        ga = F.initial_state(inst.meas.m)
        for st, y in zip(states, Y):
            kf = F.kfcs_step(kf, y, inst.meas, sysm, th)
            ga = F.ga_kf_step(ga, y, inst.meas, sysm, st.N)
        gaps.append(float(np.sum((kf.x_hat - ga.x_hat) ** 2)))
        energies.append(float(np.sum(states[-1].x ** 2)))
    return ConvergenceReport(tau, t_check, float(np.median(gaps)), float(np.median(energies)))


@dataclass
class CslseReport:
    t: int
    t_a: int
    precondition: bool
    compressible: bool
    n_draws: int
    mean_error: float
    bound: float
    S_star: int

    @property
    def passed(self) -> bool:
        return self.mean_error <= self.bound


def cslse_audit(n_draws: int = 10_000, seed: int = 0, t_a: int = 10, lag: int = 3,
                inst: CertifiedInstance | None = None) -> CslseReport:
    """Conditional error of CS applied to the least-squares residual.

    One coefficient ``a`` has been tracked since t=1; a second ``b`` joined
    at ``t_a`` and is still undetected, so ``T = {a}``, ``Delta = {b}``.  A
    genie-aided KF run on ``y_1..y_{t-1}`` gives the Gaussian conditional law
    of ``x_t``; fresh ``(x_t, w_t)`` pairs are drawn from it and the CS-LSE
    error is averaged and compared with ``min_S B_CSLSE(S)``.
    """
    inst = certified_instance() if inst is None else inst
    meas = inst.meas
    t = t_a + lag
    rng = rng_for(seed, "schedule")
    a, b = (int(i) for i in rng.permutation(meas.m)[:2])
    sysm = SystemModel(meas.m, 1.0, 1.0, [(1, [a]), (t_a, [b])])
    states, Y = simulate(sysm, meas, t - 1, rng_for(seed, "signal"), rng_for(seed, "noise"))
    ga = F.initial_state(meas.m)
    for st, y in zip(states, Y):
        ga = F.ga_kf_step(ga, y, meas, sysm, st.N)

    N = np.array(sorted((a, b)))
    mean = ga.x_hat[N]
    cov = ga.P + sysm.sigma_sys_sq * np.eye(N.size)
    T, D = np.array([a]), np.array([b])
    d_pos = np.searchsorted(N, D)
    second = np.outer(mean, mean) + cov
    E_D = second[np.ix_(d_pos, d_pos)]
    lam_max = eig_extremes(E_D)[1]

    delta_T = delta_S(meas.A, T.size)
    theta = theta_S_Sp(meas.A, T.size, D.size)
    pre = theorem1_condition(t, t_a, sysm.sigma_sys_sq, delta_T, theta, lam_max, meas.sigma_obs_sq)

    draw_rng = rng_for(seed, "noise", 1)
    L = np.linalg.cholesky(cov)
    A_T = columns(meas.A, T)
    total = 0.0
    beta_T_sq = np.zeros(T.size)
    for _ in range(n_draws):
        x = np.zeros(meas.m)
        x[N] = mean + L @ draw_rng.standard_normal(N.size)
        y = measure(x, meas, draw_rng)
        x_tmp = np.zeros(meas.m)
        x_tmp[T] = least_squares(A_T, y)
        beta = x - x_tmp
        beta_T_sq += beta[T] ** 2
        sol = solve_ds(DsProblem(meas.A, y - meas.A @ x_tmp, meas.eps))
        total += float(np.sum((beta - sol.beta_hat) ** 2))
    mean_error = total / n_draws
    compressible = bool(np.max(beta_T_sq / n_draws) < np.min(np.diag(second)))

    inputs = inst.bound_inputs(delta_T=delta_T, theta_T_Delta=theta, T_size=T.size,
                               Delta_size=D.size, E_xDelta_sq=float(np.trace(E_D)))
    S_star, bound = min_over_S_bound(inputs, range(1, T.size + D.size + 1))
    return CslseReport(t, t_a, pre, compressible, n_draws, mean_error, bound, S_star)
