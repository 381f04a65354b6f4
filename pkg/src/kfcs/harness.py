"""Seeded Monte Carlo experiments comparing all estimators on shared trajectories.

Each trial draws a support schedule, a signal trajectory and observation
noise from its own seed streams, then runs every selected algorithm
causally over the horizon.  Aggregation is an ordered reduction by trial
index, so results do not depend on the worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import filters as F
from .dantzig import ConvergenceError, default_max_add
from .dantzig import lambda_m as _lambda_m
from .model import (
    MeasurementModel,
    gen_matrix,
    published_sigma_obs_sq,
    random_schedule,
    rng_for,
    simulate,
)
from .numerics import ContractError, SingularMatrixError

__all__ = [
    "ALGORITHMS",
    "ABORT_FRACTION",
    "ThresholdSettings",
    "ExperimentConfig",
    "preset",
    "PRESETS",
    "Abort",
    "MseTrace",
    "ExperimentFailed",
    "SummaryRow",
    "build_matrix",
    "build_schedule",
    "run_experiment",
    "summarize",
    "trace_trajectory",
    "write_trace_csv",
    "write_summary_csv",
    "write_plot_script",
]

ALGORITHMS = ("kfcs", "lscs", "simple_cs", "ga_kf", "ga_ls")
ABORT_FRACTION = 0.05

_SCHEDULES = {
    "experiment1": {1: 8, 10: 4, 20: 4, 30: 4},
    "experiment2": {1: 8, **{t: 2 for t in range(10, 51, 5)}},
}


@dataclass
class ThresholdSettings:
    """Thresholds as configured.  ``None`` means "derive from the model":
    ``alpha_a = 9 sigma_obs^2``, ``alpha_fe = 2n``, ``alpha_z = sigma_obs^2``,
    ``max_add = floor(1.25 n / log2 m)``.  ``max_add = -1`` removes the cap."""

    alpha_a: float | None = None
    alpha_fe: float | None = None
    alpha_z: float | None = None
    k: int = 5
    k_prime: int = 3
    max_add: int | None = None
    final_ls: bool = False
    deletion_enabled: bool = True


@dataclass
class ExperimentConfig:
    m: int = 256
    n: int = 72
    schedule: str = "experiment1"
    custom_schedule: str = ""
    sigma_sys_sq: float = 1.0
    sigma_init_sq: float = 3.0
    sigma_obs_sq: float | None = None
    thresholds: ThresholdSettings = field(default_factory=ThresholdSettings)
    lambda_log_base: str = "2"
    algorithms: tuple = ALGORITHMS
    n_trials: int = 100
    horizon: int = 100
    master_seed: int = 0
    noise_kind: str = "gaussian"
    shared_matrix: bool = True
    shared_schedule: bool = False
    simple_cs_alpha: float | None = None
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.thresholds, dict):
            self.thresholds = ThresholdSettings(**self.thresholds)
        self.algorithms = tuple(self.algorithms)
        self.lambda_log_base = str(self.lambda_log_base)
        bad = set(self.algorithms) - set(ALGORITHMS)
        if bad or not self.algorithms:
            raise ContractError(f"unknown or empty algorithm selection: {sorted(bad)}")
        if self.lambda_log_base not in ("2", "e"):
            raise ContractError("lambda_log_base must be '2' or 'e'")
        if self.n_trials < 1:
            raise ContractError("n_trials must be at least 1")
        if not 0 < self.n < self.m:
            raise ContractError(f"need 0 < n < m, got n={self.n}, m={self.m}")
        if self.workers < 1:
            raise ContractError("workers must be at least 1")
        sizes = self.schedule_sizes()
        if sizes and self.horizon < max(sizes):
            raise ContractError(f"horizon {self.horizon} ends before the last addition at {max(sizes)}")
        if sum(sizes.values()) > self.m:
            raise ContractError("schedule adds more indices than coordinates")
        self.resolved_thresholds()

    def schedule_sizes(self) -> dict:
        if self.schedule in _SCHEDULES:
            return dict(_SCHEDULES[self.schedule])
        if self.schedule != "custom":
            raise ContractError(f"unknown schedule {self.schedule!r}")
        sizes = {}
        for item in filter(None, (s.strip() for s in self.custom_schedule.split(","))):
            t, _, count = item.partition(":")
            try:
                sizes[int(t)] = int(count)
            except ValueError:
                raise ContractError(f"bad custom schedule entry {item!r}, expected t:count") from None
        return sizes

    @property
    def obs_var(self) -> float:
        return published_sigma_obs_sq(self.n) if self.sigma_obs_sq is None else float(self.sigma_obs_sq)

    @property
    def lambda_m(self) -> float:
        return _lambda_m(self.m, 2.0 if self.lambda_log_base == "2" else math.e)

    def resolved_thresholds(self) -> F.Thresholds:
        s = self.thresholds
        s2 = self.obs_var
        max_add = default_max_add(self.n, self.m) if s.max_add is None else s.max_add
        return F.Thresholds(
            alpha_a=9.0 * s2 if s.alpha_a is None else s.alpha_a,
            alpha_fe=2.0 * self.n if s.alpha_fe is None else s.alpha_fe,
            alpha_z=s2 if s.alpha_z is None else s.alpha_z,
            k=s.k,
            k_prime=s.k_prime,
            max_add=None if max_add < 0 else max_add,
            final_ls=s.final_ls,
            deletion_enabled=s.deletion_enabled,
        )

    @property
    def cs_alpha(self) -> float:
        """Gauss-Dantzig threshold for simple CS; defaults to ``alpha_a``."""
        if self.simple_cs_alpha is not None:
            return float(self.simple_cs_alpha)
        return self.resolved_thresholds().alpha_a

    def resolved(self) -> "ExperimentConfig":
        """Copy with every derived value made explicit (for manifests)."""
        th = self.resolved_thresholds()
        settings = ThresholdSettings(
            th.alpha_a, th.alpha_fe, th.alpha_z, th.k, th.k_prime,
            -1 if th.max_add is None else th.max_add, th.final_ls, th.deletion_enabled,
        )
        return dataclasses.replace(self, sigma_obs_sq=self.obs_var, thresholds=settings,
                                   simple_cs_alpha=self.cs_alpha)

    def to_flat(self) -> dict:
        """Flat dict with dotted keys; ``None`` values are omitted."""
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "thresholds":
                for g in dataclasses.fields(v):
                    tv = getattr(v, g.name)
                    if tv is not None:
                        out[f"thresholds.{g.name}"] = tv
            elif v is not None:
                out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_flat(cls, flat: dict, base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        """Apply dotted-key values on top of ``base`` (default: experiment 1)."""
        base = preset("experiment1") if base is None else base
        top = {f.name: f for f in dataclasses.fields(cls)}
        th_fields = {f.name for f in dataclasses.fields(ThresholdSettings)}
        kw, th = {}, dataclasses.asdict(base.thresholds)
        for key, value in flat.items():
            if key.startswith("thresholds."):
                name = key.split(".", 1)[1]
                if name not in th_fields:
                    raise ContractError(f"unknown config key {key!r}")
                th[name] = value
            elif key in top and key != "thresholds":
                kw[key] = value
            else:
                raise ContractError(f"unknown config key {key!r}")
        return dataclasses.replace(base, thresholds=ThresholdSettings(**th), **kw)


def preset(name: str) -> ExperimentConfig:
    """Published simulation settings: m=256, n=72, 100 trials of 100 steps."""
    if name not in PRESETS:
        raise ContractError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ExperimentConfig(schedule=name)


PRESETS = ("experiment1", "experiment2")


@dataclass
class Abort:
    trial: int
    t: int
    algorithm: str
    cause: str


@dataclass
class MseTrace:
    """Per-trial squared errors and support errors, ``(trials, horizon)`` per algorithm."""

    algorithms: tuple
    horizon: int
    n_trials: int
    trials: np.ndarray
    errors: dict
    support_errors: dict
    aborts: list = field(default_factory=list)

    def __post_init__(self):
        if self.trials.size + len(self.aborts) != self.n_trials:
            raise ContractError("completed plus aborted trials must equal the configured count")

    @property
    def times(self) -> np.ndarray:
        return np.arange(1, self.horizon + 1)

    def mse_mean(self, alg: str) -> np.ndarray:
        e = self.errors[alg]
        return e.mean(axis=0) if e.shape[0] else np.full(self.horizon, np.nan)

    def mse_stderr(self, alg: str) -> np.ndarray:
        e = self.errors[alg]
        if e.shape[0] < 2:
            return np.zeros(self.horizon)
        return e.std(axis=0, ddof=1) / math.sqrt(e.shape[0])

    def support_err_mean(self, alg: str) -> np.ndarray:
        e = self.support_errors[alg]
        return e.mean(axis=0) if e.shape[0] else np.full(self.horizon, np.nan)

    def window_mean(self, alg: str, t_first: int, t_last: int) -> float:
        """Mean MSE over times ``t_first..t_last`` inclusive."""
        return float(self.mse_mean(alg)[t_first - 1:t_last].mean())


class ExperimentFailed(RuntimeError):
    def __init__(self, msg, trace: MseTrace):
        super().__init__(msg)
        self.trace = trace


def build_matrix(cfg: ExperimentConfig, trial: int = 0) -> MeasurementModel:
    idx = 0 if cfg.shared_matrix else trial
    return gen_matrix(cfg.n, cfg.m, rng_for(cfg.master_seed, "matrix", idx),
                      sigma_obs_sq=cfg.obs_var, lam=cfg.lambda_m, noise_kind=cfg.noise_kind)


def build_schedule(cfg: ExperimentConfig, trial: int):
    idx = 0 if cfg.shared_schedule else trial
    rng = rng_for(cfg.master_seed, "schedule", idx)
    return random_schedule(cfg.schedule_sizes(), cfg.m, rng, cfg.sigma_sys_sq, cfg.sigma_init_sq)


def _trajectory(cfg: ExperimentConfig, meas: MeasurementModel, trial: int):
    """Yield ``(true_state, y, {alg: (x_hat, support, info)})`` for each time step."""
    sysm = build_schedule(cfg, trial)
    states, Y = simulate(sysm, meas, cfg.horizon,
                         rng_for(cfg.master_seed, "signal", trial),
                         rng_for(cfg.master_seed, "noise", trial))
    th = cfg.resolved_thresholds()
    fs = {alg: F.initial_state(cfg.m, k_prime=th.k_prime) for alg in cfg.algorithms}
    for st, y in zip(states, Y):
        out = {}
        for alg in cfg.algorithms:
            try:
                if alg == "kfcs":
                    fs[alg] = F.kfcs_step(fs[alg], y, meas, sysm, th)
                elif alg == "lscs":
                    fs[alg] = F.lscs_step(fs[alg], y, meas, th)
                elif alg == "ga_kf":
                    fs[alg] = F.ga_kf_step(fs[alg], y, meas, sysm, st.N)
                elif alg == "ga_ls":
                    fs[alg] = F.ga_ls_step(fs[alg], y, meas, st.N)
                else:
                    T, x = F.simple_cs_step(y, meas, cfg.cs_alpha)
                    out[alg] = (x, T, None)
                    continue
            except (SingularMatrixError, ConvergenceError, np.linalg.LinAlgError) as exc:
                raise _TrialAbort(Abort(-1, st.t, alg, f"{type(exc).__name__}: {exc}")) from exc
            s = fs[alg]
            out[alg] = (s.x_hat, s.T, s.info)
        yield st, y, out


class _TrialAbort(Exception):
    def __init__(self, abort: Abort):
        super().__init__(abort.cause)
        self.abort = abort


def _run_trial(cfg: ExperimentConfig, meas: MeasurementModel | None, trial: int):
    if meas is None:
        meas = build_matrix(cfg, trial)
    err = np.zeros((len(cfg.algorithms), cfg.horizon))
    supp = np.zeros_like(err)
    try:
        for i, (st, _, out) in enumerate(_trajectory(cfg, meas, trial)):
            for j, alg in enumerate(cfg.algorithms):
                x, T, _ = out[alg]
                err[j, i] = float(np.sum((st.x - x) ** 2))
                supp[j, i] = np.setxor1d(T, st.N).size
    except _TrialAbort as exc:
        return trial, None, None, dataclasses.replace(exc.abort, trial=trial)
    return trial, err, supp, None


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> MseTrace:
    """Run all trials; raises :class:`ExperimentFailed` when more than 5% abort."""
    workers = cfg.workers if workers is None else workers
    meas = build_matrix(cfg) if cfg.shared_matrix else None
    job = partial(_run_trial, cfg, meas)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(cfg.n_trials)))
    else:
        results = [job(i) for i in range(cfg.n_trials)]

    done = [r for r in results if r[3] is None]
    aborts = [r[3] for r in results if r[3] is not None]
    A = len(cfg.algorithms)
    err = np.array([r[1] for r in done]).reshape(len(done), A, cfg.horizon)
    supp = np.array([r[2] for r in done]).reshape(len(done), A, cfg.horizon)
    trace = MseTrace(
        algorithms=cfg.algorithms,
        horizon=cfg.horizon,
        n_trials=cfg.n_trials,
        trials=np.array([r[0] for r in done], dtype=np.int64),
        errors={alg: err[:, j, :] for j, alg in enumerate(cfg.algorithms)},
        support_errors={alg: supp[:, j, :] for j, alg in enumerate(cfg.algorithms)},
        aborts=aborts,
    )
    if len(aborts) > ABORT_FRACTION * cfg.n_trials:
        raise ExperimentFailed(f"{len(aborts)} of {cfg.n_trials} trials aborted", trace)
    return trace


@dataclass
class SummaryRow:
    algorithm: str
    peak_mse: float
    peak_time: int
    final_window_mse: float
    mean_support_err: float


def summarize(trace: MseTrace, window: int = 10) -> list[SummaryRow]:
    """Peak MSE and its (first) time, mean MSE over the last ``window`` steps,
    and the mean support error over the whole horizon."""
    rows = []
    for alg in trace.algorithms:
        mse = trace.mse_mean(alg)
        peak = int(np.argmax(mse))
        rows.append(SummaryRow(
            algorithm=alg,
            peak_mse=float(mse[peak]),
            peak_time=peak + 1,
            final_window_mse=float(mse[-window:].mean()),
            mean_support_err=float(trace.support_err_mean(alg).mean()),
        ))
    return rows


def _ids(a) -> str:
    return " ".join(str(int(i)) for i in a)


def trace_trajectory(cfg: ExperimentConfig, trial: int = 0) -> list[dict]:
    """Per-time diagnostics of one seeded trial.

    Columns: time, true support, and for each algorithm its support and
    squared error; KF-CS and LS-CS also report FEN, additions, rejected
    additions and deletions.
    """
    meas = build_matrix(cfg, trial)
    rows = []
    for st, _, out in _trajectory(cfg, meas, trial):
        row = {"time": st.t, "true_support": _ids(st.N)}
        for alg in cfg.algorithms:
            x, T, info = out[alg]
            row[f"{alg}_support"] = _ids(T)
            row[f"{alg}_sq_error"] = float(np.sum((st.x - x) ** 2))
            if alg in ("kfcs", "lscs"):
                row[f"{alg}_fen"] = "" if info.fen is None else info.fen
                row[f"{alg}_added"] = _ids(info.added)
                row[f"{alg}_rejected"] = _ids(info.rejected)
                row[f"{alg}_deleted"] = _ids(info.deleted)
        rows.append(row)
    return rows


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_rows(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})


def write_trace_csv(trace: MseTrace, path) -> None:
    rows = []
    for alg in trace.algorithms:
        mean, se, sup = trace.mse_mean(alg), trace.mse_stderr(alg), trace.support_err_mean(alg)
        for i, t in enumerate(trace.times):
            rows.append({"time": int(t), "algorithm": alg, "mse_mean": mean[i],
                         "mse_stderr": se[i], "support_err_mean": sup[i]})
    write_rows(rows, path)


def write_summary_csv(rows: list[SummaryRow], path) -> None:
    write_rows([dataclasses.asdict(r) for r in rows], path)


_PLOT_TEMPLATE = '''\
"""Plot MSE against time for each algorithm from {csv_name}."""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

series = defaultdict(lambda: ([], []))
with open("{csv_name}") as fh:
    for row in csv.DictReader(fh):
        t, y = series[row["algorithm"]]
        t.append(int(row["time"]))
        y.append(float(row["mse_mean"]))

for alg, (t, y) in series.items():
    plt.plot(t, y, label=alg)
plt.xlabel("time")
plt.ylabel("MSE")
plt.legend()
plt.savefig(sys.argv[1] if len(sys.argv) > 1 else "{png_name}")
'''


def write_plot_script(path, csv_name: str) -> None:
    """Write a standalone matplotlib script plotting the trace CSV."""
    png = csv_name.rsplit(".", 1)[0] + ".png"
    with open(path, "w") as fh:
        fh.write(_PLOT_TEMPLATE.format(csv_name=csv_name, png_name=png))
