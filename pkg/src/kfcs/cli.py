"""Command-line entry point: ``kfcs {run,audit,bounds,trace}``.

Configuration is a flat TOML file with dotted keys (nested tables are
flattened), or the name of a built-in preset.  ``--set key=value``
overrides win over the file.  Every command writes its resolved
configuration to ``manifest.toml`` next to its CSV outputs, and never
writes outside ``--out``.

Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 enumeration
budget exceeded, 4 assumption check failed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import os
import sys

import numpy as np
import tomli
import tomli_w

from . import harness as H
from .bounds import BoundInputs, DomainError, b1, dantzig_constants, min_over_S_bound, b_cslse, tau_epsilon
from .dantzig import ConvergenceError
from .metrics import DEFAULT_BUDGET, BudgetExceededError, incoherence_report
from .numerics import ContractError, SingularMatrixError

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_BUDGET, EXIT_CHECK = 0, 1, 2, 3, 4

# Keys read by individual subcommands rather than the experiment config.
_EXTRA_DEFAULTS = {
    "audit.s_max": None,
    "audit.s_fa": None,
    "audit.budget": DEFAULT_BUDGET,
    "audit.matrix": "",
    "bounds.eps": 0.1,
    "bounds.c1": None,
    "bounds.s_max": None,
    "bounds.budget": DEFAULT_BUDGET,
    "bounds.delta_t": 0.0,
    "bounds.theta": 0.0,
    "bounds.t_size": 0,
    "bounds.delta_size": 0,
    "bounds.e_xdelta_sq": 0.0,
    "bounds.s_range": None,
    "trace.trial": 0,
}

# Provenance keys written to manifests; ignored when a manifest is read back.
_MANIFEST_ONLY = ("command", "seed_scheme")

SEED_SCHEME = "numpy SeedSequence([master_seed, trial, role]) with PCG64; roles matrix=0 schedule=1 signal=2 noise=3"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _parse_value(text: str):
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def load_config(source: str, overrides=(), seed: int | None = None):
    """Resolve ``(ExperimentConfig, extras)`` from a preset name or TOML path."""
    if source in H.PRESETS:
        flat = {"preset": source}
    else:
        if not os.path.isfile(source):
            raise UsageError(f"config file not found: {source}")
        try:
            with open(source, "rb") as fh:
                flat = _flatten(tomli.load(fh))
        except tomli.TOMLDecodeError as exc:
            raise UsageError(f"cannot parse config {source}: {exc}") from None
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"override {item!r} is not of the form key=value")
        flat[key.strip()] = _parse_value(value.strip())
    if seed is not None:
        flat["master_seed"] = seed
    for key in _MANIFEST_ONLY:
        flat.pop(key, None)

    base_name = flat.pop("preset", flat.get("schedule") if flat.get("schedule") in H.PRESETS else "experiment1")
    extras = dict(_EXTRA_DEFAULTS)
    exp = {}
    for key, value in flat.items():
        if key in extras:
            extras[key] = value
        elif key.split(".", 1)[0] in ("audit", "bounds", "trace"):
            raise UsageError(f"unknown config key {key!r}")
        else:
            exp[key] = value
    try:
        cfg = H.ExperimentConfig.from_flat(exp, base=H.preset(base_name))
    except (ContractError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    return cfg, extras


def _write_manifest(out_dir, command, cfg, extras, **more):
    doc = {"command": command, "seed_scheme": SEED_SCHEME}
    doc.update(cfg.resolved().to_flat())
    doc.update({k: v for k, v in extras.items() if v is not None and k.split(".")[0] == command})
    doc.update(more)
    with open(os.path.join(out_dir, "manifest.toml"), "wb") as fh:
        tomli_w.dump(doc, fh)


def _load_matrix(path):
    A = np.loadtxt(path, delimiter=",", ndmin=2)
    return A


def cmd_run(cfg, extras, out_dir) -> int:
    _write_manifest(out_dir, "run", cfg, extras)
    code = EXIT_OK
    try:
        trace = H.run_experiment(cfg)
    except H.ExperimentFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        trace, code = exc.trace, EXIT_RUNTIME
    name = f"{cfg.schedule}_mse.csv"
    H.write_trace_csv(trace, os.path.join(out_dir, name))
    rows = H.summarize(trace)
    H.write_summary_csv(rows, os.path.join(out_dir, "summary.csv"))
    H.write_plot_script(os.path.join(out_dir, "plot_mse.py"), name)
    H.write_rows([dataclasses.asdict(a) for a in trace.aborts], os.path.join(out_dir, "aborts.csv"))
    for r in rows:
        print(f"{r.algorithm}: peak {r.peak_mse:.4g} at t={r.peak_time}, "
              f"final-window {r.final_window_mse:.4g}, support error {r.mean_support_err:.3g}")
    return code


def _matrix_for(cfg, extras, key):
    path = extras[key]
    return _load_matrix(path) if path else H.build_matrix(cfg).A


def cmd_audit(cfg, extras, out_dir) -> int:
    _write_manifest(out_dir, "audit", cfg, extras)
    A = _matrix_for(cfg, extras, "audit.matrix")
    s_max = extras["audit.s_max"]
    s_max = sum(cfg.schedule_sizes().values()) if s_max is None else int(s_max)
    s_fa = extras["audit.s_fa"]
    if s_fa is None:
        s_fa = cfg.resolved_thresholds().max_add or 0
    try:
        rep = incoherence_report(A, s_max, int(s_fa), float(extras["audit.budget"]))
    except BudgetExceededError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    rows = [{"quantity": f"delta_{S}", "value": v} for S, v in rep.delta.items()]
    rows += [{"quantity": f"theta_{a}_{b}", "value": v} for (a, b), v in rep.theta.items()]
    rows += [{"quantity": name, "value": int(ok)} for name, ok in rep.checks.items()]
    H.write_rows(rows, os.path.join(out_dir, "audit.csv"))
    for S, v in rep.delta.items():
        print(f"delta_{S} = {v:.4f}")
    for (a, b), v in rep.theta.items():
        print(f"theta_{a},{b} = {v:.4f}")
    for name, ok in rep.checks.items():
        print(f"{name}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if rep.passed else EXIT_CHECK


def cmd_bounds(cfg, extras, out_dir) -> int:
    _write_manifest(out_dir, "bounds", cfg, extras)
    lam = cfg.lambda_m
    s_max = extras["bounds.s_max"]
    s_max = sum(cfg.schedule_sizes().values()) if s_max is None else int(s_max)
    if extras["bounds.c1"] is not None:
        c = float(extras["bounds.c1"])
        C1, C2, C3 = c, 2.0 * c * c * lam * lam, 2.0 * c * c
    else:
        c1, C2, C3 = dantzig_constants(H.build_matrix(cfg).A, lam, float(extras["bounds.budget"]))
        try:
            C1 = c1(s_max)
        except BudgetExceededError as exc:
            print(f"budget exceeded: {exc}", file=sys.stderr)
            return EXIT_BUDGET
    inputs = BoundInputs(
        C1=C1, C2=C2, C3=C3, lambda_m=lam, S_max=s_max, sigma_obs_sq=cfg.obs_var,
        delta_T=float(extras["bounds.delta_t"]), theta_T_Delta=float(extras["bounds.theta"]),
        T_size=int(extras["bounds.t_size"]), Delta_size=int(extras["bounds.delta_size"]),
        E_xDelta_sq=float(extras["bounds.e_xdelta_sq"]),
    )
    s_hi = extras["bounds.s_range"]
    s_hi = max(inputs.T_size + inputs.Delta_size, 1) if s_hi is None else int(s_hi)
    try:
        bound1 = b1(inputs)
        tau = tau_epsilon(float(extras["bounds.eps"]), inputs, cfg.sigma_sys_sq) if math.isfinite(bound1) else None
        table = [{"S": S, "b_cslse": b_cslse(S, inputs)} for S in range(1, s_hi + 1)]
        S_star, best = min_over_S_bound(inputs, range(1, s_hi + 1))
    except BudgetExceededError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except DomainError as exc:
        print(f"bound undefined: {exc}", file=sys.stderr)
        return EXIT_CHECK
    H.write_rows(table, os.path.join(out_dir, "bounds.csv"))
    summary = [{"quantity": "B1", "value": bound1},
               {"quantity": "tau_eps", "value": "" if tau is None else tau},
               {"quantity": "argmin_S", "value": S_star},
               {"quantity": "min_b_cslse", "value": best}]
    H.write_rows(summary, os.path.join(out_dir, "bounds_summary.csv"))
    print(f"B1 = {bound1:.6g}")
    print(f"tau_eps = {tau}")
    print(f"min over S of B_CSLSE = {best:.6g} at S = {S_star}")
    return EXIT_OK


def cmd_trace(cfg, extras, out_dir) -> int:
    _write_manifest(out_dir, "trace", cfg, extras)
    rows = H.trace_trajectory(cfg, int(extras["trace.trial"]))
    H.write_rows(rows, os.path.join(out_dir, "trace.csv"))
    print(f"wrote {len(rows)} time steps")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "audit": cmd_audit, "bounds": cmd_bounds, "trace": cmd_trace}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kfcs", description="Sparse-signal tracking experiments and bound calculators.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", default="experiment1",
                       help="preset name (experiment1, experiment2) or TOML file")
        s.add_argument("--out", default="out", help="output directory")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        s.add_argument("--seed", type=int, default=None, help="master seed")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg, extras = load_config(args.config, args.set, args.seed)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    os.makedirs(args.out, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, extras, args.out)
    except (ContractError, DomainError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, (ContractError, OSError)) else EXIT_RUNTIME
    except (SingularMatrixError, ConvergenceError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
