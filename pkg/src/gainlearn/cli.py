"""Command-line surface: config-driven experiment runner plus direct access
to the oracle, the learners, the diagnostics, and the duality check.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
64 unknown subcommand / usage error.

`experiment` reproduces the batch-size / horizon sweep: for every (M, T)
cell and every seed it runs safeguarded SGD, writes one CSV per run, one
aggregate CSV per cell (mean and standard error of the normalized
optimality gap per iteration), and a metadata JSON holding the config hash,
the oracle gain, and the oracle cost. The normalized gap is
(J(L_k) - J(L*)) / (J(L0) - J(L*)).

Per-run CSVs carry a wall_ms column; the `learn` subcommand omits it so
that repeated runs with the same config and seed are byte-identical.
"""

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, diagnostics
from .config import ExperimentConfig, config_hash, load_config
from .errors import (
    ConfigError,
    ConvergenceError,
    DiagnosticError,
    DomainError,
    InitializationError,
    InstabilityError,
    NumericalError,
    StallError,
)
from .filtering import steady_state_gain
from .learner import RunRecord, SgdConfig, gd_run, initial_gain, sgd_run
from .objective import duality_check, steady_cost
from .seeding import derive_seed

_RUN_COLUMNS = ["iter", "J", "J_gap", "J_gap_normalized", "grad_norm", "rho",
                "eta_effective", "safeguard_flag", "wall_ms"]

_USAGE = """usage: gainlearn <subcommand> [options]

subcommands:
  experiment     run the full (M, T, seeds) sweep from a config file
  oracle         print the steady-state gain, covariance, and cost as JSON
  learn          run a single SGD (or exact-gradient) fit from a config file
  duality-check  compare the Monte-Carlo prediction error with its
                 closed-form adjoint evaluation
  diagnose       run verification checks and write reports

common options: --config PATH [--seed INT] [--out DIR] [--format csv|json]
                [--quiet]
"""


def _fmt(x) -> str:
    return repr(float(x))


def _run_rows(record: RunRecord, J_star: float, gap0: float):
    rows = []
    for k in range(len(record.costs)):
        J = record.costs[k]
        gap = J - J_star
        rows.append({
            "iter": k,
            "J": _fmt(J),
            "J_gap": _fmt(gap),
            "J_gap_normalized": _fmt(gap / gap0 if gap0 > 0 else math.nan),
            "grad_norm": _fmt(record.grad_norms[k]),
            "rho": _fmt(record.rhos[k]),
            "eta_effective": _fmt(record.etas[k]),
            "safeguard_flag": int(k in record.safeguard_iters()),
            "wall_ms": _fmt(record.wall_times[k] * 1e3),
        })
    return rows


def _write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)


def run_experiment(config: ExperimentConfig, out_dir=None, quiet=False) -> dict:
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = config.model

    gain_star, P_inf = steady_state_gain(model)
    J_star = steady_cost(model, gain_star)
    L0 = initial_gain(model.A, model.H, config.init_strategy,
                      L_user=config.init_gain)
    J0 = steady_cost(model, L0)
    gap0 = J0 - J_star
    if gap0 <= 0:
        raise NumericalError(
            "initial gain already optimal; the normalized gap is undefined "
            "(pick a different initialization in the config)"
        )

    meta = {
        "version": __version__,
        "config_hash": config_hash(config.raw),
        "seeds": list(config.sweep_seeds),
        "cells": [{"M": M, "T": T} for M in config.sweep_M for T in config.sweep_T],
        "L_star": gain_star.L.tolist(),
        "P_inf": P_inf.tolist(),
        "rho_star": gain_star.rho,
        "J_star": J_star,
        "L0": L0.L.tolist(),
        "J0": J0,
    }

    for M in config.sweep_M:
        for T in config.sweep_T:
            cell_dir = out / f"cell_M{M}_T{T}"
            cell_dir.mkdir(exist_ok=True)
            per_iter_gaps = []
            for seed in config.sweep_seeds:
                cfg = SgdConfig(
                    step_size=config.learner.step_size, batch_size=M,
                    horizon=T, max_iters=config.learner.max_iters,
                    seed=derive_seed(config.learner.seed, seed),
                    safeguard=config.learner.safeguard,
                    target_rho=config.learner.target_rho,
                )
                record = sgd_run(model, config.noise, L0, cfg, oracle=model)
                rows = _run_rows(record, J_star, gap0)
                if "csv" in config.formats:
                    _write_csv(cell_dir / f"run_seed{seed}.csv", rows, _RUN_COLUMNS)
                per_iter_gaps.append(
                    [(c - J_star) / gap0 for c in record.costs]
                )
            gaps = np.asarray(per_iter_gaps)
            agg_rows = [
                {
                    "iter": k,
                    "mean_gap_normalized": _fmt(np.mean(gaps[:, k])),
                    "stderr_gap_normalized": _fmt(
                        np.std(gaps[:, k]) / math.sqrt(gaps.shape[0])
                    ),
                }
                for k in range(gaps.shape[1])
            ]
            _write_csv(out / f"aggregate_M{M}_T{T}.csv", agg_rows,
                       ["iter", "mean_gap_normalized", "stderr_gap_normalized"])
            meta.setdefault("plateaus", {})[f"M{M}_T{T}"] = float(
                np.mean(gaps[:, -max(1, gaps.shape[1] // 5):])
            )
            if not quiet:
                print(f"cell M={M} T={T}: final mean normalized gap "
                      f"{np.mean(gaps[:, -1]):.4f}")

    with open(out / "metadata.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    return meta


def _cmd_experiment(args) -> int:
    config = load_config(args.config)
    run_experiment(config, out_dir=args.out, quiet=args.quiet)
    return 0


def _cmd_oracle(args) -> int:
    config = load_config(args.config)
    gain, P_inf = steady_state_gain(config.model)
    payload = {
        "L_star": gain.L.tolist(),
        "P_inf": P_inf.tolist(),
        "rho": gain.rho,
        "J_star": steady_cost(config.model, gain),
    }
    print(json.dumps(payload, indent=None if args.quiet else 2, sort_keys=True))
    return 0


def _cmd_learn(args) -> int:
    config = load_config(args.config)
    model = config.model
    cfg = config.learner
    if args.seed is not None:
        cfg = SgdConfig(step_size=cfg.step_size, batch_size=cfg.batch_size,
                        horizon=cfg.horizon, max_iters=cfg.max_iters,
                        seed=args.seed, safeguard=cfg.safeguard,
                        target_rho=cfg.target_rho)
    L0 = initial_gain(model.A, model.H, config.init_strategy,
                      L_user=config.init_gain)
    gain_star, _ = steady_state_gain(model)
    J_star = steady_cost(model, gain_star)
    J0 = steady_cost(model, L0)
    gap0 = J0 - J_star

    if args.algorithm == "gd":
        record = gd_run(model, L0)
    else:
        record = sgd_run(model, config.noise, L0, cfg, oracle=model)
    rows = _run_rows(record, J_star, gap0 if gap0 > 0 else math.nan)

    out = Path(args.out or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        path = out / "learn.json"
        with open(path, "w") as fh:
            json.dump({"columns": [c for c in _RUN_COLUMNS if c != "wall_ms"],
                       "rows": [{k: v for k, v in r.items() if k != "wall_ms"}
                                for r in rows]},
                      fh, indent=2, sort_keys=True)
    else:
        path = out / "learn.csv"
        # wall_ms is excluded so identical (config, seed) reruns are
        # byte-identical
        _write_csv(path, rows, [c for c in _RUN_COLUMNS if c != "wall_ms"])
    if not args.quiet:
        final_gain = record.iterates[-1]
        print(f"final cost {record.costs[-1]:.6g} (oracle {J_star:.6g}), "
              f"rho {final_gain.rho:.4f}; wrote {path}")
    return 0


def _cmd_duality(args) -> int:
    config = load_config(args.config)
    gain_star, _ = steady_state_gain(config.model)
    report = duality_check(config.model, gain_star, T=config.learner.horizon,
                           mc_samples=args.samples,
                           seed=args.seed if args.seed is not None else config.learner.seed,
                           noise=config.noise)
    print(json.dumps(report, indent=None if args.quiet else 2, sort_keys=True))
    return 0


_CHECKS = ("truncation", "concentration", "power", "error-identity")


def _cmd_diagnose(args) -> int:
    config = load_config(args.config)
    model = config.model
    selected = _CHECKS if args.checks == "all" else tuple(args.checks.split(","))
    for c in selected:
        if c not in _CHECKS:
            raise ConfigError(f"unknown check {c!r}; choose from {_CHECKS}")
    out = Path(args.out or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else config.learner.seed
    gain_star, _ = steady_state_gain(model)
    report = {"version": __version__, "checks": {}}

    if "truncation" in selected:
        T_values = sorted({max(2, t) for t in (5, 10, 20, 40)})
        decay = diagnostics.truncation_decay(model, gain_star, T_values)
        report["checks"]["truncation"] = {
            "slope": decay.fitted_slope, "r2": decay.fit_r2,
            "reference_slope": decay.reference_slope, "notes": decay.notes,
        }
        _write_csv(out / "truncation.csv",
                   [{"T": int(x), "gap": _fmt(e)}
                    for x, e in zip(decay.xs, decay.errors)], ["T", "gap"])
    if "concentration" in selected:
        sweep = diagnostics.concentration_sweep(
            model, config.noise, gain_star, T=min(config.learner.horizon, 30),
            M_values=(8, 32, 128), reps=30, seed=seed)
        report["checks"]["concentration"] = {
            "slope": sweep.fitted_slope, "r2": sweep.fit_r2,
            "reference_slope": sweep.reference_slope,
            "bound_scale": sweep.bound_scale,
        }
        _write_csv(out / "concentration.csv",
                   [{"M": int(x), "deviation": _fmt(e)}
                    for x, e in zip(sweep.xs, sweep.errors)], ["M", "deviation"])
    if "power" in selected:
        report["checks"]["power"] = diagnostics.power_bound_check(gain_star)
    if "error-identity" in selected:
        from .model import simulate

        worst = 0.0
        for i in range(20):
            traj = simulate(model, config.noise, T=15, seed=derive_seed(seed, i))
            res = diagnostics.prediction_error_identity(
                model.A, model.H, gain_star, traj)
            worst = max(worst, res["gap"])
        report["checks"]["error-identity"] = {"instances": 20, "worst_gap": worst}

    with open(out / "diagnose.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    if not args.quiet:
        print(json.dumps(report["checks"], indent=2, sort_keys=True))
    return 0


def _build_parser(prog_command: str) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=f"gainlearn {prog_command}")
    parser.add_argument("--config", required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--quiet", action="store_true")
    if prog_command == "learn":
        parser.add_argument("--algorithm", choices=("sgd", "gd"), default="sgd")
    if prog_command == "duality-check":
        parser.add_argument("--samples", type=int, default=10_000)
    if prog_command == "diagnose":
        parser.add_argument("--checks", default="all")
    return parser


_COMMANDS = {
    "experiment": _cmd_experiment,
    "oracle": _cmd_oracle,
    "learn": _cmd_learn,
    "duality-check": _cmd_duality,
    "diagnose": _cmd_diagnose,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(_USAGE, end="")
        return 0 if argv else 64
    command, rest = argv[0], argv[1:]
    if command not in _COMMANDS:
        sys.stderr.write(f"unknown subcommand {command!r}\n{_USAGE}")
        return 64
    parser = _build_parser(command)
    try:
        args = parser.parse_args(rest)
    except SystemExit:
        return 64
    try:
        return _COMMANDS[command](args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except (InstabilityError, ConvergenceError, StallError, NumericalError,
            DiagnosticError, DomainError, InitializationError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 3


def entrypoint():  # console_scripts hook
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
