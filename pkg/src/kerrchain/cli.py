"""Command-line driver: configure, run, and persist experiments.

Subcommands
    simulate        integrate monitored trajectories, write record/state CSVs
    phase-diagram   classical fixed-point counts over a 2D parameter grid
    oracle-compare  cross-validate integrators against exact references
    task            run a classification experiment end to end
    train           fit an output layer to a dataset CSV
    eval            apply a stored output layer to a dataset CSV

Every artifact embeds the sha256 hash of the resolved configuration and
the master seed; identical configs reproduce byte-identical artifacts
(artifacts never contain wall-clock data).  Exit codes: 0 success,
2 config error, 3 numerical failure, 4 check-threshold miss.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .config import (
    ConfigError,
    chain_from_dict,
    config_hash,
    experiment_from_config,
    integrator_from_dict,
    load_config,
    _coerce,
    _optional_table,
    _reject_unknown,
)
from .experiments import (
    Task1Result,
    Task2Result,
    TrajectoryFailure,
    matched_noise_benchmark_chain,
    matched_noise_report,
    run_task1,
    run_task2,
    single_kerr_chain,
    steady_oracle_scan,
)
from .integrate import (
    SteadyStateError,
    TrajectoryBlowupError,
    linear_steady_state,
    simulate_ensemble,
    steady_state,
)
from .oracles.classical import phase_diagram
from .oracles.fock import FockLeakageError
from .presets import build_task1_chain, build_task2_chain, build_task2_pa_chain
from .readout import (
    MeasuredOutput,
    assemble_dataset,
    load_dataset_csv,
    load_layer_json,
    metrics,
    predict,
    save_dataset_csv,
    save_layer_json,
    train,
)

__all__ = ["main", "read_csv_artifact"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_THRESHOLD = 4

RECORDS_SCHEMA = "kerrchain-records-v1"
STATES_SCHEMA = "kerrchain-states-v1"
CUMULANTS_SCHEMA = "kerrchain-cumulants-v1"
GRID_SCHEMA = "kerrchain-phase-diagram-v1"
CURVES_SCHEMA = "kerrchain-accuracy-curves-v1"
ORACLE_STEADY_SCHEMA = "kerrchain-oracle-steady-v1"
MANIFEST_SCHEMA = "kerrchain-manifest-v1"
TASK_METRICS_SCHEMA = "kerrchain-task-metrics-v1"
REPORT_SCHEMA = "kerrchain-oracle-report-v1"
TRAINING_SCHEMA = "kerrchain-training-v1"
EVAL_SCHEMA = "kerrchain-eval-v1"


# --------------------------------------------------------------------------
# Artifact plumbing


def _fmt(value: Any) -> str:
    """Cell formatting that round-trips: repr for floats, str otherwise."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _num(value: float) -> Optional[float]:
    """JSON-safe float: NaN becomes null."""
    value = float(value)
    return None if math.isnan(value) else value


def _write_json(path: str, payload: Dict[str, Any]) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {path}")


def _write_csv(
    path: str,
    schema: str,
    stamp: Dict[str, Any],
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={schema}\n")
        fh.write(f"# config_hash={stamp['config_hash']}\n")
        fh.write(f"# master_seed={stamp['master_seed']}\n")
        writer = csv.writer(fh)
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    print(f"wrote {path}")


def read_csv_artifact(path: str) -> Tuple[Dict[str, str], List[str], List[List[str]]]:
    """Parse a versioned CSV artifact into (metadata, header, rows)."""
    meta: Dict[str, str] = {}
    with open(path, newline="") as fh:
        position = fh.tell()
        line = fh.readline()
        while line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
            position = fh.tell()
            line = fh.readline()
        fh.seek(position)
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader]
    return meta, header, rows


def _out_path(out_dir: str, name: str) -> str:
    return os.path.join(out_dir, name)


def _resolve(cfg: Dict[str, Any], args, command: str) -> Dict[str, Any]:
    """Fold command-line overrides into the config and stamp the command.

    The config hash is taken over this resolved dict, so a flag override
    changes the hash exactly like editing the file would.
    """
    cfg = copy.deepcopy(cfg)
    cfg["command"] = command
    if getattr(args, "preset", None) is not None:
        cfg.setdefault("chain", {})["preset"] = args.preset
    if getattr(args, "workers", None) is not None and "experiment" in cfg:
        cfg["experiment"]["workers"] = args.workers
    if getattr(args, "seed", None) is not None:
        if command == "task":
            cfg.setdefault("experiment", {})["master_seed"] = args.seed
            cfg.get("integrator", {}).pop("seed", None)
        else:
            table = cfg.setdefault(command.replace("-", "_"), {})
            table["master_seed"] = args.seed
            cfg.get("integrator", {}).pop("seed", None)
    return cfg


def _stamp(resolved: Dict[str, Any], master_seed: int) -> Dict[str, Any]:
    return {"config_hash": config_hash(resolved), "master_seed": int(master_seed)}


def _check_table(cfg: Dict[str, Any]) -> Dict[str, Any]:
    return _optional_table(cfg, "check")


def _report_check(
    failures: List[str], stamp: Dict[str, Any], out_dir: str
) -> int:
    payload = {
        "schema": "kerrchain-check-v1",
        "passed": not failures,
        "failures": failures,
        **stamp,
    }
    _write_json(_out_path(out_dir, "check.json"), payload)
    if failures:
        for line in failures:
            print(f"check failed: {line}", file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


def _spearman(a: np.ndarray, b: np.ndarray) -> float:
    """Spearman rank correlation (average ranks for ties)."""
    from scipy.stats import rankdata

    ra = rankdata(a) - (len(a) + 1) / 2.0
    rb = rankdata(b) - (len(b) + 1) / 2.0
    denom = math.sqrt(float(np.sum(ra * ra)) * float(np.sum(rb * rb)))
    return float(np.sum(ra * rb) / denom) if denom > 0 else 0.0


# --------------------------------------------------------------------------
# simulate


def _simulate_chain(system: str, chain_table: Dict[str, Any], sigma: int):
    if system == "kerr":
        table = dict(chain_table)
        kwargs = {
            "delta": _coerce(table, "delta", float, -1.0),
            "lam": _coerce(table, "lambda", float, 0.02),
            "eta": _coerce(table, "eta", float, 0.5),
            "gamma": _coerce(table, "gamma", float, 1.0),
        }
        _reject_unknown(table, "chain")
        return single_kerr_chain(**kwargs)
    if system == "task1":
        spec = chain_from_dict("task1", chain_table)
        return build_task1_chain(spec, sigma)
    if system == "task2":
        spec = chain_from_dict("task2", chain_table)
        if spec.pa is not None:
            return build_task2_pa_chain(spec, sigma)
        return build_task2_chain(spec, sigma)
    raise ConfigError(f"simulate.system must be kerr/task1/task2, got {system!r}")


def cmd_simulate(cfg: Dict[str, Any], resolved: Dict[str, Any], out_dir: str) -> int:
    table = _optional_table(cfg, "simulate")
    system = _coerce(table, "system", str, "kerr")
    sigma = _coerce(table, "sigma", int, 1)
    n_traj = _coerce(table, "n_trajectories", int, 1)
    store_states = _coerce(table, "store_states", bool, True)
    store_cumulants = _coerce(table, "store_cumulants", bool, False)
    master_seed = _coerce(table, "master_seed", int, 0)
    _reject_unknown(table, "simulate")
    if n_traj < 1:
        raise ConfigError("simulate.n_trajectories must be positive")

    chain = _simulate_chain(system, _optional_table(cfg, "chain"), sigma)
    integ = integrator_from_dict(
        _optional_table(cfg, "integrator"), default_seed=master_seed
    )
    stamp = _stamp(resolved, master_seed)

    result = simulate_ensemble(
        chain,
        integ,
        range(n_traj),
        store_states=store_states,
        store_cumulants=store_cumulants,
    )
    times = result.times
    labels = chain.network.labels
    n_channels = result.record_values.shape[2]

    def record_rows():
        for q in range(result.n_trajectories):
            traj = int(result.trajectory_indices[q])
            for m in range(times.shape[0]):
                for k in range(n_channels):
                    yield (
                        times[m],
                        traj,
                        k,
                        result.record_values[q, m, k, 0],
                        result.record_values[q, m, k, 1],
                    )

    _write_csv(
        _out_path(out_dir, "records.csv"),
        RECORDS_SCHEMA,
        stamp,
        ["t", "trajectory", "channel", "j_x", "j_p"],
        record_rows(),
    )

    artifacts = ["records.csv"]
    if store_states and result.mu is not None:

        def state_rows():
            for q in range(result.n_trajectories):
                traj = int(result.trajectory_indices[q])
                for m in range(times.shape[0]):
                    for i, label in enumerate(labels):
                        mu = result.mu[q, m, i]
                        yield (times[m], traj, label, mu.real, mu.imag)

        _write_csv(
            _out_path(out_dir, "states.csv"),
            STATES_SCHEMA,
            stamp,
            ["t", "trajectory", "mode", "re_mu", "im_mu"],
            state_rows(),
        )
        artifacts.append("states.csv")

    if store_cumulants and result.c_bb_series is not None:

        def cumulant_rows():
            for q in range(result.n_trajectories):
                traj = int(result.trajectory_indices[q])
                for m in range(times.shape[0]):
                    for i, li in enumerate(labels):
                        for j, lj in enumerate(labels):
                            cbb = result.c_bb_series[q, m, i, j]
                            cbdb = result.c_bdb_series[q, m, i, j]
                            yield (
                                times[m],
                                traj,
                                li,
                                lj,
                                cbb.real,
                                cbb.imag,
                                cbdb.real,
                                cbdb.imag,
                            )

        _write_csv(
            _out_path(out_dir, "cumulants.csv"),
            CUMULANTS_SCHEMA,
            stamp,
            ["t", "trajectory", "mode_i", "mode_j", "re_cbb", "im_cbb", "re_cbdb", "im_cbdb"],
            cumulant_rows(),
        )
        artifacts.append("cumulants.csv")

    manifest = {
        "schema": MANIFEST_SCHEMA,
        "command": "simulate",
        **stamp,
        "system": system,
        "modes": list(labels),
        "n_trajectories": n_traj,
        "n_steps": integ.n_steps,
        "n_stored": integ.n_stored,
        "n_channels": int(n_channels),
        "failed": [[int(i), float(t)] for i, t in result.failed],
        "artifacts": artifacts + ["manifest.json"],
    }
    _write_json(_out_path(out_dir, "manifest.json"), manifest)
    if result.failed:
        print(
            f"completed with {len(result.failed)} invalid trajectories",
            file=sys.stderr,
        )
        return EXIT_NUMERICAL
    return EXIT_OK


# --------------------------------------------------------------------------
# phase-diagram


def _axis_values(table: Dict[str, Any], suffix: str) -> np.ndarray:
    values = table.pop(f"values{suffix}", None)
    if values is not None:
        if not isinstance(values, list) or not values:
            raise ConfigError(f"values{suffix} must be a non-empty list")
        return np.array([float(v) for v in values])
    start = _coerce(table, f"start{suffix}", float)
    stop = _coerce(table, f"stop{suffix}", float)
    n = _coerce(table, f"n{suffix}", int)
    if start is None or stop is None or n is None or n < 2:
        raise ConfigError(
            f"axis {suffix} needs values{suffix} or start{suffix}/stop{suffix}/n{suffix} (n >= 2)"
        )
    return np.linspace(start, stop, n)


def cmd_phase_diagram(cfg: Dict[str, Any], resolved: Dict[str, Any], out_dir: str) -> int:
    table = _optional_table(cfg, "phase_diagram")
    axis1 = _coerce(table, "axis1", str, "delta")
    axis2 = _coerce(table, "axis2", str, "n_drive")
    v1 = _axis_values(table, "1")
    v2 = _axis_values(table, "2")
    fixed_table = table.pop("fixed", {})
    if not isinstance(fixed_table, dict):
        raise ConfigError("[phase_diagram.fixed] must be a table")
    master_seed = _coerce(table, "master_seed", int, 0)
    _reject_unknown(table, "phase_diagram")
    fixed = {k: float(v) for k, v in fixed_table.items()}
    stamp = _stamp(resolved, master_seed)

    try:
        diagram = phase_diagram(axis1, v1, axis2, v2, fixed=fixed)
    except ValueError as err:
        raise ConfigError(f"[phase_diagram]: {err}") from err

    def rows():
        for i in range(v1.size):
            for j in range(v2.size):
                yield (
                    v1[i],
                    v2[j],
                    int(diagram.n_fixed_points[i, j]),
                    int(diagram.n_stable[i, j]),
                    int(diagram.any_marginal[i, j]),
                    int(diagram.failed[i, j]),
                )

    _write_csv(
        _out_path(out_dir, "grid.csv"),
        GRID_SCHEMA,
        stamp,
        [axis1, axis2, "n_fixed_points", "n_stable", "any_marginal", "failed"],
        rows(),
    )
    counts = {}
    flat = diagram.n_stable.ravel()
    for value in sorted(set(int(v) for v in flat)):
        counts[str(value)] = int(np.sum(flat == value))
    summary = {
        "schema": MANIFEST_SCHEMA,
        "command": "phase-diagram",
        **stamp,
        "axis1": axis1,
        "axis2": axis2,
        "fixed": fixed,
        "cells_by_n_stable": counts,
        "bistable_cells": int(np.sum(flat >= 2)),
        "failed_cells": int(diagram.failed.sum()),
        "artifacts": ["grid.csv", "summary.json"],
    }
    _write_json(_out_path(out_dir, "summary.json"), summary)
    if diagram.failed.any():
        return EXIT_NUMERICAL
    return EXIT_OK


# --------------------------------------------------------------------------
# oracle-compare


def _oracle_steady(cfg, table, stamp, out_dir) -> Tuple[Dict[str, Any], List[str]]:
    lambdas = table.pop("lambdas", [0.005, 0.02, 0.05])
    if not isinstance(lambdas, list) or not lambdas:
        raise ConfigError("oracle_compare.lambdas must be a non-empty list")
    delta = _coerce(table, "delta", float, -1.0)
    gamma = _coerce(table, "gamma", float, 1.0)
    drive_table = table.pop("drive", {"start": 0.1, "stop": 0.45, "n": 20})
    if not isinstance(drive_table, dict):
        raise ConfigError("oracle_compare.drive must be a table")
    drive_table = {f"{k}1": v for k, v in drive_table.items()}
    grid = _axis_values(drive_table, "1")
    band = table.pop("exclude_band", None)
    if band is not None and (not isinstance(band, list) or len(band) != 2):
        raise ConfigError("oracle_compare.exclude_band must be [lo, hi]")

    all_rows = []
    per_lambda = {}
    for lam in lambdas:
        rows = steady_oracle_scan(
            float(lam), delta_over_gamma=delta, drive_grid=grid, gamma=gamma
        )
        checked = [
            r
            for r in rows
            if band is None or not (band[0] <= r["drive"] <= band[1])
        ]
        per_lambda[repr(float(lam))] = {
            "n_points": len(rows),
            "n_checked": len(checked),
            "max_mu_rel_err": max(r["mu_rel_err"] for r in checked),
            "max_cbdb_rel_err": max(r["cbdb_rel_err"] for r in checked),
            "max_cbb_rel_err": max(r["cbb_rel_err"] for r in checked),
        }
        for r in rows:
            all_rows.append((float(lam),) + tuple(r[k] for k in _STEADY_KEYS))

    _write_csv(
        _out_path(out_dir, "steady.csv"),
        ORACLE_STEADY_SCHEMA,
        stamp,
        ["lambda"] + list(_STEADY_KEYS),
        all_rows,
    )
    report = {
        "mode": "steady",
        "delta": delta,
        "gamma": gamma,
        "exclude_band": band,
        "per_lambda": per_lambda,
    }
    failures = []
    check = _check_table(cfg)
    threshold = check.get("max_rel_err")
    if threshold is not None:
        for key, entry in per_lambda.items():
            worst = max(
                entry["max_mu_rel_err"],
                entry["max_cbdb_rel_err"],
                entry["max_cbb_rel_err"],
            )
            if worst > float(threshold):
                failures.append(
                    f"steady lambda={key}: worst rel err {worst:.4f} > {threshold}"
                )
    return report, failures


_STEADY_KEYS = (
    "drive",
    "eta",
    "mu_teom",
    "mu_exact",
    "mu_rel_err",
    "cbdb_teom",
    "cbdb_exact",
    "cbdb_rel_err",
    "cbb_teom",
    "cbb_exact",
    "cbb_rel_err",
)


def _oracle_linear(cfg, table, stamp, out_dir) -> Tuple[Dict[str, Any], List[str]]:
    delta = _coerce(table, "delta", float, -1.0)
    eta = _coerce(table, "eta", float, 2.0)
    gamma = _coerce(table, "gamma", float, 1.0)
    chain = single_kerr_chain(delta, 0.0, eta, gamma)
    exact = linear_steady_state(chain)
    solved = steady_state(chain)
    err = max(
        float(np.max(np.abs(solved.mu - exact.mu))),
        float(np.max(np.abs(solved.c_bb - exact.c_bb))),
        float(np.max(np.abs(solved.c_bdb - exact.c_bdb))),
    )
    report = {
        "mode": "linear",
        "delta": delta,
        "eta": eta,
        "gamma": gamma,
        "max_abs_err": err,
    }
    failures = []
    check = _check_table(cfg)
    tol = check.get("max_abs_err")
    if tol is not None and err > float(tol):
        failures.append(f"linear steady mismatch {err:.3e} > {tol}")
    return report, failures


def _oracle_conditional(cfg, table, stamp, out_dir) -> Tuple[Dict[str, Any], List[str]]:
    kwargs = {
        "kappa1": _coerce(table, "kappa1", float, 0.5),
        "g1": _coerce(table, "g1", float, 0.3),
        "gamma_c": _coerce(table, "gamma_c", float, 0.5),
        "eta": _coerce(table, "eta", float, 0.894),
        "lambda_bar": _coerce(table, "lambda_bar", float, 0.1),
        "delta_bar": _coerce(table, "delta_bar", float, -1.0),
        "gamma_bar": _coerce(table, "gamma_bar", float, 1.0),
    }
    cutoffs = table.pop("cutoffs", [40, 40])
    if not isinstance(cutoffs, list) or len(cutoffs) != 2:
        raise ConfigError("oracle_compare.cutoffs must be [n1, n2]")
    trajectory_index = _coerce(table, "trajectory_index", int, 0)
    chain = matched_noise_benchmark_chain(**kwargs)
    integ = integrator_from_dict(
        _optional_table(cfg, "integrator"), default_seed=stamp["master_seed"]
    )
    report = matched_noise_report(
        chain, integ, [int(c) for c in cutoffs], trajectory_index=trajectory_index
    )
    report = {"mode": "conditional", **kwargs, **report}
    failures = []
    check = _check_table(cfg)
    for key in ("max_mu_rel_err", "max_second_cumulant_rel_err"):
        tol = check.get(key)
        if tol is not None and report[key] > float(tol):
            failures.append(f"conditional {key} {report[key]:.4f} > {tol}")
    return report, failures


def cmd_oracle_compare(cfg: Dict[str, Any], resolved: Dict[str, Any], out_dir: str) -> int:
    table = _optional_table(cfg, "oracle_compare")
    mode = _coerce(table, "mode", str, "steady")
    master_seed = _coerce(table, "master_seed", int, 0)
    stamp = _stamp(resolved, master_seed)
    if mode == "steady":
        report, failures = _oracle_steady(cfg, table, stamp, out_dir)
    elif mode == "linear":
        report, failures = _oracle_linear(cfg, table, stamp, out_dir)
    elif mode == "conditional":
        report, failures = _oracle_conditional(cfg, table, stamp, out_dir)
    else:
        raise ConfigError(
            f"oracle_compare.mode must be steady/linear/conditional, got {mode!r}"
        )
    _reject_unknown(table, "oracle_compare")
    payload = {"schema": REPORT_SCHEMA, "command": "oracle-compare", **stamp, **report}
    _write_json(_out_path(out_dir, "report.json"), payload)
    return _report_check(failures, stamp, out_dir)


# --------------------------------------------------------------------------
# task


def _dataset_outputs(x, labels, times, trajectories):
    for j in range(x.shape[1]):
        yield MeasuredOutput(
            x=x[:, j],
            label=int(labels[j]),
            trajectory=int(trajectories[j]),
            time=float(times[j]),
        )


def _variant_payload(v) -> Dict[str, Any]:
    info = v.training
    return {
        "c_max": _num(v.summary.c_max),
        "arg_max": None if v.summary.arg_max is None else float(v.summary.arg_max),
        "threshold": float(v.summary.threshold),
        "train_accuracy": _num(info.train_accuracy),
        "converged": bool(info.converged),
        "n_iterations": int(info.n_iterations),
        "loss": _num(info.loss),
        "grad_norm": _num(info.grad_norm),
        "warning": info.warning,
        "biases": [float(b) for b in v.layer.biases],
        "phases": None
        if v.layer.phases is None
        else [float(p) for p in v.layer.phases],
    }


def _task_suffix(index: int, swept: bool) -> str:
    return f"-sweep{index}" if swept else ""


def _check_task1(results: List[Task1Result], check: Dict[str, Any]) -> List[str]:
    failures = []
    for idx, result in enumerate(results):
        tag = f"sweep point {idx}" if result.sweep_value is not None else "run"
        nonlinear = result.variants["nonlinear"]
        minimum = check.get("min_nonlinear_c_max")
        if minimum is not None and nonlinear.summary.c_max < float(minimum):
            failures.append(
                f"{tag}: nonlinear c_max {nonlinear.summary.c_max:.4f} < {minimum}"
            )
        horizon = check.get("max_nonlinear_t_max")
        if horizon is not None:
            arg = nonlinear.summary.arg_max
            if arg is None or arg >= float(horizon):
                failures.append(f"{tag}: nonlinear t_max {arg} not below {horizon}")
        band = check.get("linear_band")
        if band is not None and "linear" in result.variants:
            from_time = float(check.get("linear_band_from_time", 0.0))
            linear = result.variants["linear"]
            mask = result.times >= from_time - 1e-12
            acc = linear.test_accuracy[mask]
            lo, hi = float(band[0]), float(band[1])
            if acc.size and (acc.min() < lo or acc.max() > hi):
                failures.append(
                    f"{tag}: linear accuracy [{acc.min():.3f}, {acc.max():.3f}] "
                    f"outside [{lo}, {hi}] for t >= {from_time}"
                )
    return failures


def _check_task2(results: List[Task2Result], check: Dict[str, Any]) -> List[str]:
    failures = []
    for idx, result in enumerate(results):
        tag = f"sweep point {idx}" if result.sweep_value is not None else "run"
        nonlinear = result.variants["nonlinear"]
        minimum = check.get("min_spearman")
        if minimum is not None:
            rho = _spearman(nonlinear.axis, nonlinear.test_accuracy)
            if rho <= float(minimum):
                failures.append(f"{tag}: spearman rho {rho:.4f} <= {minimum}")
        gap = check.get("min_final_gap")
        if gap is not None and "linear" in result.variants:
            linear = result.variants["linear"]
            final_gap = float(
                nonlinear.test_accuracy[-1] - linear.test_accuracy[-1]
            )
            if final_gap < float(gap):
                failures.append(
                    f"{tag}: nonlinear-linear gap {final_gap:.4f} < {gap} "
                    "at the largest shot count"
                )
    return failures


def cmd_task(cfg: Dict[str, Any], resolved: Dict[str, Any], out_dir: str, args) -> int:
    experiment, spec = experiment_from_config(
        cfg,
        seed=args.seed,
        workers=args.workers,
        preset_name=args.preset,
    )
    stamp = _stamp(resolved, experiment.master_seed)
    if experiment.task == "task1":
        results = run_task1(experiment, spec, keep_datasets=True)
        axis_name = "t"
    else:
        results = run_task2(experiment, spec, keep_datasets=True)
        axis_name = "n_shots"

    swept = experiment.sweep is not None

    def curve_rows():
        for result in results:
            for name, variant in result.variants.items():
                for i in range(variant.axis.shape[0]):
                    yield (
                        result.sweep_value,
                        name,
                        variant.axis[i],
                        variant.train_accuracy[i],
                        variant.test_accuracy[i],
                    )

    _write_csv(
        _out_path(out_dir, "curves.csv"),
        CURVES_SCHEMA,
        stamp,
        ["sweep_value", "variant", axis_name, "train_accuracy", "test_accuracy"],
        curve_rows(),
    )

    comments = [
        f"config_hash={stamp['config_hash']}",
        f"master_seed={stamp['master_seed']}",
    ]
    payload_results = []
    for idx, result in enumerate(results):
        suffix = _task_suffix(idx, swept)
        entry = {
            "sweep_value": None
            if result.sweep_value is None
            else float(result.sweep_value),
            "variants": {},
        }
        for name, variant in result.variants.items():
            entry["variants"][name] = _variant_payload(variant)
            layer_path = _out_path(out_dir, f"layer-{name}{suffix}.json")
            save_layer_json(
                layer_path,
                variant.layer,
                metadata={**stamp, "variant": name, "sweep_value": entry["sweep_value"]},
            )
            print(f"wrote {layer_path}")
        for name, dataset in (result.datasets or {}).items():
            path = _out_path(out_dir, f"dataset-{name}{suffix}.csv")
            save_dataset_csv(path, _dataset_outputs(*dataset), extra_comments=comments)
            print(f"wrote {path}")
        payload_results.append(entry)

    check = _check_table(cfg)
    failures = (
        _check_task1(results, check)
        if experiment.task == "task1"
        else _check_task2(results, check)
    )
    metrics_payload = {
        "schema": TASK_METRICS_SCHEMA,
        "command": "task",
        **stamp,
        "task": experiment.task,
        "sweep": None
        if not swept
        else {
            "name": experiment.sweep.name,
            "values": [float(v) for v in experiment.sweep.values],
        },
        "results": payload_results,
    }
    _write_json(_out_path(out_dir, "metrics.json"), metrics_payload)
    return _report_check(failures, stamp, out_dir)


# --------------------------------------------------------------------------
# train / eval


def _load_dataset_or_config_error(path: str):
    try:
        return load_dataset_csv(path)
    except (OSError, ValueError) as err:
        raise ConfigError(f"cannot load dataset {path}: {err}") from err


def cmd_train(cfg: Dict[str, Any], resolved: Dict[str, Any], out_dir: str) -> int:
    table = _optional_table(cfg, "train")
    dataset_path = _coerce(table, "dataset", str)
    if dataset_path is None:
        raise ConfigError("[train] needs dataset = <csv path>")
    options = {
        "train_phases": _coerce(table, "train_phases", bool, False),
        "fit_biases": _coerce(table, "fit_biases", bool, True),
        "max_iter": _coerce(table, "max_iter", int, 5000),
        "grad_tol": _coerce(table, "grad_tol", float, 1e-8),
        "phase_grid": _coerce(table, "phase_grid", int, 64),
        "phase_budget": _coerce(table, "phase_budget", int, 150),
    }
    n_classes = _coerce(table, "n_classes", int, None)
    master_seed = _coerce(table, "master_seed", int, 0)
    _reject_unknown(table, "train")
    stamp = _stamp(resolved, master_seed)

    outputs = _load_dataset_or_config_error(dataset_path)
    x, labels = assemble_dataset(outputs)
    try:
        layer, info = train(x, labels, n_classes=n_classes, **options)
    except ValueError as err:
        raise ConfigError(f"training failed: {err}") from err

    save_layer_json(
        _out_path(out_dir, "layer.json"),
        layer,
        metadata={**stamp, "dataset": os.path.basename(dataset_path)},
    )
    print(f"wrote {_out_path(out_dir, 'layer.json')}")
    payload = {
        "schema": TRAINING_SCHEMA,
        "command": "train",
        **stamp,
        "n_samples": int(labels.shape[0]),
        "n_features": int(x.shape[0]),
        "converged": bool(info.converged),
        "n_iterations": int(info.n_iterations),
        "loss": _num(info.loss),
        "grad_norm": _num(info.grad_norm),
        "train_accuracy": _num(info.train_accuracy),
        "warning": info.warning,
    }
    _write_json(_out_path(out_dir, "training.json"), payload)

    failures = []
    check = _check_table(cfg)
    minimum = check.get("min_train_accuracy")
    if minimum is not None and info.train_accuracy < float(minimum):
        failures.append(
            f"train accuracy {info.train_accuracy:.4f} < {minimum}"
        )
    return _report_check(failures, stamp, out_dir)


def cmd_eval(cfg: Dict[str, Any], resolved: Dict[str, Any], out_dir: str) -> int:
    table = _optional_table(cfg, "eval")
    dataset_path = _coerce(table, "dataset", str)
    layer_path = _coerce(table, "layer", str)
    if dataset_path is None or layer_path is None:
        raise ConfigError("[eval] needs dataset = <csv path> and layer = <json path>")
    threshold = _coerce(table, "threshold", float, 0.99)
    master_seed = _coerce(table, "master_seed", int, 0)
    _reject_unknown(table, "eval")
    stamp = _stamp(resolved, master_seed)

    outputs = _load_dataset_or_config_error(dataset_path)
    try:
        layer, _ = load_layer_json(layer_path)
    except (OSError, ValueError, KeyError) as err:
        raise ConfigError(f"cannot load layer {layer_path}: {err}") from err

    x, labels = assemble_dataset(outputs)
    predictions = predict(layer, x.T)
    overall = float(np.mean(predictions == labels))

    times = np.array([o.time for o in outputs])
    unique_times = np.unique(times)
    payload: Dict[str, Any] = {
        "schema": EVAL_SCHEMA,
        "command": "eval",
        **stamp,
        "n_samples": int(labels.shape[0]),
        "accuracy": overall,
    }
    if unique_times.size > 1:
        curve = np.array(
            [
                float(np.mean(predictions[times == t] == labels[times == t]))
                for t in unique_times
            ]
        )
        summary = metrics(unique_times, curve, threshold=threshold)
        payload["c_max"] = float(summary.c_max)
        payload["arg_max"] = (
            None if summary.arg_max is None else float(summary.arg_max)
        )
        _write_csv(
            _out_path(out_dir, "curves.csv"),
            CURVES_SCHEMA,
            stamp,
            ["sweep_value", "variant", "t", "train_accuracy", "test_accuracy"],
            ((None, "eval", t, None, a) for t, a in zip(unique_times, curve)),
        )
    _write_json(_out_path(out_dir, "metrics.json"), payload)

    failures = []
    check = _check_table(cfg)
    minimum = check.get("min_accuracy")
    if minimum is not None and overall < float(minimum):
        failures.append(f"accuracy {overall:.4f} < {minimum}")
    minimum = check.get("min_c_max")
    if minimum is not None:
        c_max = payload.get("c_max", overall)
        if c_max < float(minimum):
            failures.append(f"c_max {c_max:.4f} < {minimum}")
    return _report_check(failures, stamp, out_dir)


# --------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kerrchain",
        description="Monitored Kerr-network simulator and classification harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "phase-diagram", "oracle-compare", "task", "train", "eval"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML or JSON run config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument(
            "--workers", type=int, default=None, help="worker process count"
        )
        p.add_argument("--preset", default=None, help="chain preset override")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        resolved = _resolve(cfg, args, args.command)
        os.makedirs(args.out, exist_ok=True)
        if args.command == "simulate":
            return cmd_simulate(resolved, resolved, args.out)
        if args.command == "phase-diagram":
            return cmd_phase_diagram(resolved, resolved, args.out)
        if args.command == "oracle-compare":
            return cmd_oracle_compare(resolved, resolved, args.out)
        if args.command == "task":
            return cmd_task(resolved, resolved, args.out, args)
        if args.command == "train":
            return cmd_train(resolved, resolved, args.out)
        return cmd_eval(resolved, resolved, args.out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (
        TrajectoryFailure,
        TrajectoryBlowupError,
        SteadyStateError,
        FockLeakageError,
        FloatingPointError,
    ) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
