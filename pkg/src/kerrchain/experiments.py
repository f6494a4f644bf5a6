"""End-to-end classification experiments on the reference measurement chains.

Each experiment simulates a pool of conditional trajectories per class,
reduces the heterodyne records to boxcar-averaged quadrature features,
trains the softmax readout, and reports accuracy curves: versus
integration time for the pointer-state task (one sample per stored
time), and versus shot count for the amplifier-state task (features at
the final time only, ensemble-averaged over disjoint groups of shots).

Trajectory noise is addressed by (seed, trajectory index), so results
are independent of how the work is split across processes; classes and
the train/test split occupy disjoint index ranges.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .blocks import ChainSpec
from .integrate import IntegratorConfig, simulate_ensemble
from .presets import (
    TaskISpec,
    TaskIISpec,
    build_task1_chain,
    build_task2_chain,
    build_task2_pa_chain,
    pa_for_gain,
    sample_random_qrc,
    task2_drive_instance,
)
from .readout import (
    ClassificationMetrics,
    OutputLayer,
    ReadoutConfig,
    TrainingInfo,
    b12_metric,
    boxcar_filter,
    interleave_channels,
    metrics,
    predict,
    train,
    train_on_means_baseline,
)

__all__ = [
    "SweepAxis",
    "ExperimentConfig",
    "Task1Result",
    "Task2Result",
    "run_task1",
    "run_task2",
    "run_b12_instances",
    "single_kerr_chain",
    "matched_noise_benchmark_chain",
    "matched_noise_report",
    "steady_oracle_scan",
    "TrajectoryFailure",
]

TASK1_SWEEPABLE = ("lambda_bar", "g_bar", "delta_bar", "gamma_bar", "eta")
TASK2_SWEEPABLE = ("qrc_lambda", "drive_instance", "pa_gain")


class TrajectoryFailure(RuntimeError):
    """Raised when conditional trajectories blow up during an experiment."""


@dataclass(frozen=True)
class SweepAxis:
    """One swept chain parameter and the values it takes."""

    name: str
    values: Tuple[float, ...]

    def __post_init__(self):
        if not self.values:
            raise ValueError("sweep axis needs at least one value")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a classification run needs besides the chain spec."""

    task: str
    integrator: IntegratorConfig
    readout: ReadoutConfig
    q_train: int = 100
    q_test: int = 200
    shot_counts: Tuple[int, ...] = (1,)
    train_phases: bool = True
    fit_biases: Optional[bool] = None
    compare_linear: bool = False
    compare_means_baseline: bool = False
    sweep: Optional[SweepAxis] = None
    pa_gain: Optional[float] = None
    master_seed: int = 0
    workers: int = 0

    def __post_init__(self):
        if self.task not in ("task1", "task2"):
            raise ValueError(f"task must be 'task1' or 'task2', got {self.task!r}")
        if self.fit_biases is None:
            # The four detuning classes sit symmetrically around the origin
            # of the measured phase space, so their readout is angle-only:
            # biases stay pinned at zero.  The drive-strength task has no
            # such symmetry and fits them.
            object.__setattr__(self, "fit_biases", self.task == "task2")
        if self.q_train < 1 or self.q_test < 1:
            raise ValueError("q_train and q_test must be positive")
        shots = tuple(int(n) for n in self.shot_counts)
        if not shots or any(n < 1 for n in shots) or len(set(shots)) != len(shots):
            raise ValueError(f"shot_counts must be distinct positive ints, got {shots}")
        object.__setattr__(self, "shot_counts", shots)
        if self.sweep is not None:
            allowed = TASK1_SWEEPABLE if self.task == "task1" else TASK2_SWEEPABLE
            if self.sweep.name not in allowed:
                raise ValueError(
                    f"cannot sweep {self.sweep.name!r} in {self.task}; "
                    f"choose one of {allowed}"
                )

    @property
    def n_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)


@dataclass
class VariantCurves:
    """Accuracy curves and trained layer for one chain variant."""

    name: str
    axis: np.ndarray
    test_accuracy: np.ndarray
    train_accuracy: np.ndarray
    layer: OutputLayer
    training: TrainingInfo
    summary: ClassificationMetrics


@dataclass
class Task1Result:
    times: np.ndarray
    variants: Dict[str, VariantCurves]
    sweep_value: Optional[float] = None
    # test-split features per variant as (x (D, n), labels, times, trajectory
    # ids); filled only when the runner is asked to keep datasets
    datasets: Optional[Dict[str, tuple]] = None


@dataclass
class Task2Result:
    shot_counts: Tuple[int, ...]
    variants: Dict[str, VariantCurves]
    sweep_value: Optional[float] = None
    # test-split features at the largest shot count, same layout as above
    datasets: Optional[Dict[str, tuple]] = None


# --------------------------------------------------------------------------
# Trajectory pools


def _ensemble_chunk(args):
    chain, config, indices = args
    result = simulate_ensemble(chain, config, indices, store_states=False)
    return result.record_values, result.failed


def run_record_pool(
    chain: ChainSpec,
    config: IntegratorConfig,
    indices: Sequence[int],
    workers: int = 1,
) -> np.ndarray:
    """Simulate trajectories and return record values (Q, M, n_ch, 2).

    Work is split into contiguous index chunks across processes and
    concatenated in order; the per-trajectory noise streams make the
    result identical to a single-process run.
    """
    indices = list(indices)
    n_chunks = min(workers, max(1, len(indices) // 16))
    if n_chunks <= 1:
        values, failed = _ensemble_chunk((chain, config, indices))
    else:
        bounds = np.linspace(0, len(indices), n_chunks + 1).astype(int)
        jobs = [
            (chain, config, indices[a:b])
            for a, b in zip(bounds[:-1], bounds[1:])
            if b > a
        ]
        with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
            parts = list(pool.map(_ensemble_chunk, jobs))
        values = np.concatenate([p[0] for p in parts], axis=0)
        failed = [f for p in parts for f in p[1]]
    if failed:
        raise TrajectoryFailure(
            f"{len(failed)} trajectories diverged, first at index "
            f"{failed[0][0]} (t={failed[0][1]:.3g})"
        )
    return values


# --------------------------------------------------------------------------
# Chain variants


def _task1_chain(spec: TaskISpec, sigma: int) -> ChainSpec:
    draw = sample_random_qrc(spec.qrc)
    return build_task1_chain(spec, sigma, draw)


def _task2_chain(spec: TaskIISpec, sigma: int, pa_gain: Optional[float]) -> ChainSpec:
    if pa_gain is None:
        if spec.pa is not None:
            return build_task2_pa_chain(spec, sigma)
        return build_task2_chain(spec, sigma)
    from .presets import PostAmpSection

    base = spec.pa if spec.pa is not None else PostAmpSection(g_pa=0.0)
    g = pa_for_gain(
        pa_gain,
        gamma_d=base.gamma_d,
        gamma_c=base.gamma_c,
        gamma_d1=base.gamma_d1,
    )
    return build_task2_pa_chain(replace(spec, pa=replace(base, g_pa=g)), sigma)


def _linear_task1(spec: TaskISpec) -> TaskISpec:
    return replace(spec, qrc=replace(spec.qrc, lambda_bar=0.0))


def _linear_task2(spec: TaskIISpec) -> TaskIISpec:
    return replace(spec, qrc_lambda=0.0)


def _apply_sweep_task1(spec: TaskISpec, name: str, value: float) -> TaskISpec:
    if name == "eta":
        return replace(spec, eta=value)
    return replace(spec, qrc=replace(spec.qrc, **{name: value}))


def _apply_sweep_task2(
    spec: TaskIISpec, name: str, value: float, config: ExperimentConfig
) -> Tuple[TaskIISpec, Optional[float]]:
    if name == "qrc_lambda":
        return replace(spec, qrc_lambda=value), config.pa_gain
    if name == "drive_instance":
        # value indexes the standard (eta_eff, lambda) drive instances
        from .presets import TASK2_DRIVE_INSTANCES

        eta_eff, lam = TASK2_DRIVE_INSTANCES[int(value)]
        return task2_drive_instance(spec, eta_eff, lam), config.pa_gain
    if name == "pa_gain":
        return spec, value
    raise ValueError(f"unknown sweep axis {name!r}")


# --------------------------------------------------------------------------
# Pointer-state task (time-resolved accuracy)


def _curves_from_samples(
    name: str,
    axis: np.ndarray,
    x_train: np.ndarray,
    y_train: np.ndarray,
    t_train: np.ndarray,
    x_test: np.ndarray,
    y_test: np.ndarray,
    t_test: np.ndarray,
    layer: OutputLayer,
    info: TrainingInfo,
) -> VariantCurves:
    """Per-axis-value accuracy of a trained layer on both splits."""
    pred_train = predict(layer, x_train.T)
    pred_test = predict(layer, x_test.T)
    acc_train = np.empty(axis.shape[0])
    acc_test = np.empty(axis.shape[0])
    for i, t in enumerate(axis):
        m_tr = t_train == t
        m_te = t_test == t
        acc_train[i] = np.mean(pred_train[m_tr] == y_train[m_tr])
        acc_test[i] = np.mean(pred_test[m_te] == y_test[m_te])
    return VariantCurves(
        name=name,
        axis=axis,
        test_accuracy=acc_test,
        train_accuracy=acc_train,
        layer=layer,
        training=info,
        summary=metrics(axis, acc_test),
    )


def _task1_features(
    spec: TaskISpec, config: ExperimentConfig
) -> Tuple[np.ndarray, dict]:
    """Simulate all classes and boxcar-filter into per-time feature arrays."""
    n_classes = spec.n_classes
    q_total = config.q_train + config.q_test
    per_class: Dict[int, np.ndarray] = {}
    times = None
    for sigma in range(1, n_classes + 1):
        chain = _task1_chain(spec, sigma)
        base = (sigma - 1) * q_total
        values = run_record_pool(
            chain,
            config.integrator,
            range(base, base + q_total),
            workers=config.n_workers,
        )
        t, filt = boxcar_filter(
            config.integrator.stored_times(), values, t0=config.readout.t0
        )
        per_class[sigma] = interleave_channels(filt)  # (Q, M, 2K)
        times = t
    return times, per_class


def _stack_task1(per_class, sl, times, q_total):
    """Flatten (class, trajectory, time) features into training columns."""
    xs, labels, ts, trajs = [], [], [], []
    for sigma, feats in per_class.items():
        block = feats[sl]  # (q, M, 2K)
        q, m, d = block.shape
        xs.append(block.reshape(q * m, d))
        labels.append(np.full(q * m, sigma, dtype=np.int64))
        ts.append(np.tile(times, q))
        ids = (sigma - 1) * q_total + np.arange(sl.start, sl.stop, dtype=np.int64)
        trajs.append(np.repeat(ids, m))
    return (
        np.concatenate(xs).T,
        np.concatenate(labels),
        np.concatenate(ts),
        np.concatenate(trajs),
    )


def run_task1(
    config: ExperimentConfig,
    spec: Optional[TaskISpec] = None,
    keep_datasets: bool = False,
) -> List[Task1Result]:
    """Pointer-state classification: accuracy versus integration time.

    Returns one result per sweep value (a single-element list when no
    sweep is configured).  Each result carries the nonlinear variant and,
    when requested, a linear twin and a class-means baseline trained on
    the same pooled-time dataset; ``keep_datasets`` additionally attaches
    the raw test-split features for persistence.
    """
    spec = spec if spec is not None else TaskISpec()
    sweep_values = config.sweep.values if config.sweep else (None,)
    results = []
    for value in sweep_values:
        point_spec = (
            _apply_sweep_task1(spec, config.sweep.name, value)
            if value is not None
            else spec
        )
        variants: Dict[str, VariantCurves] = {}
        datasets: Dict[str, tuple] = {}
        specs = {"nonlinear": point_spec}
        if config.compare_linear:
            specs["linear"] = _linear_task1(point_spec)
        for name, s in specs.items():
            times, per_class = _task1_features(s, config)
            q_total = config.q_train + config.q_test
            train_sl = slice(0, config.q_train)
            test_sl = slice(config.q_train, q_total)
            x_tr, y_tr, t_tr, _ = _stack_task1(per_class, train_sl, times, q_total)
            x_te, y_te, t_te, traj_te = _stack_task1(
                per_class, test_sl, times, q_total
            )
            if keep_datasets:
                datasets[name] = (x_te, y_te, t_te, traj_te)
            layer, info = train(
                x_tr,
                y_tr,
                n_classes=s.n_classes,
                train_phases=config.train_phases,
                fit_biases=config.fit_biases,
            )
            variants[name] = _curves_from_samples(
                name, times, x_tr, y_tr, t_tr, x_te, y_te, t_te, layer, info
            )
            if name == "nonlinear" and config.compare_means_baseline:
                base_layer = train_on_means_baseline(x_tr, y_tr, s.n_classes)
                base_info = TrainingInfo(
                    converged=True,
                    n_iterations=0,
                    loss=float("nan"),
                    grad_norm=float("nan"),
                    train_accuracy=float(
                        np.mean(predict(base_layer, x_tr.T) == y_tr)
                    ),
                )
                variants["means_baseline"] = _curves_from_samples(
                    "means_baseline",
                    times,
                    x_tr,
                    y_tr,
                    t_tr,
                    x_te,
                    y_te,
                    t_te,
                    base_layer,
                    base_info,
                )
        results.append(
            Task1Result(
                times=times,
                variants=variants,
                sweep_value=value,
                datasets=datasets if keep_datasets else None,
            )
        )
    return results


# --------------------------------------------------------------------------
# Amplifier-state task (accuracy versus shot count)


def _task2_final_features(
    spec: TaskIISpec, config: ExperimentConfig, pa_gain: Optional[float]
) -> Dict[int, np.ndarray]:
    """Per-class boxcar features at the final time for every pool shot."""
    ns_max = max(config.shot_counts)
    pool = (config.q_train + config.q_test) * ns_max
    out: Dict[int, np.ndarray] = {}
    for sigma in range(1, spec.n_classes + 1):
        chain = _task2_chain(spec, sigma, pa_gain)
        base = (sigma - 1) * pool
        values = run_record_pool(
            chain, config.integrator, range(base, base + pool), workers=config.n_workers
        )
        _, filt = boxcar_filter(
            config.integrator.stored_times(), values, t0=config.readout.t0
        )
        out[sigma] = interleave_channels(filt[:, -1])  # (pool, 2K) at t_f
    return out


def _pool_shots(feats: np.ndarray, n_shots: int, n_groups: int) -> np.ndarray:
    """Average disjoint consecutive groups of shots into output samples."""
    need = n_shots * n_groups
    if feats.shape[0] < need:
        raise ValueError(f"pool of {feats.shape[0]} shots cannot form {n_groups} groups of {n_shots}")
    return feats[:need].reshape(n_groups, n_shots, -1).mean(axis=1)


def run_task2(
    config: ExperimentConfig,
    spec: Optional[TaskIISpec] = None,
    keep_datasets: bool = False,
) -> List[Task2Result]:
    """Amplifier-state classification: accuracy versus shots per sample.

    The trajectory pool per class is sized for the largest shot count;
    smaller counts reuse its leading shots with disjoint grouping.  The
    readout is retrained at each shot count.  ``keep_datasets`` attaches
    the test-split features at the largest shot count; the trajectory id
    recorded per sample is that of the first raw shot in its group.
    """
    spec = spec if spec is not None else TaskIISpec()
    sweep_values = config.sweep.values if config.sweep else (None,)
    ns_max = max(config.shot_counts)
    t_final = float(config.integrator.stored_times()[-1])
    results = []
    for value in sweep_values:
        if value is not None:
            point_spec, pa_gain = _apply_sweep_task2(
                spec, config.sweep.name, value, config
            )
        else:
            point_spec, pa_gain = spec, config.pa_gain
        variants: Dict[str, VariantCurves] = {}
        datasets: Dict[str, tuple] = {}
        specs = {"nonlinear": point_spec}
        if config.compare_linear:
            specs["linear"] = _linear_task2(point_spec)
        for name, s in specs.items():
            per_class = _task2_final_features(s, config, pa_gain)
            pool = (config.q_train + config.q_test) * ns_max
            axis = np.array(sorted(config.shot_counts), dtype=np.float64)
            acc_tr = np.empty(axis.shape[0])
            acc_te = np.empty(axis.shape[0])
            last_layer, last_info = None, None
            for i, ns in enumerate(sorted(config.shot_counts)):
                xs_tr, ys_tr, xs_te, ys_te, traj_te = [], [], [], [], []
                for sigma, feats in per_class.items():
                    train_pool = feats[: config.q_train * ns_max]
                    test_pool = feats[config.q_train * ns_max :]
                    xs_tr.append(_pool_shots(train_pool, ns, config.q_train))
                    ys_tr.append(np.full(config.q_train, sigma, dtype=np.int64))
                    xs_te.append(_pool_shots(test_pool, ns, config.q_test))
                    ys_te.append(np.full(config.q_test, sigma, dtype=np.int64))
                    traj_te.append(
                        (sigma - 1) * pool
                        + config.q_train * ns_max
                        + np.arange(config.q_test, dtype=np.int64) * ns
                    )
                x_tr = np.concatenate(xs_tr).T
                y_tr = np.concatenate(ys_tr)
                x_te = np.concatenate(xs_te).T
                y_te = np.concatenate(ys_te)
                layer, info = train(
                    x_tr, y_tr, n_classes=s.n_classes, fit_biases=config.fit_biases
                )
                acc_tr[i] = np.mean(predict(layer, x_tr.T) == y_tr)
                acc_te[i] = np.mean(predict(layer, x_te.T) == y_te)
                last_layer, last_info = layer, info
                if keep_datasets and ns == ns_max:
                    datasets[name] = (
                        x_te,
                        y_te,
                        np.full(y_te.shape[0], t_final),
                        np.concatenate(traj_te),
                    )
            variants[name] = VariantCurves(
                name=name,
                axis=axis,
                test_accuracy=acc_te,
                train_accuracy=acc_tr,
                layer=last_layer,
                training=last_info,
                summary=metrics(axis, acc_te),
            )
        results.append(
            Task2Result(
                shot_counts=tuple(sorted(config.shot_counts)),
                variants=variants,
                sweep_value=value,
                datasets=datasets if keep_datasets else None,
            )
        )
    return results


# --------------------------------------------------------------------------
# Unconditional diagnostics


def run_b12_instances(
    spec: Optional[TaskIISpec] = None,
    instances: Optional[Sequence[Tuple[float, float]]] = None,
) -> List[Tuple[float, float, float]]:
    """Steady-state class distance B12 for each (eta_eff, lambda) instance.

    Returns (eta_eff_target, lambda, b12) rows ordered as given.  All
    instances share the scaling that fixes the effective nonlinearity, so
    b12 ordering tracks the bare Kerr strength.
    """
    spec = spec if spec is not None else TaskIISpec()
    if instances is None:
        from .presets import TASK2_DRIVE_INSTANCES

        instances = TASK2_DRIVE_INSTANCES
    rows = []
    for eta_eff, lam in instances:
        s = task2_drive_instance(spec, eta_eff, lam)
        value = b12_metric(build_task2_chain(s, 1), build_task2_chain(s, 2))
        rows.append((float(eta_eff), float(lam), float(value)))
    return rows


def single_kerr_chain(
    delta: float, lam: float, eta: float, gamma: float, monitored: bool = True
) -> ChainSpec:
    """One monitored driven Kerr mode, the basic benchmarking system."""
    from .blocks import CoherentDrive, Detuning, Kerr, Loss
    from .state import ModeNetwork

    return ChainSpec(
        ModeNetwork(["b"]),
        (
            Detuning("b", delta),
            Kerr("b", lam),
            CoherentDrive("b", eta),
            Loss("b", gamma, monitored=monitored),
        ),
    )


def matched_noise_benchmark_chain(
    kappa1: float = 0.5,
    g1: float = 0.3,
    gamma_c: float = 0.5,
    eta: float = 0.894,
    lambda_bar: float = 0.1,
    delta_bar: float = -1.0,
    gamma_bar: float = 1.0,
) -> ChainSpec:
    """Squeezed drive mode feeding one monitored Kerr node via a circulator.

    Small enough (two modes, one measured channel) that the full
    density-matrix route stays affordable, so conditional trajectories of
    both integrators can be compared on identical noise streams.
    """
    from .blocks import (
        CirculatorCoupling,
        CoherentDrive,
        DegenerateParametric,
        Detuning,
        Kerr,
        Loss,
    )
    from .state import ModeNetwork

    network = ModeNetwork(["a1", "b1"])
    blocks = (
        CoherentDrive("a1", 1j * eta),
        Loss("a1", kappa1),
        DegenerateParametric("a1", g1, phase=-0.5 * math.pi),
        CirculatorCoupling("a1", "b1", g_c=gamma_c, gamma_c=gamma_c),
        Detuning("b1", delta_bar),
        Kerr("b1", lambda_bar),
        Loss("b1", gamma_bar, monitored=True),
    )
    return ChainSpec(network, blocks)


def _l1_discrepancy(candidate: np.ndarray, reference: np.ndarray) -> float:
    """Time-averaged absolute gap over time-averaged reference magnitude."""
    num = float(np.sum(np.abs(candidate - reference)))
    den = float(np.sum(np.abs(reference)))
    return num / max(den, 1e-300)


def matched_noise_report(
    chain: ChainSpec,
    config: IntegratorConfig,
    cutoffs: Sequence[int],
    trajectory_index: int = 0,
) -> dict:
    """Cumulant vs density-matrix conditional run on one noise stream.

    Both integrators consume exactly the same Wiener increments, so the
    moment series differ only through the closure.  Reported discrepancies
    are L1 time averages normalized by the reference (density-matrix)
    magnitude: first-order moments per mode, then the worst second
    cumulant over all (i, j) entries of both covariance blocks.
    """
    from .oracles.fock import fock_simulate

    ens = simulate_ensemble(
        chain,
        config,
        [trajectory_index],
        store_states=True,
        store_cumulants=True,
    )
    if ens.failed:
        raise TrajectoryFailure(f"cumulant trajectory blew up: {ens.failed}")
    fock = fock_simulate(chain, cutoffs, config, trajectory_index=trajectory_index)

    n = ens.mu.shape[2]
    mu_err = [
        _l1_discrepancy(ens.mu[0][:, i], fock.mu[:, i]) for i in range(n)
    ]
    second_err = []
    for i in range(n):
        for j in range(n):
            second_err.append(
                _l1_discrepancy(ens.c_bb_series[0][:, i, j], fock.c_bb[:, i, j])
            )
            second_err.append(
                _l1_discrepancy(ens.c_bdb_series[0][:, i, j], fock.c_bdb[:, i, j])
            )
    return {
        "modes": list(chain.network.labels),
        "trajectory_index": int(trajectory_index),
        "cutoffs": [int(c) for c in cutoffs],
        "mu_rel_err": [float(e) for e in mu_err],
        "max_mu_rel_err": float(max(mu_err)),
        "max_second_cumulant_rel_err": float(max(second_err)),
        "fock_max_leakage": float(fock.max_leakage),
        "fock_max_trace_dev": float(fock.max_trace_dev),
    }


def steady_oracle_scan(
    lambda_over_gamma: float,
    delta_over_gamma: float = -1.0,
    drive_grid: Optional[np.ndarray] = None,
    gamma: float = 1.0,
) -> List[dict]:
    """Truncated-cumulant vs exact steady moments for a driven Kerr mode.

    Scans the dimensionless drive with parameter continuation (each
    steady-state solve starts from the previous solution) and returns one
    row per drive point with both methods' |<b>|, C_{b†b}, |C_bb| and the
    relative errors.
    """
    from .oracles.exact_moments import KerrParams, steady_state_cumulants
    from .integrate import steady_state

    if drive_grid is None:
        drive_grid = np.linspace(0.1, 0.45, 20)
    lam = lambda_over_gamma * gamma
    delta = delta_over_gamma * gamma
    rows = []
    previous = None
    for script_n in np.asarray(drive_grid, dtype=np.float64):
        eta = script_n * gamma / math.sqrt(lambda_over_gamma)
        chain = single_kerr_chain(delta, lam, eta, gamma)
        state = steady_state(chain, initial=previous)
        previous = state
        mu_exact, cbb_exact, cbdb_exact = steady_state_cumulants(
            KerrParams(delta=delta, lam=lam, eta=eta, gamma_total=gamma)
        )
        mu = abs(state.mu[0])
        cbdb = float(state.c_bdb[0, 0].real)
        cbb = abs(state.c_bb[0, 0])
        mu_x = abs(mu_exact)
        cbdb_x = float(cbdb_exact)
        cbb_x = abs(cbb_exact)
        rows.append(
            {
                "drive": float(script_n),
                "eta": float(eta),
                "mu_teom": mu,
                "mu_exact": mu_x,
                "mu_rel_err": abs(mu - mu_x) / max(abs(mu_x), 1e-300),
                "cbdb_teom": cbdb,
                "cbdb_exact": cbdb_x,
                "cbdb_rel_err": abs(cbdb - cbdb_x) / max(abs(cbdb_x), 1e-300),
                "cbb_teom": cbb,
                "cbb_exact": cbb_x,
                "cbb_rel_err": abs(cbb - cbb_x) / max(abs(cbb_x), 1e-300),
            }
        )
    return rows
