"""Time integration of the cumulant equations of motion.

Conditional trajectories use Euler-Maruyama with a fixed step: the drift
combines the Liouvillian terms and the deterministic measurement backaction
on second cumulants, while Wiener increments enter only through the mean
innovations (the stochastic terms of second cumulants involve third-order
cumulants, which vanish at this truncation). Heterodyne records are sampled
per step as mean-part + dW/dt and decimated by block averaging, so that
downstream boxcar integrals of the stored record equal those of the full-rate
record exactly.

Noise is counter-based: trajectory `i` of a run seeded with `seed` draws its
increments from a Philox stream keyed by (seed, i), with the draw for (step,
channel, quadrature) at a fixed counter offset. Any sub-range of a
trajectory's noise can therefore be regenerated without storing noise files,
and simulations are reproducible byte-for-byte regardless of chunking.

All times are in units of the inverse dominant rate (1/kappa or 1/gamma-bar
for the preset chains); default step dt = 1e-3 in those units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from scipy.special import ndtri

from .blocks import (
    ChainOperators,
    ChainSpec,
    compile_chain,
    cumulant_drift,
    heterodyne_current_means,
    innovation_coefficients,
    mean_drift,
    measurement_backaction,
)
from .state import CumulantState, ModeNetwork, to_flat

__all__ = [
    "IntegratorConfig",
    "HeterodyneRecord",
    "TrajectoryResult",
    "EnsembleResult",
    "StateSeries",
    "TrajectoryBlowupError",
    "SteadyStateError",
    "noise_normals",
    "step_conditional",
    "simulate_trajectory",
    "simulate_ensemble",
    "evolve_unconditional",
    "steady_state",
    "linear_steady_state",
]


class TrajectoryBlowupError(RuntimeError):
    """A trajectory produced non-finite state values.

    Divergence of the truncated equations marks entry into the
    strong-nonlinearity regime where the closure is invalid; it is reported,
    never silently clipped.
    """

    def __init__(self, trajectory_index: int, time: float):
        self.trajectory_index = trajectory_index
        self.time = time
        super().__init__(
            f"trajectory {trajectory_index} became non-finite by t = {time:.6g}"
        )


class SteadyStateError(RuntimeError):
    """Steady-state search failed (unstable dynamics or no convergence)."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integration settings.

    dt and t_final are in units of the inverse dominant rate. store_stride
    decimates the output grid: stored samples are block averages (records)
    and block-end values (states) over consecutive windows of that many steps.
    """

    dt: float = 1e-3
    t_final: float = 10.0
    scheme: str = "euler_maruyama"
    seed: int = 0
    store_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_final < self.dt:
            raise ValueError("t_final must be at least one step")
        if self.scheme != "euler_maruyama":
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not (isinstance(self.store_stride, int) and self.store_stride >= 1):
            raise ValueError("store_stride must be an integer >= 1")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must fit in 64 bits")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_final / self.dt - 1e-9))

    @property
    def n_stored(self) -> int:
        return -(-self.n_steps // self.store_stride)

    def stored_times(self) -> np.ndarray:
        """Block-end times of the stored grid."""
        edges = np.minimum(
            (np.arange(self.n_stored, dtype=np.int64) + 1) * self.store_stride,
            self.n_steps,
        )
        return edges * self.dt


@dataclass
class HeterodyneRecord:
    """Stored heterodyne currents of one trajectory.

    values[m, k, 0] and values[m, k, 1] are the X and P currents of measured
    channel k, block-averaged over store_stride integration steps ending at
    times[m]. J carries the white measurement noise, so values scale like
    1/sqrt(dt * stride) around the slowly varying mean part.
    """

    times: np.ndarray
    values: np.ndarray
    dt: float
    store_stride: int
    seed: int
    trajectory_index: int

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    def channel(self, k: int, quadrature: str) -> np.ndarray:
        q = {"X": 0, "P": 1}[quadrature]
        return self.values[:, k, q]


@dataclass
class TrajectoryResult:
    """One conditional trajectory: sampled states plus its measurement record."""

    times: np.ndarray
    states: List[CumulantState]
    record: HeterodyneRecord


@dataclass
class StateSeries:
    """Deterministic (unconditional) evolution sampled on the stored grid."""

    times: np.ndarray
    states: List[CumulantState]

    def final(self) -> CumulantState:
        return self.states[-1]


@dataclass
class EnsembleResult:
    """Batched conditional trajectories.

    mu is stored for every trajectory and stored time; full cumulant series
    are kept only when requested (they are identical across trajectories for
    linear chains and large to store otherwise). Trajectories that left the
    valid regime are listed in `failed` with their blowup-detection times and
    carry NaNs from that point on.
    """

    times: np.ndarray
    trajectory_indices: np.ndarray
    mu: Optional[np.ndarray]  # (Q, n_stored, N) or None
    record_values: np.ndarray  # (Q, n_stored, n_channels, 2)
    final_mu: np.ndarray  # (Q, N)
    final_c_bb: np.ndarray  # (Q, N, N)
    final_c_bdb: np.ndarray  # (Q, N, N)
    c_bb_series: Optional[np.ndarray]  # (Q, n_stored, N, N) if requested
    c_bdb_series: Optional[np.ndarray]
    seed: int
    dt: float
    store_stride: int
    failed: List[Tuple[int, float]] = field(default_factory=list)

    @property
    def n_trajectories(self) -> int:
        return len(self.trajectory_indices)

    def record(self, position: int) -> HeterodyneRecord:
        """Record of the trajectory at the given batch position."""
        return HeterodyneRecord(
            times=self.times,
            values=self.record_values[position],
            dt=self.dt,
            store_stride=self.store_stride,
            seed=self.seed,
            trajectory_index=int(self.trajectory_indices[position]),
        )


_U64 = np.uint64


def noise_normals(
    seed: int,
    trajectory_index: int,
    step_start: int,
    n_steps: int,
    n_channels: int,
) -> np.ndarray:
    """Standard-normal draws for steps [step_start, step_start + n_steps).

    Returns shape (n_steps, n_channels, 2), the trailing axis being the
    (X, P) quadratures. The draw for (step, channel, quadrature) sits at
    counter position (step * n_channels + channel) * 2 + quadrature of the
    Philox stream keyed by (seed, trajectory_index), so identical values are
    produced for any chunking of the same step range.

    Normals come from the inverse CDF applied to 53-bit uniforms; rejection
    samplers are avoided because they consume a variable number of raw draws,
    which would break counter addressing.
    """

    raw = _raw_noise_words(seed, trajectory_index, step_start, n_steps, n_channels)
    return _words_to_normals(raw).reshape(n_steps, n_channels, 2)


def _raw_noise_words(seed, trajectory_index, step_start, n_steps, n_channels):
    bitgen = np.random.Philox(key=np.array([seed, trajectory_index], dtype=_U64))
    offset = 2 * n_channels * step_start
    # advance() moves the 128-bit counter, i.e. four 64-bit words at a time;
    # sub-block positioning discards the leading remainder words.
    blocks, rem = divmod(offset, 4)
    if blocks:
        bitgen.advance(blocks)
    raw = bitgen.random_raw(rem + 2 * n_channels * n_steps)
    return raw[rem:] if rem else raw


def _words_to_normals(raw: np.ndarray) -> np.ndarray:
    # 53-bit mantissa uniform in the open interval (0, 1), then inverse CDF.
    u = (raw >> _U64(11)) * 2.0**-53 + 2.0**-54
    return ndtri(u)


def _as_operators(chain: Union[ChainSpec, ChainOperators]) -> ChainOperators:
    if isinstance(chain, ChainOperators):
        return chain
    return compile_chain(chain)


def _initial_arrays(ops, initial, batch):
    n = ops.n_modes
    if initial is None:
        mu = np.zeros((batch, n), dtype=np.complex128)
        c_bb = np.zeros((batch, n, n), dtype=np.complex128)
        c_bdb = np.zeros((batch, n, n), dtype=np.complex128)
        return mu, c_bb, c_bdb
    if isinstance(initial, CumulantState):
        initial = [initial] * batch
    if len(initial) != batch:
        raise ValueError("need one initial state per trajectory")
    mu = np.stack([s.mu for s in initial]).astype(np.complex128)
    c_bb = np.stack([s.c_bb for s in initial]).astype(np.complex128)
    c_bdb = np.stack([s.c_bdb for s in initial]).astype(np.complex128)
    return mu, c_bb, c_bdb


def _drift_batch(ops, mu, c_bb, c_bdb, conditional, classical=False):
    d_mu = mean_drift(ops, mu, c_bb, c_bdb, classical=classical)
    if classical:
        return d_mu, np.zeros_like(c_bb), np.zeros_like(c_bdb)
    d_bb, d_bdb = cumulant_drift(ops, mu, c_bb, c_bdb)
    if conditional:
        m_bb, m_bdb = measurement_backaction(ops, c_bb, c_bdb)
        d_bb = d_bb + m_bb
        d_bdb = d_bdb + m_bdb
    return d_mu, d_bb, d_bdb


def step_conditional(
    state: CumulantState,
    chain: Union[ChainSpec, ChainOperators],
    dW: np.ndarray,
    dt: float,
) -> CumulantState:
    """One conditional Euler-Maruyama step.

    dW has shape (n_channels, 2) and must hold N(0, dt) increments supplied
    by the caller; passing increments from a stored record enables
    record-matched replay against other integrators. dW = 0 gives the
    deterministic conditional update (drift plus backaction only).
    """

    ops = _as_operators(chain)
    dW = np.asarray(dW, dtype=np.float64).reshape(1, ops.n_channels, 2)
    mu = state.mu[None, :].astype(np.complex128)
    c_bb = state.c_bb[None, :, :].astype(np.complex128)
    c_bdb = state.c_bdb[None, :, :].astype(np.complex128)
    d_mu, d_bb, d_bdb = _drift_batch(ops, mu, c_bb, c_bdb, conditional=True)
    xi_x, xi_p = innovation_coefficients(ops, c_bb, c_bdb)
    mu_new = (
        mu
        + dt * d_mu
        + np.einsum("qcn,qc->qn", xi_x, dW[:, :, 0])
        + np.einsum("qcn,qc->qn", xi_p, dW[:, :, 1])
    )
    new = CumulantState(
        network=state.network,
        mu=mu_new[0],
        c_bb=(c_bb + dt * d_bb)[0],
        c_bdb=(c_bdb + dt * d_bdb)[0],
    )
    if not np.isfinite(new.mu).all():
        raise TrajectoryBlowupError(-1, float("nan"))
    return new


def simulate_ensemble(
    chain: Union[ChainSpec, ChainOperators],
    config: IntegratorConfig,
    trajectory_indices: Sequence[int],
    initial=None,
    store_states: bool = True,
    store_cumulants: bool = False,
    noise_chunk: int = 2048,
) -> EnsembleResult:
    """Integrate a batch of conditional trajectories.

    Each trajectory index addresses an independent noise stream, so results
    are identical however the indices are split across calls or processes
    (ordered reduction is the caller's concern). Blowups freeze the affected
    trajectory at NaN and are reported in the result rather than raised.
    """

    ops = _as_operators(chain)
    idx = np.asarray(list(trajectory_indices), dtype=np.int64)
    batch = len(idx)
    if batch == 0:
        raise ValueError("empty trajectory batch")
    n, n_ch = ops.n_modes, ops.n_channels
    dt, stride = config.dt, config.store_stride
    n_steps, n_stored = config.n_steps, config.n_stored
    root_dt = math.sqrt(dt)

    mu, c_bb, c_bdb = _initial_arrays(ops, initial, batch)
    times = config.stored_times()
    mu_series = (
        np.empty((batch, n_stored, n), dtype=np.complex128) if store_states else None
    )
    cbb_series = (
        np.empty((batch, n_stored, n, n), dtype=np.complex128)
        if store_cumulants
        else None
    )
    cbd_series = (
        np.empty((batch, n_stored, n, n), dtype=np.complex128)
        if store_cumulants
        else None
    )
    rec_values = np.zeros((batch, n_stored, n_ch, 2), dtype=np.float64)
    alive = np.ones(batch, dtype=bool)
    failed: List[Tuple[int, float]] = []

    j_accum = np.zeros((batch, n_ch, 2), dtype=np.float64)
    block_fill = 0
    slot = 0
    step = 0
    # Overflow is the blowup detector's job, not a warning condition.
    with np.errstate(over="ignore", invalid="ignore"):
        while step < n_steps:
            m = min(noise_chunk, n_steps - step)
            raw = np.empty((batch, 2 * n_ch * m), dtype=_U64)
            for q in range(batch):
                raw[q] = _raw_noise_words(config.seed, int(idx[q]), step, m, n_ch)
            dW = (_words_to_normals(raw.reshape(-1)).reshape(batch, m, n_ch, 2)) * root_dt

            for s in range(m):
                if n_ch:
                    j_accum += heterodyne_current_means(ops, mu) + dW[:, s] / dt
                d_mu, d_bb, d_bdb = _drift_batch(ops, mu, c_bb, c_bdb, conditional=True)
                if n_ch:
                    xi_x, xi_p = innovation_coefficients(ops, c_bb, c_bdb)
                    mu = (
                        mu
                        + dt * d_mu
                        + np.einsum("qcn,qc->qn", xi_x, dW[:, s, :, 0])
                        + np.einsum("qcn,qc->qn", xi_p, dW[:, s, :, 1])
                    )
                else:
                    mu = mu + dt * d_mu
                c_bb = c_bb + dt * d_bb
                c_bdb = c_bdb + dt * d_bdb
                step += 1
                block_fill += 1
                if block_fill == stride or step == n_steps:
                    rec_values[:, slot] = j_accum / block_fill
                    if store_states:
                        mu_series[:, slot] = mu
                    if store_cumulants:
                        cbb_series[:, slot] = c_bb
                        cbd_series[:, slot] = c_bdb
                    ok = (
                        np.isfinite(mu).all(axis=1)
                        & np.isfinite(c_bb).all(axis=(1, 2))
                        & np.isfinite(c_bdb).all(axis=(1, 2))
                    )
                    newly_dead = alive & ~ok
                    if newly_dead.any():
                        t_now = step * dt
                        for q in np.nonzero(newly_dead)[0]:
                            failed.append((int(idx[q]), t_now))
                            mu[q] = np.nan
                            c_bb[q] = np.nan
                            c_bdb[q] = np.nan
                        alive &= ok
                    j_accum[:] = 0.0
                    block_fill = 0
                    slot += 1

    return EnsembleResult(
        times=times,
        trajectory_indices=idx,
        mu=mu_series,
        record_values=rec_values,
        final_mu=mu,
        final_c_bb=c_bb,
        final_c_bdb=c_bdb,
        c_bb_series=cbb_series,
        c_bdb_series=cbd_series,
        seed=config.seed,
        dt=dt,
        store_stride=stride,
        failed=failed,
    )


def simulate_trajectory(
    chain: Union[ChainSpec, ChainOperators],
    config: IntegratorConfig,
    trajectory_index: int,
    initial: Optional[CumulantState] = None,
) -> TrajectoryResult:
    """One conditional trajectory with its full sampled state series.

    Deterministic function of (config.seed, trajectory_index): reruns produce
    bitwise-identical states and records.
    """

    ops = _as_operators(chain)
    network = _network_of(chain, ops)
    result = simulate_ensemble(
        ops,
        config,
        [trajectory_index],
        initial=None if initial is None else [initial],
        store_states=True,
        store_cumulants=True,
    )
    if result.failed:
        _, t = result.failed[0]
        raise TrajectoryBlowupError(trajectory_index, t)
    states = [
        CumulantState(
            network=network,
            mu=result.mu[0, s].copy(),
            c_bb=result.c_bb_series[0, s].copy(),
            c_bdb=result.c_bdb_series[0, s].copy(),
        )
        for s in range(len(result.times))
    ]
    return TrajectoryResult(
        times=result.times, states=states, record=result.record(0)
    )


def _network_of(chain, ops) -> ModeNetwork:
    if isinstance(chain, ChainSpec):
        return chain.network
    return ops.network


def evolve_unconditional(
    chain: Union[ChainSpec, ChainOperators],
    config: IntegratorConfig,
    initial: Optional[CumulantState] = None,
    classical: bool = False,
) -> StateSeries:
    """Deterministic evolution: drift only, no backaction, no innovations.

    classical=True freezes all cumulants at their initial values (zero from
    vacuum) and drops cumulant feedback from the mean equations, giving the
    mean-field limit.
    """

    ops = _as_operators(chain)
    network = _network_of(chain, ops)
    mu, c_bb, c_bdb = _initial_arrays(
        ops, None if initial is None else [initial], 1
    )
    dt, stride, n_steps = config.dt, config.store_stride, config.n_steps
    times = config.stored_times()
    states: List[CumulantState] = []
    for step in range(1, n_steps + 1):
        d_mu, d_bb, d_bdb = _drift_batch(
            ops, mu, c_bb, c_bdb, conditional=False, classical=classical
        )
        mu = mu + dt * d_mu
        c_bb = c_bb + dt * d_bb
        c_bdb = c_bdb + dt * d_bdb
        if step % stride == 0 or step == n_steps:
            if not np.isfinite(mu).all():
                raise TrajectoryBlowupError(-1, step * dt)
            states.append(
                CumulantState(
                    network=network, mu=mu[0].copy(), c_bb=c_bb[0].copy(),
                    c_bdb=c_bdb[0].copy(),
                )
            )
    return StateSeries(times=times, states=states)


def linear_steady_state(
    chain: Union[ChainSpec, ChainOperators]
) -> CumulantState:
    """Closed-form steady state of a Kerr-free chain.

    Solves the doubled linear system for the means and a Sylvester equation
    for the covariance blocks; requires the doubled drift matrix to be
    Hurwitz (otherwise no steady state exists and an error is raised).
    """

    ops = _as_operators(chain)
    if ops.kerr:
        raise ValueError("chain is nonlinear; use steady_state")
    n = ops.n_modes
    big = np.block([[ops.a, ops.b], [np.conj(ops.b), np.conj(ops.a)]])
    eigs = np.linalg.eigvals(big)
    if eigs.real.max() >= -1e-12:
        raise SteadyStateError(
            f"linear dynamics not stable: max Re eig = {eigs.real.max():.3e}"
        )
    rhs = np.concatenate([ops.c, np.conj(ops.c)])
    mu_full = np.linalg.solve(big, -rhs)
    d_full = np.block(
        [[ops.d_bb, ops.d_bdb.T], [ops.d_bdb, np.conj(ops.d_bb)]]
    )
    cov = scipy.linalg.solve_sylvester(big, big.T, -d_full)
    c_bb = 0.5 * (cov[:n, :n] + cov[:n, :n].T)
    c_bdb = cov[n:, :n]
    c_bdb = 0.5 * (c_bdb + c_bdb.conj().T)
    return CumulantState(
        network=ops.network, mu=mu_full[:n], c_bb=c_bb, c_bdb=c_bdb
    )


def _drift_flat(ops, network, y: np.ndarray) -> np.ndarray:
    from .state import from_flat

    state = from_flat(network, y)
    d_mu, d_bb, d_bdb = _drift_batch(
        ops,
        state.mu[None],
        state.c_bb[None],
        state.c_bdb[None],
        conditional=False,
    )
    return to_flat(
        CumulantState(network=network, mu=d_mu[0], c_bb=d_bb[0], c_bdb=d_bdb[0])
    )


def steady_state(
    chain: Union[ChainSpec, ChainOperators],
    tol: float = 1e-10,
    initial: Optional[CumulantState] = None,
    relax_dt: float = 1e-2,
    max_time: float = 3000.0,
) -> CumulantState:
    """Unconditional steady state with ||drift||_inf < tol.

    Linear chains are solved in closed form. Nonlinear chains relax by
    coarse Euler integration until the drift is small, then a damped Newton
    iteration polishes the root; near a bistability the converged branch is
    the attractor selected by the initial condition (vacuum by default).
    When `initial` is supplied, Newton is tried from it directly first,
    which makes parameter-continuation sweeps cheap. Non-convergence raises
    SteadyStateError (limit cycles or marginal points are reported, not
    guessed).
    """

    ops = _as_operators(chain)
    network = _network_of(chain, ops)
    if not ops.kerr:
        return linear_steady_state(ops)
    from .state import from_flat

    mu, c_bb, c_bdb = _initial_arrays(
        ops, None if initial is None else [initial], 1
    )
    if initial is not None:
        y = to_flat(
            CumulantState(network=network, mu=mu[0], c_bb=c_bb[0], c_bdb=c_bdb[0])
        )
        try:
            return from_flat(network, _newton_polish(ops, network, y, tol))
        except SteadyStateError:
            pass  # fall back to relaxation from the same start

    span = 10.0
    steps_per_span = int(round(span / relax_dt))
    elapsed = 0.0
    norm = np.inf
    while elapsed < max_time:
        for _ in range(steps_per_span):
            d_mu, d_bb, d_bdb = _drift_batch(ops, mu, c_bb, c_bdb, conditional=False)
            mu = mu + relax_dt * d_mu
            c_bb = c_bb + relax_dt * d_bb
            c_bdb = c_bdb + relax_dt * d_bdb
        elapsed += span
        if not np.isfinite(mu).all():
            raise SteadyStateError(f"diverged during relaxation at t = {elapsed:g}")
        norm = max(
            np.abs(d_mu).max(), np.abs(d_bb).max(), np.abs(d_bdb).max()
        )
        if norm < 1e-3:
            break
    if not np.isfinite(norm) or norm >= 1e-3:
        raise SteadyStateError(
            f"relaxation did not settle within t = {max_time:g} "
            f"(||drift|| = {norm:.3e}); possible limit cycle"
        )

    y = to_flat(
        CumulantState(network=network, mu=mu[0], c_bb=c_bb[0], c_bdb=c_bdb[0])
    )
    return from_flat(network, _newton_polish(ops, network, y, tol))


def _newton_polish(ops, network, y, tol, max_iter=60):
    """Damped Newton on the flat drift, finite-difference Jacobian."""

    r = _drift_flat(ops, network, y)
    best = np.abs(r).max()
    dim = y.size
    for _ in range(max_iter):
        if best < tol:
            return y
        jac = np.empty((dim, dim))
        for j in range(dim):
            h = 1e-7 * max(1.0, abs(y[j]))
            yp = y.copy()
            yp[j] += h
            jac[:, j] = (_drift_flat(ops, network, yp) - r) / h
        try:
            delta = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError as exc:
            raise SteadyStateError(f"singular Jacobian in Newton polish: {exc}")
        scale = 1.0
        for _ in range(30):
            y_try = y + scale * delta
            r_try = _drift_flat(ops, network, y_try)
            n_try = np.abs(r_try).max()
            if n_try < best:
                y, r, best = y_try, r_try, n_try
                break
            scale *= 0.5
        else:
            raise SteadyStateError(
                f"Newton stalled with ||drift|| = {best:.3e} (tol {tol:.1e}); "
                "possible limit cycle or marginal point"
            )
    raise SteadyStateError(
        f"no convergence after {max_iter} Newton iterations; ||drift|| = {best:.3e}"
    )
