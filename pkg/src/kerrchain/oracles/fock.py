"""Truncated-Fock-space reference integrator for monitored Kerr networks.

Independent benchmark route: the full conditional master equation

    drho = -i[H, rho] dt + sum_d gamma_d D[o_d] rho dt
           + sum_k sqrt(gamma_k/2) ( H[b_k] rho dW^X_k + H[-i b_k] rho dW^P_k )

with D[o]rho = o rho o' - {o'o, rho}/2 and H[o]rho = o rho + rho o'
- <o + o'> rho, is Euler-discretized on a dense density matrix over a
truncated Fock basis. Operators are built directly from their second-quantized
expressions per block, deliberately not sharing the quadratic-assembly code
used by the cumulant engine, so the two routes can disagree when either is
wrong. Wiener increments come from the same counter-addressed stream as the
cumulant integrator, making records comparable sample by sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from ..blocks import (
    BeamSplitter,
    ChainSpec,
    CirculatorCoupling,
    CoherentDrive,
    DegenerateParametric,
    Detuning,
    DirectionalAmpCoupling,
    Kerr,
    Loss,
    NonDegenerateParametric,
)
from ..integrate import HeterodyneRecord, IntegratorConfig, noise_normals
from ..state import CumulantState, ModeNetwork

__all__ = [
    "FockLeakageError",
    "FockOperators",
    "FockResult",
    "FockSteadyResult",
    "build_fock_operators",
    "fock_simulate",
    "fock_unconditional",
    "fock_steady_state",
]

DIM_CAP = 1600
LEAK_TOL = 1e-4


class FockLeakageError(RuntimeError):
    """Population reached the truncation boundary; increase cutoff."""


@dataclass
class FockOperators:
    """Sparse operator set for a chain on a truncated Fock space.

    dissipators are (rate, jump operator, monitored) triples in block order;
    the monitored ones define the heterodyne channels, ordered as in the
    chain. lower[k] annihilates mode k.
    """

    network: ModeNetwork
    cutoffs: Tuple[int, ...]
    dim: int
    lower: List[sp.csr_matrix]
    hamiltonian: sp.csr_matrix
    dissipators: List[Tuple[float, sp.csr_matrix, bool]]

    @property
    def measured(self) -> List[Tuple[float, sp.csr_matrix]]:
        return [(r, o) for r, o, m in self.dissipators if m]


def _embed(op: np.ndarray, mode: int, cutoffs: Sequence[int]) -> sp.csr_matrix:
    """Single-mode operator -> kron embedding over the full register."""

    out = sp.identity(1, format="csr", dtype=np.complex128)
    for k, d in enumerate(cutoffs):
        factor = sp.csr_matrix(op) if k == mode else sp.identity(
            d, format="csr", dtype=np.complex128
        )
        out = sp.kron(out, factor, format="csr")
    return out


def build_fock_operators(
    chain: ChainSpec,
    cutoffs: Sequence[int],
    dim_cap: int = DIM_CAP,
) -> FockOperators:
    """Assemble H and jump operators for every block of the chain."""

    network = chain.network
    cutoffs = tuple(int(c) for c in cutoffs)
    if len(cutoffs) != network.n_modes:
        raise ValueError("need one cutoff per mode")
    if any(c < 2 for c in cutoffs):
        raise ValueError("cutoffs must be at least 2")
    dim = int(np.prod(cutoffs))
    if dim > dim_cap:
        raise ValueError(f"Hilbert dimension {dim} exceeds cap {dim_cap}")

    def destroy(d: int) -> np.ndarray:
        return np.diag(np.sqrt(np.arange(1, d, dtype=np.float64)), 1).astype(
            np.complex128
        )

    lower = [_embed(destroy(cutoffs[k]), k, cutoffs) for k in range(len(cutoffs))]
    raise_ = [op.conj().T.tocsr() for op in lower]

    def quad_x(k: int) -> sp.csr_matrix:
        return ((lower[k] + raise_[k]) / math.sqrt(2.0)).tocsr()

    def quad_p(k: int) -> sp.csr_matrix:
        return (-1j * (lower[k] - raise_[k]) / math.sqrt(2.0)).tocsr()

    H = sp.csr_matrix((dim, dim), dtype=np.complex128)
    dissipators: List[Tuple[float, sp.csr_matrix, bool]] = []
    idx = network.index
    for block in chain.blocks:
        if isinstance(block, Detuning):
            k = idx(block.mode)
            H = H - block.delta * (raise_[k] @ lower[k])
        elif isinstance(block, Kerr):
            k = idx(block.mode)
            H = H - 0.5 * block.strength * (
                raise_[k] @ raise_[k] @ lower[k] @ lower[k]
            )
        elif isinstance(block, CoherentDrive):
            k = idx(block.mode)
            amp = complex(block.amplitude)
            H = H + amp * raise_[k] + np.conj(amp) * lower[k]
        elif isinstance(block, BeamSplitter):
            i, j = idx(block.mode_a), idx(block.mode_b)
            H = H + block.rate * (raise_[i] @ lower[j] + raise_[j] @ lower[i])
        elif isinstance(block, DegenerateParametric):
            k = idx(block.mode)
            amp = 0.5 * block.rate * np.exp(-1j * block.phase)
            H = H + amp * (raise_[k] @ raise_[k]) + np.conj(amp) * (
                lower[k] @ lower[k]
            )
        elif isinstance(block, NonDegenerateParametric):
            i, j = idx(block.mode_a), idx(block.mode_b)
            amp = block.rate * np.exp(-1j * block.phase)
            H = H + amp * (raise_[i] @ raise_[j]) + np.conj(amp) * (
                lower[j] @ lower[i]
            )
        elif isinstance(block, Loss):
            k = idx(block.mode)
            dissipators.append((block.rate, lower[k], block.monitored))
        elif isinstance(block, DirectionalAmpCoupling):
            s, t = idx(block.source), idx(block.target)
            H = H - block.g_c * (quad_p(t) @ quad_x(s))
            jump = (quad_x(s) + 1j * quad_p(t)).tocsr()
            dissipators.append((block.gamma_c, jump, False))
        elif isinstance(block, CirculatorCoupling):
            s, t = idx(block.source), idx(block.target)
            H = H + 0.5j * block.g_c * (
                raise_[s] @ lower[t] - raise_[t] @ lower[s]
            )
            dissipators.append((block.gamma_c, (lower[s] + lower[t]).tocsr(), False))
        else:  # pragma: no cover - ChainSpec validates block types
            raise TypeError(f"unsupported block {block!r}")

    return FockOperators(
        network=network,
        cutoffs=cutoffs,
        dim=dim,
        lower=lower,
        hamiltonian=H.tocsr(),
        dissipators=dissipators,
    )


@dataclass
class FockResult:
    """Moment series extracted from a Fock-space run.

    Arrays follow the cumulant integrator's storage grid: entry s holds the
    state at the end of stored block s, and record values are block averages
    of the heterodyne currents.
    """

    times: np.ndarray
    mu: np.ndarray  # (n_stored, n_modes)
    c_bb: np.ndarray  # (n_stored, n, n)
    c_bdb: np.ndarray  # (n_stored, n, n)
    record: Optional[HeterodyneRecord]
    final_rho: np.ndarray
    max_leakage: float
    max_trace_dev: float

    def final_state(self, network: ModeNetwork) -> CumulantState:
        return CumulantState(
            network=network,
            mu=self.mu[-1],
            c_bb=self.c_bb[-1],
            c_bdb=self.c_bdb[-1],
        )


def _sparse_expect(op: sp.csr_matrix, rho: np.ndarray) -> complex:
    # tr(op @ rho) touching only op's nonzeros
    return complex(op.multiply(rho.T).sum())


def _dense_mul_sparse(dense: np.ndarray, sparse: sp.csr_matrix) -> np.ndarray:
    return (sparse.T @ dense.T).T


def _leakage(rho: np.ndarray, cutoffs: Sequence[int]) -> float:
    pops = np.real(np.diag(rho)).reshape(tuple(cutoffs))
    worst = 0.0
    for axis in range(len(cutoffs)):
        sl: List[Union[slice, int]] = [slice(None)] * len(cutoffs)
        sl[axis] = -1
        worst = max(worst, float(pops[tuple(sl)].sum()))
    return worst


def _vacuum_rho(dim: int) -> np.ndarray:
    rho = np.zeros((dim, dim), dtype=np.complex128)
    rho[0, 0] = 1.0
    return rho


def _moments(
    ops: FockOperators,
    rho: np.ndarray,
    pair_bb: List[List[sp.csr_matrix]],
    pair_bdb: List[List[sp.csr_matrix]],
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = len(ops.lower)
    mu = np.array([_sparse_expect(ops.lower[k], rho) for k in range(n)])
    m_bb = np.empty((n, n), dtype=np.complex128)
    m_bdb = np.empty((n, n), dtype=np.complex128)
    for i in range(n):
        for j in range(n):
            m_bb[i, j] = _sparse_expect(pair_bb[i][j], rho)
            m_bdb[i, j] = _sparse_expect(pair_bdb[i][j], rho)
    c_bb = m_bb - np.outer(mu, mu)
    c_bdb = m_bdb - np.outer(mu.conj(), mu)
    return mu, c_bb, c_bdb


def fock_simulate(
    chain: ChainSpec,
    cutoffs: Sequence[int],
    config: IntegratorConfig,
    trajectory_index: int = 0,
    dW: Optional[np.ndarray] = None,
    initial_rho: Optional[np.ndarray] = None,
    conditional: bool = True,
    dim_cap: int = DIM_CAP,
) -> FockResult:
    """Single conditional trajectory (or unconditional evolution) on Fock space.

    dW overrides the generated noise when given, shaped (n_steps,
    n_channels, 2) in units of sqrt(dt) increments; by default the stream
    is noise_normals(config.seed, trajectory_index, ...) * sqrt(dt), i.e.
    exactly the increments the cumulant integrator consumes.
    """

    ops = build_fock_operators(chain, cutoffs, dim_cap=dim_cap)
    n_ch = len(ops.measured) if conditional else 0
    dt, stride = config.dt, config.store_stride
    n_steps, n_stored = config.n_steps, config.n_stored

    if conditional and n_ch:
        if dW is None:
            dW = noise_normals(
                config.seed, trajectory_index, 0, n_steps, n_ch
            ) * math.sqrt(dt)
        else:
            dW = np.asarray(dW, dtype=np.float64)
            if dW.shape != (n_steps, n_ch, 2):
                raise ValueError(
                    f"dW must have shape {(n_steps, n_ch, 2)}, got {dW.shape}"
                )
    else:
        dW = None

    h_nh = -1j * ops.hamiltonian
    for rate, op, _ in ops.dissipators:
        h_nh = h_nh - 0.5 * rate * (op.conj().T @ op)
    h_nh = h_nh.tocsr()
    jump_conj = [
        (rate, op, op.conj().tocsr(), monitored)
        for rate, op, monitored in ops.dissipators
    ]

    n = ops.network.n_modes
    pair_bb = [
        [(ops.lower[i] @ ops.lower[j]).tocsr() for j in range(n)] for i in range(n)
    ]
    pair_bdb = [
        [(ops.lower[i].conj().T @ ops.lower[j]).tocsr() for j in range(n)]
        for i in range(n)
    ]

    rho = _vacuum_rho(ops.dim) if initial_rho is None else np.array(
        initial_rho, dtype=np.complex128
    )

    times = config.stored_times()
    mu_series = np.empty((n_stored, n), dtype=np.complex128)
    cbb_series = np.empty((n_stored, n, n), dtype=np.complex128)
    cbd_series = np.empty((n_stored, n, n), dtype=np.complex128)
    rec_values = np.zeros((n_stored, max(n_ch, 0), 2), dtype=np.float64)

    max_leak = 0.0
    max_trace_dev = 0.0
    j_accum = np.zeros((max(n_ch, 0), 2), dtype=np.float64)
    block_fill = 0
    slot = 0
    for step in range(n_steps):
        t_part = h_nh @ rho
        increment = dt * (t_part + t_part.conj().T)
        ch = 0
        for rate, op, op_conj, monitored in jump_conj:
            j_op = op @ rho
            increment += (dt * rate) * _dense_mul_sparse(j_op, op_conj.T)
            if monitored and n_ch:
                tr_j = np.trace(j_op)
                scale = math.sqrt(rate / 2.0)
                j_accum[ch, 0] += 2.0 * scale * tr_j.real + dW[step, ch, 0] / dt
                j_accum[ch, 1] += 2.0 * scale * tr_j.imag + dW[step, ch, 1] / dt
                j_dag = j_op.conj().T
                increment += scale * (
                    (j_op + j_dag - 2.0 * tr_j.real * rho) * dW[step, ch, 0]
                    + (-1j * (j_op - j_dag) - 2.0 * tr_j.imag * rho)
                    * dW[step, ch, 1]
                )
                ch += 1
        rho = rho + increment
        tr = np.trace(rho).real
        if not np.isfinite(tr) or tr <= 0.0:
            raise RuntimeError(
                f"density matrix lost positivity/finiteness at t = {(step + 1) * dt:g}"
            )
        max_trace_dev = max(max_trace_dev, abs(tr - 1.0))
        rho /= tr
        rho = 0.5 * (rho + rho.conj().T)

        block_fill += 1
        if block_fill == stride or step == n_steps - 1:
            leak = _leakage(rho, ops.cutoffs)
            max_leak = max(max_leak, leak)
            if leak > LEAK_TOL:
                raise FockLeakageError(
                    f"top-level population {leak:.2e} at t = {(step + 1) * dt:g}; "
                    "increase cutoff"
                )
            mu, c_bb, c_bdb = _moments(ops, rho, pair_bb, pair_bdb)
            mu_series[slot] = mu
            cbb_series[slot] = c_bb
            cbd_series[slot] = c_bdb
            if n_ch:
                rec_values[slot] = j_accum / block_fill
            j_accum[:] = 0.0
            block_fill = 0
            slot += 1

    record = None
    if n_ch:
        record = HeterodyneRecord(
            times=times,
            values=rec_values,
            dt=dt,
            store_stride=stride,
            seed=config.seed,
            trajectory_index=trajectory_index,
        )
    return FockResult(
        times=times,
        mu=mu_series,
        c_bb=cbb_series,
        c_bdb=cbd_series,
        record=record,
        final_rho=rho,
        max_leakage=max_leak,
        max_trace_dev=max_trace_dev,
    )


def fock_unconditional(
    chain: ChainSpec,
    cutoffs: Sequence[int],
    config: IntegratorConfig,
    initial_rho: Optional[np.ndarray] = None,
    dim_cap: int = DIM_CAP,
) -> FockResult:
    """Deterministic master-equation evolution (no measurement terms)."""

    return fock_simulate(
        chain,
        cutoffs,
        config,
        initial_rho=initial_rho,
        conditional=False,
        dim_cap=dim_cap,
    )


@dataclass
class FockSteadyResult:
    state: CumulantState
    rho: np.ndarray
    residual: float


def fock_steady_state(
    chain: ChainSpec,
    cutoffs: Sequence[int],
    superop_dim_cap: int = 4096,
) -> FockSteadyResult:
    """Exact steady state from the nullspace of the dense Liouvillian.

    Row-major vectorization: vec(A rho B) = (A kron B^T) vec(rho). Practical
    for small registers only; the superoperator is dim^2 x dim^2.
    """

    ops = build_fock_operators(
        chain, cutoffs, dim_cap=int(math.isqrt(superop_dim_cap))
    )
    dim = ops.dim
    h = ops.hamiltonian.toarray()
    eye = np.eye(dim)
    liouv = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for rate, op, _ in ops.dissipators:
        o = op.toarray()
        odo = o.conj().T @ o
        liouv += rate * (
            np.kron(o, o.conj())
            - 0.5 * np.kron(odo, eye)
            - 0.5 * np.kron(eye, odo.T)
        )
    system = np.vstack([liouv, eye.reshape(1, -1)])
    rhs = np.zeros(dim * dim + 1, dtype=np.complex128)
    rhs[-1] = 1.0
    sol, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    rho = sol.reshape(dim, dim)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    residual = float(np.abs(liouv @ rho.reshape(-1)).max())
    leak = _leakage(rho, ops.cutoffs)
    if leak > LEAK_TOL:
        raise FockLeakageError(
            f"steady state touches the truncation boundary (population {leak:.2e})"
        )

    n = ops.network.n_modes
    pair_bb = [
        [(ops.lower[i] @ ops.lower[j]).tocsr() for j in range(n)] for i in range(n)
    ]
    pair_bdb = [
        [(ops.lower[i].conj().T @ ops.lower[j]).tocsr() for j in range(n)]
        for i in range(n)
    ]
    mu, c_bb, c_bdb = _moments(ops, rho, pair_bb, pair_bdb)
    state = CumulantState(network=ops.network, mu=mu, c_bb=c_bb, c_bdb=c_bdb)
    return FockSteadyResult(state=state, rho=rho, residual=residual)
