"""Liouvillian building blocks for monitored Kerr-oscillator chains.

Every block except :class:`Kerr` is quadratic: a Hamiltonian of the form

    H = sum_ij F_ij b_i^dag b_j
      + 1/2 sum_ij (S_ij b_i^dag b_j^dag + conj(S_ij) b_i b_j)
      + sum_i (f_i b_i^dag + conj(f_i) b_i)

with F Hermitian and S symmetric, plus dissipators D[o] with linear jump
operators o = sum_i (u_i b_i + w_i b_i^dag). Such terms close exactly on the
means and second cumulants:

    d mu/dt     = A mu + B conj(mu) + c
    dC_bb/dt    = A C_bb + C_bb A^T + B C_bdb + (B C_bdb)^T + D_bb
    dC_bdb/dt   = conj(A) C_bdb + C_bdb A^T + conj(B) C_bb + conj(C_bb) B^T + D_bdb

where (all derived from the adjoint action; vacuum fixes the constants)

    A = -iF + sum_l Gamma_l/2 (w w^H - conj(u) u^T)
    B = -iS + sum_l Gamma_l/2 (w u^H - conj(u) w^T)
    c = -i f
    D_bb  = -iS - sum_l Gamma_l/2 (conj(u) w^T + w u^H)   (symmetric)
    D_bdb = sum_l Gamma_l conj(w) w^T                      (Hermitian, >= 0)

The Kerr block adds the only state-dependent nonlinear terms; their exact
truncated form (third/fourth cumulants set to zero) is implemented in
:func:`mean_drift` / :func:`cumulant_drift`.

Continuous heterodyne monitoring of a Loss channel k adds, per quadrature,
an innovation term on the means and a deterministic conditioning term on the
second cumulants; see :func:`innovation_coefficients` and
:func:`measurement_backaction`.

All drift functions are batched: means have shape (Q, N) and cumulant
matrices (Q, N, N). Updates are assembled in exactly symmetric (T + T^T) and
exactly Hermitian (U + U^H) pairs so the structural invariants of
:class:`~kerrchain.state.CumulantState` hold bit-exactly after every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple, Union

import numpy as np

from .state import ModeNetwork

__all__ = [
    "Detuning",
    "Kerr",
    "CoherentDrive",
    "BeamSplitter",
    "DegenerateParametric",
    "NonDegenerateParametric",
    "Loss",
    "DirectionalAmpCoupling",
    "CirculatorCoupling",
    "Block",
    "ChainSpec",
    "ChainOperators",
    "compile_chain",
    "mean_drift",
    "cumulant_drift",
    "measurement_backaction",
    "innovation_coefficients",
    "heterodyne_current_means",
]


@dataclass(frozen=True)
class Detuning:
    """Rotating-frame detuning: H = -delta * b^dag b."""

    mode: str
    delta: float


@dataclass(frozen=True)
class Kerr:
    """Self-Kerr nonlinearity: H = -(strength/2) * b^dag b^dag b b."""

    mode: str
    strength: float


@dataclass(frozen=True)
class CoherentDrive:
    """Coherent drive H = conj(amplitude) b + amplitude b^dag, so d<b>/dt = -i*amplitude."""

    mode: str
    amplitude: complex


@dataclass(frozen=True)
class BeamSplitter:
    """Excitation-conserving coupling H = rate (b_a b_b^dag + b_a^dag b_b)."""

    mode_a: str
    mode_b: str
    rate: float


@dataclass(frozen=True)
class DegenerateParametric:
    """Single-mode squeezing H = (rate/2)(e^{i phase} b^2 + e^{-i phase} b^dag^2)."""

    mode: str
    rate: float
    phase: float = 0.0


@dataclass(frozen=True)
class NonDegenerateParametric:
    """Two-mode squeezing H = rate (e^{i phase} b_a b_b + e^{-i phase} b_a^dag b_b^dag)."""

    mode_a: str
    mode_b: str
    rate: float
    phase: float = 0.0


@dataclass(frozen=True)
class Loss:
    """Single-photon loss rate*D[b]. Monitored channels are heterodyned."""

    mode: str
    rate: float
    monitored: bool = False


@dataclass(frozen=True)
class DirectionalAmpCoupling:
    """Cascaded coupling that feeds the source's X quadrature into the target.

    H = -g_c * P_target * X_source together with gamma_c * D[X_source + i P_target].
    For g_c = gamma_c the source evolves as if the target were absent, while the
    target's X mean is driven by -2*gamma_c*<X_source> (and picks up added noise).
    """

    source: str
    target: str
    g_c: float
    gamma_c: float


@dataclass(frozen=True)
class CirculatorCoupling:
    """Unidirectional coupling through a circulator.

    H = (i/2) g_c (b_source^dag b_target - b_source b_target^dag) together with
    gamma_c * D[b_source + b_target]. For g_c = gamma_c the source only gains
    local damping gamma_c/2 while the target is damped at gamma_c/2 and driven
    by -gamma_c <b_source>.
    """

    source: str
    target: str
    g_c: float
    gamma_c: float


Block = Union[
    Detuning,
    Kerr,
    CoherentDrive,
    BeamSplitter,
    DegenerateParametric,
    NonDegenerateParametric,
    Loss,
    DirectionalAmpCoupling,
    CirculatorCoupling,
]


@dataclass(frozen=True)
class ChainSpec:
    """A mode network plus the ordered Liouvillian blocks acting on it.

    Monitored Loss blocks define the heterodyne channels; their order in
    ``blocks`` fixes the Wiener-increment ordering (X then P per channel).
    """

    network: ModeNetwork
    blocks: Tuple[Block, ...]

    def __init__(self, network: ModeNetwork, blocks: Sequence[Block]):
        object.__setattr__(self, "network", network)
        object.__setattr__(self, "blocks", tuple(blocks))
        for block in self.blocks:
            for attr in ("mode", "mode_a", "mode_b", "source", "target"):
                label = getattr(block, attr, None)
                if label is not None:
                    network.index(label)  # raises on unknown labels
        seen = set()
        for mode, _rate in self.measured_channels():
            if mode in seen:
                raise ValueError(
                    f"mode {self.network.labels[mode]!r} has more than one monitored loss"
                )
            seen.add(mode)

    def measured_channels(self) -> List[Tuple[int, float]]:
        """(mode index, rate) of each monitored loss, in block order."""
        return [
            (self.network.index(b.mode), b.rate)
            for b in self.blocks
            if isinstance(b, Loss) and b.monitored
        ]

    @property
    def n_channels(self) -> int:
        return len(self.measured_channels())

    def kerr_terms(self) -> List[Tuple[int, float]]:
        return [
            (self.network.index(b.mode), b.strength)
            for b in self.blocks
            if isinstance(b, Kerr) and b.strength != 0.0
        ]

    def is_linear(self) -> bool:
        return not self.kerr_terms()


@dataclass
class ChainOperators:
    """Compiled drift data for one chain (see module docstring for the math)."""

    network: ModeNetwork
    a: np.ndarray  # (N, N) coefficient of mu in d mu/dt
    b: np.ndarray  # (N, N) coefficient of conj(mu)
    c: np.ndarray  # (N,) constant drive
    d_bb: np.ndarray  # (N, N) constant source of C_bb, symmetric
    d_bdb: np.ndarray  # (N, N) constant source of C_bdb, Hermitian
    kerr: List[Tuple[int, float]]  # (mode index, strength)
    channels: List[Tuple[int, float]]  # monitored (mode index, rate)

    @property
    def n_modes(self) -> int:
        return self.network.n_modes

    @property
    def n_channels(self) -> int:
        return len(self.channels)


def _hamiltonian_terms(chain: ChainSpec):
    """Collect (F, S, f) of the quadratic Hamiltonian part."""
    n = chain.network.n_modes
    idx = chain.network.index
    F = np.zeros((n, n), dtype=np.complex128)
    S = np.zeros((n, n), dtype=np.complex128)
    f = np.zeros(n, dtype=np.complex128)
    for block in chain.blocks:
        if isinstance(block, Detuning):
            F[idx(block.mode), idx(block.mode)] += -block.delta
        elif isinstance(block, CoherentDrive):
            f[idx(block.mode)] += block.amplitude
        elif isinstance(block, BeamSplitter):
            i, j = idx(block.mode_a), idx(block.mode_b)
            F[i, j] += block.rate
            F[j, i] += block.rate
        elif isinstance(block, DegenerateParametric):
            k = idx(block.mode)
            S[k, k] += block.rate * np.exp(-1j * block.phase)
        elif isinstance(block, NonDegenerateParametric):
            i, j = idx(block.mode_a), idx(block.mode_b)
            amp = block.rate * np.exp(-1j * block.phase)
            S[i, j] += amp
            S[j, i] += amp
        elif isinstance(block, DirectionalAmpCoupling):
            s, t = idx(block.source), idx(block.target)
            # -g P_t X_s = (i g/2)(b_t b_s + b_t b_s^dag - b_t^dag b_s - b_t^dag b_s^dag)
            F[s, t] += 0.5j * block.g_c
            F[t, s] += -0.5j * block.g_c
            S[s, t] += -0.5j * block.g_c
            S[t, s] += -0.5j * block.g_c
        elif isinstance(block, CirculatorCoupling):
            s, t = idx(block.source), idx(block.target)
            F[s, t] += 0.5j * block.g_c
            F[t, s] += -0.5j * block.g_c
    return F, S, f


def _jump_operators(chain: ChainSpec) -> List[Tuple[float, np.ndarray, np.ndarray]]:
    """All dissipators as (rate, u, w) with jump o = u.b + w.b^dag."""
    n = chain.network.n_modes
    idx = chain.network.index
    out: List[Tuple[float, np.ndarray, np.ndarray]] = []
    for block in chain.blocks:
        if isinstance(block, Loss):
            u = np.zeros(n, dtype=np.complex128)
            u[idx(block.mode)] = 1.0
            out.append((block.rate, u, np.zeros(n, dtype=np.complex128)))
        elif isinstance(block, DirectionalAmpCoupling):
            s, t = idx(block.source), idx(block.target)
            u = np.zeros(n, dtype=np.complex128)
            w = np.zeros(n, dtype=np.complex128)
            r = 1.0 / math.sqrt(2.0)
            u[s] = r
            u[t] = r
            w[s] = r
            w[t] = -r
            out.append((block.gamma_c, u, w))
        elif isinstance(block, CirculatorCoupling):
            s, t = idx(block.source), idx(block.target)
            u = np.zeros(n, dtype=np.complex128)
            u[s] = 1.0
            u[t] = 1.0
            out.append((block.gamma_c, u, np.zeros(n, dtype=np.complex128)))
    return out


def compile_chain(chain: ChainSpec) -> ChainOperators:
    """Assemble the constant drift arrays of a chain."""

    n = chain.network.n_modes
    F, S, f = _hamiltonian_terms(chain)
    A = -1j * F
    B = -1j * S
    c = -1j * f
    d_bb = -1j * S.copy()
    d_bdb = np.zeros((n, n), dtype=np.complex128)
    for rate, u, w in _jump_operators(chain):
        cu = np.conj(u)
        cw = np.conj(w)
        A += 0.5 * rate * (np.outer(w, cw) - np.outer(cu, u))
        B += 0.5 * rate * (np.outer(w, cu) - np.outer(cu, w))
        d_bb += -0.5 * rate * (np.outer(cu, w) + np.outer(w, cu))
        d_bdb += rate * np.outer(cw, w)
    return ChainOperators(
        network=chain.network,
        a=A,
        b=B,
        c=c,
        d_bb=0.5 * (d_bb + d_bb.T),  # exact symmetry against accumulation order
        d_bdb=0.5 * (d_bdb + d_bdb.conj().T),
        kerr=chain.kerr_terms(),
        channels=chain.measured_channels(),
    )


def mean_drift(
    ops: ChainOperators,
    mu: np.ndarray,
    c_bb: np.ndarray,
    c_bdb: np.ndarray,
    classical: bool = False,
) -> np.ndarray:
    """d<b_i>/dt for a batch of states.

    The Kerr mode k contributes i*Lambda*<b^dag b b> with the truncated
    expansion <b^dag b b> = conj(mu) mu^2 + C_bb conj(mu) + 2 C_bdb mu.
    ``classical=True`` drops the cumulant feedback (mean-field limit).
    """

    out = mu @ ops.a.T + np.conj(mu) @ ops.b.T + ops.c
    for k, lam in ops.kerr:
        mk = mu[:, k]
        term = np.conj(mk) * mk * mk
        if not classical:
            term = term + c_bb[:, k, k] * np.conj(mk) + 2.0 * c_bdb[:, k, k] * mk
        out[:, k] += 1j * lam * term
    return out


def cumulant_drift(
    ops: ChainOperators,
    mu: np.ndarray,
    c_bb: np.ndarray,
    c_bdb: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """(dC_bb/dt, dC_bdb/dt) for a batch; exactly symmetric / Hermitian."""

    # Quadratic part: same-A conjugation plus constant sources.
    t_sym = np.einsum("ij,qjk->qik", ops.a, c_bb) + np.einsum(
        "ij,qjk->qik", ops.b, c_bdb
    )
    d_bb = t_sym + t_sym.transpose(0, 2, 1) + ops.d_bb
    u_herm = np.einsum("ij,qjk->qik", np.conj(ops.a), c_bdb) + np.einsum(
        "ij,qjk->qik", np.conj(ops.b), c_bb
    )
    d_bdb = u_herm + u_herm.conj().transpose(0, 2, 1) + ops.d_bdb

    # Kerr terms, truncated at second order.
    for k, lam in ops.kerr:
        mk = mu[:, k]
        ckk_bb = c_bb[:, k, k]
        ckk_bd = c_bdb[:, k, k].real
        n_coh = (np.conj(mk) * mk).real  # |<b_k>|^2
        alpha = mk * mk + ckk_bb  # <b_k^2> of the Kerr mode
        beta = n_coh + ckk_bd  # <b_k^dag b_k>

        # Diagonal of the Kerr mode itself.
        d_bb[:, k, k] += 1j * lam * (
            (1.0 + 4.0 * n_coh + 6.0 * ckk_bd) * ckk_bb
            + mk * mk * (1.0 + 2.0 * ckk_bd)
        )
        d_bdb[:, k, k] += 2.0 * lam * np.imag(ckk_bb * np.conj(mk) ** 2)

        # Cross terms with every other mode j != k (exact truncated forms):
        #   dC(b_j, b_k)      += i L [alpha C(b_k^dag,b_j) + 2 beta C(b_j,b_k)]
        #   dC(b_j^dag, b_k)  += i L [alpha conj(C(b_j,b_k)) + 2 beta C(b_j^dag,b_k)]
        v_bb = 1j * lam * (
            alpha[:, None] * c_bdb[:, k, :] + 2.0 * beta[:, None] * c_bb[:, :, k]
        )
        v_bd = 1j * lam * (
            alpha[:, None] * np.conj(c_bb[:, :, k])
            + 2.0 * beta[:, None] * c_bdb[:, :, k]
        )
        v_bb[:, k] = 0.0
        v_bd[:, k] = 0.0
        d_bb[:, :, k] += v_bb
        d_bb[:, k, :] += v_bb
        d_bdb[:, :, k] += v_bd
        d_bdb[:, k, :] += np.conj(v_bd)
    return d_bb, d_bdb


def measurement_backaction(
    ops: ChainOperators,
    c_bb: np.ndarray,
    c_bdb: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Deterministic conditioning of the second cumulants under heterodyne.

    Summing the X and P quadrature contributions of channel k gives

        dC(o1,o2)       += -gamma_k [C(o1,b_k) C(b_k^dag,o2) + C(b_k^dag,o1) C(o2,b_k)] dt

    i.e. for the stored matrices, with p_i = C(b_i,b_k) and q_i = C(b_k^dag,b_i):

        dC_bb  += -gamma_k (p q^T + q p^T)
        dC_bdb += -gamma_k (conj(q) q^T + conj(p) p^T)
    """

    d_bb = np.zeros_like(c_bb)
    d_bdb = np.zeros_like(c_bdb)
    for k, gamma in ops.channels:
        p = c_bb[:, :, k]
        q = c_bdb[:, k, :]
        d_bb -= gamma * (
            np.einsum("qi,qj->qij", p, q) + np.einsum("qi,qj->qij", q, p)
        )
        d_bdb -= gamma * (
            np.einsum("qi,qj->qij", np.conj(q), q)
            + np.einsum("qi,qj->qij", np.conj(p), p)
        )
    return d_bb, d_bdb


def innovation_coefficients(
    ops: ChainOperators,
    c_bb: np.ndarray,
    c_bdb: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Stochastic mean updates per unit Wiener increment.

    Returns (xi_x, xi_p), each of shape (Q, n_channels, N):

        d<b_i> += xi_x[k,i] dW_k^X + xi_p[k,i] dW_k^P
        xi_x[k,i] = sqrt(gamma_k/2) (C(b_i,b_k) + C(b_k^dag,b_i))
        xi_p[k,i] = i sqrt(gamma_k/2) (C(b_k^dag,b_i) - C(b_i,b_k))
    """

    batch, n = c_bb.shape[0], c_bb.shape[1]
    xi_x = np.zeros((batch, ops.n_channels, n), dtype=np.complex128)
    xi_p = np.zeros((batch, ops.n_channels, n), dtype=np.complex128)
    for ch, (k, gamma) in enumerate(ops.channels):
        root = math.sqrt(gamma / 2.0)
        p = c_bb[:, :, k]
        q = c_bdb[:, k, :]
        xi_x[:, ch, :] = root * (p + q)
        xi_p[:, ch, :] = 1j * root * (q - p)
    return xi_x, xi_p


def heterodyne_current_means(ops: ChainOperators, mu: np.ndarray) -> np.ndarray:
    """Deterministic part of the heterodyne currents, shape (Q, n_channels, 2).

    J_k^X = sqrt(gamma_k/2) <b_k + b_k^dag> + dW_k^X/dt, and the P analog with
    <-i b_k + i b_k^dag>; this returns only the mean parts (X, P).
    """

    batch = mu.shape[0]
    out = np.empty((batch, ops.n_channels, 2), dtype=np.float64)
    for ch, (k, gamma) in enumerate(ops.channels):
        root = math.sqrt(gamma / 2.0)
        out[:, ch, 0] = 2.0 * root * mu[:, k].real
        out[:, ch, 1] = 2.0 * root * mu[:, k].imag
    return out
