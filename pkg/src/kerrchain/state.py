"""Truncated-cumulant description of a network of bosonic modes.

An N-mode network is tracked through the first-order means mu_i = <b_i>
together with the second-order normal-ordered cumulants C(b_i, b_j)
(symmetric in i,j) and C(b_i^dag, b_j) (Hermitian). All cumulants of
order three and higher are truncated to zero, which is exact for
Gaussian states and a controlled approximation close to them.

The real degree-of-freedom count of this description is 2N^2 + 3N:
2N for the means, N(N+1) for the symmetric complex matrix C(b,b), and
N^2 for the Hermitian matrix C(b^dag, b) (N real diagonal entries plus
N(N-1)/2 independent complex off-diagonals).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Sequence, Tuple

import numpy as np

MAX_MOMENT_ORDER = 4

__all__ = [
    "MAX_MOMENT_ORDER",
    "ModeNetwork",
    "MomentIndex",
    "CumulantState",
    "QuadratureStats",
    "set_partitions",
    "moments_to_cumulants",
    "cumulants_to_moments",
    "quadrature_stats",
    "flat_size",
    "to_flat",
    "from_flat",
]


@dataclass(frozen=True)
class ModeNetwork:
    """Ordered collection of labelled bosonic modes."""

    labels: Tuple[str, ...]

    def __init__(self, labels: Sequence[str]):
        labels = tuple(labels)
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate mode labels in {labels!r}")
        if not labels:
            raise ValueError("a mode network needs at least one mode")
        object.__setattr__(self, "labels", labels)

    @property
    def n_modes(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown mode label {label!r}; have {self.labels}") from None


@dataclass(frozen=True, order=True)
class MomentIndex:
    """Multi-index of one normal-ordered operator product.

    ``daggers`` holds the mode indices of creation operators and
    ``plains`` those of annihilation operators; within a normal-ordered
    product only the multiset of each matters, so both are kept sorted.
    """

    daggers: Tuple[int, ...]
    plains: Tuple[int, ...]

    def __init__(self, daggers: Iterable[int] = (), plains: Iterable[int] = ()):
        daggers = tuple(sorted(int(i) for i in daggers))
        plains = tuple(sorted(int(i) for i in plains))
        order = len(daggers) + len(plains)
        if order < 1:
            raise ValueError("moment index must contain at least one operator")
        if order > MAX_MOMENT_ORDER:
            raise ValueError(
                f"moment order {order} exceeds supported maximum {MAX_MOMENT_ORDER}"
            )
        if any(i < 0 for i in daggers + plains):
            raise ValueError("mode indices must be non-negative")
        object.__setattr__(self, "daggers", daggers)
        object.__setattr__(self, "plains", plains)

    @property
    def order(self) -> int:
        return len(self.daggers) + len(self.plains)

    def conjugate(self) -> "MomentIndex":
        return MomentIndex(daggers=self.plains, plains=self.daggers)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        ops = [f"bd{i}" for i in self.daggers] + [f"b{i}" for i in self.plains]
        return "<" + " ".join(ops) + ">"


# A slot is one operator instance: (mode index, is_dagger). Partitions act on
# slot positions so that repeated operators are counted with the right
# multiplicity.
_Slot = Tuple[int, bool]


def _slots(index: MomentIndex) -> List[_Slot]:
    return [(i, True) for i in index.daggers] + [(i, False) for i in index.plains]


def _index_of_slots(slots: Sequence[_Slot]) -> MomentIndex:
    return MomentIndex(
        daggers=(i for i, dag in slots if dag),
        plains=(i for i, dag in slots if not dag),
    )


def set_partitions(items: Sequence) -> Iterator[List[List]]:
    """Yield every partition of ``items`` into non-empty blocks."""

    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partition in set_partitions(rest):
        for k in range(len(partition)):
            yield partition[:k] + [[first] + partition[k]] + partition[k + 1 :]
        yield [[first]] + partition


def moments_to_cumulants(
    moments: Dict[MomentIndex, complex],
) -> Dict[MomentIndex, complex]:
    """Convert normal-ordered moments to cumulants of the same indices.

    Uses C(S) = sum over partitions pi of the operator slots of
    (-1)^(|pi|-1) (|pi|-1)! prod_B <B>. Every sub-moment that a partition
    needs must be present in ``moments``.
    """

    cumulants: Dict[MomentIndex, complex] = {}
    for index in sorted(moments, key=lambda ix: ix.order):
        total = 0.0 + 0.0j
        for partition in set_partitions(_slots(index)):
            sign = (-1) ** (len(partition) - 1)
            weight = sign * float(math.factorial(len(partition) - 1))
            product = 1.0 + 0.0j
            for block in partition:
                sub = _index_of_slots(block)
                try:
                    product *= moments[sub]
                except KeyError:
                    raise KeyError(
                        f"moment {sub!r} required to reduce {index!r} is missing"
                    ) from None
            total += weight * product
        cumulants[index] = total
    return cumulants


def cumulants_to_moments(
    cumulants: Dict[MomentIndex, complex],
) -> Dict[MomentIndex, complex]:
    """Invert :func:`moments_to_cumulants`: <S> = sum_pi prod_B C(B)."""

    moments: Dict[MomentIndex, complex] = {}
    for index in sorted(cumulants, key=lambda ix: ix.order):
        total = 0.0 + 0.0j
        for partition in set_partitions(_slots(index)):
            product = 1.0 + 0.0j
            for block in partition:
                sub = _index_of_slots(block)
                try:
                    product *= cumulants[sub]
                except KeyError:
                    raise KeyError(
                        f"cumulant {sub!r} required to build {index!r} is missing"
                    ) from None
            total += product
        moments[index] = total
    return moments


@dataclass
class CumulantState:
    """Means and second cumulants of a mode network.

    Attributes
    ----------
    network:
        The mode network this state lives on.
    mu:
        Complex means <b_i>, shape (N,).
    c_bb:
        Symmetric matrix of C(b_i, b_j), shape (N, N).
    c_bdb:
        Hermitian matrix with [i, j] = C(b_i^dag, b_j), shape (N, N).
    """

    network: ModeNetwork
    mu: np.ndarray
    c_bb: np.ndarray
    c_bdb: np.ndarray

    @classmethod
    def vacuum(cls, network: ModeNetwork) -> "CumulantState":
        n = network.n_modes
        return cls(
            network=network,
            mu=np.zeros(n, dtype=np.complex128),
            c_bb=np.zeros((n, n), dtype=np.complex128),
            c_bdb=np.zeros((n, n), dtype=np.complex128),
        )

    @classmethod
    def coherent(cls, network: ModeNetwork, alphas: Sequence[complex]) -> "CumulantState":
        """Product of coherent states |alpha_i>; all cumulants beyond first order vanish."""
        state = cls.vacuum(network)
        alphas = np.asarray(alphas, dtype=np.complex128)
        if alphas.shape != (network.n_modes,):
            raise ValueError(
                f"need {network.n_modes} amplitudes, got shape {alphas.shape}"
            )
        state.mu[:] = alphas
        return state

    def copy(self) -> "CumulantState":
        return CumulantState(
            network=self.network,
            mu=self.mu.copy(),
            c_bb=self.c_bb.copy(),
            c_bdb=self.c_bdb.copy(),
        )

    def cumulant(self, index: MomentIndex) -> complex:
        """Cumulant of this state for any supported multi-index (order <= 4)."""
        if index.order == 1:
            if index.daggers:
                return complex(np.conj(self.mu[index.daggers[0]]))
            return complex(self.mu[index.plains[0]])
        if index.order == 2:
            d, p = index.daggers, index.plains
            if len(p) == 2:
                return complex(self.c_bb[p[0], p[1]])
            if len(d) == 2:
                return complex(np.conj(self.c_bb[d[0], d[1]]))
            return complex(self.c_bdb[d[0], p[0]])
        return 0.0 + 0.0j  # truncation: third and fourth cumulants vanish

    def moment(self, index: MomentIndex) -> complex:
        """Normal-ordered moment implied by the truncated cumulants."""
        total = 0.0 + 0.0j
        for partition in set_partitions(_slots(index)):
            product = 1.0 + 0.0j
            for block in partition:
                product *= self.cumulant(_index_of_slots(block))
                if product == 0.0:
                    break
            total += product
        return total

    def validate(self, atol: float = 0.0) -> None:
        """Check structural invariants (exact by construction in the integrator)."""
        if not (np.all(np.isfinite(self.mu.view(np.float64)))
                and np.all(np.isfinite(self.c_bb.view(np.float64)))
                and np.all(np.isfinite(self.c_bdb.view(np.float64)))):
            raise ValueError("state contains non-finite entries")
        sym = np.max(np.abs(self.c_bb - self.c_bb.T)) if self.c_bb.size else 0.0
        herm = np.max(np.abs(self.c_bdb - self.c_bdb.conj().T)) if self.c_bdb.size else 0.0
        if sym > atol or herm > atol:
            raise ValueError(
                f"symmetry violated: |c_bb - c_bb^T|={sym:.3e}, "
                f"|c_bdb - c_bdb^H|={herm:.3e} (allowed {atol:.1e})"
            )


@dataclass(frozen=True)
class QuadratureStats:
    """Gaussian quadrature summary of one mode."""

    mean_x: float
    mean_p: float
    var_max: float
    var_min: float
    angle: float  # orientation of the maximal-variance quadrature


def quadrature_stats(state: CumulantState, mode: str) -> QuadratureStats:
    """Quadrature means and extremal variances of one mode.

    With X_theta = (b e^{-i theta} + b^dag e^{i theta})/sqrt(2), the variance is
    1/2 + C(b^dag,b) + Re[C(b,b) e^{-2 i theta}], extremal at theta = arg C(b,b) / 2.
    """

    k = state.network.index(mode)
    mu = state.mu[k]
    cbb = state.c_bb[k, k]
    nbar = float(np.real(state.c_bdb[k, k]))
    base = 0.5 + nbar
    return QuadratureStats(
        mean_x=float(np.sqrt(2.0) * mu.real),
        mean_p=float(np.sqrt(2.0) * mu.imag),
        var_max=base + abs(cbb),
        var_min=base - abs(cbb),
        angle=float(np.angle(cbb) / 2.0) if cbb != 0 else 0.0,
    )


def flat_size(n_modes: int) -> int:
    """Number of real degrees of freedom: 2N^2 + 3N."""
    return 2 * n_modes * n_modes + 3 * n_modes


def to_flat(state: CumulantState) -> np.ndarray:
    """Serialize to a flat float64 vector (exact, no arithmetic).

    Layout, for N modes:
      [0, N)           Re mu
      [N, 2N)          Im mu
      then for i <= j in row-major order: Re c_bb[i,j], Im c_bb[i,j]
      then for i <  j in row-major order: Re c_bdb[i,j], Im c_bdb[i,j]
      then the N real diagonal entries of c_bdb.
    """

    n = state.network.n_modes
    out = np.empty(flat_size(n), dtype=np.float64)
    out[:n] = state.mu.real
    out[n : 2 * n] = state.mu.imag
    pos = 2 * n
    for i in range(n):
        for j in range(i, n):
            out[pos] = state.c_bb[i, j].real
            out[pos + 1] = state.c_bb[i, j].imag
            pos += 2
    for i in range(n):
        for j in range(i + 1, n):
            out[pos] = state.c_bdb[i, j].real
            out[pos + 1] = state.c_bdb[i, j].imag
            pos += 2
    for i in range(n):
        out[pos] = state.c_bdb[i, i].real
        pos += 1
    return out


def from_flat(network: ModeNetwork, vec: np.ndarray) -> CumulantState:
    """Inverse of :func:`to_flat`; reconstructs exact symmetry/Hermiticity."""

    n = network.n_modes
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (flat_size(n),):
        raise ValueError(f"expected flat vector of length {flat_size(n)}, got {vec.shape}")
    state = CumulantState.vacuum(network)
    state.mu[:] = vec[:n] + 1j * vec[n : 2 * n]
    pos = 2 * n
    for i in range(n):
        for j in range(i, n):
            value = vec[pos] + 1j * vec[pos + 1]
            state.c_bb[i, j] = value
            state.c_bb[j, i] = value
            pos += 2
    for i in range(n):
        for j in range(i + 1, n):
            value = vec[pos] + 1j * vec[pos + 1]
            state.c_bdb[i, j] = value
            state.c_bdb[j, i] = np.conj(value)
            pos += 2
    for i in range(n):
        state.c_bdb[i, i] = vec[pos]
        pos += 1
    return state
