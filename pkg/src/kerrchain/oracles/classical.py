"""Classical fixed points of driven Kerr nodes in scaled units.

Mean-field limit of one or two Kerr nodes with symmetric beam-splitter
coupling, written in units of the per-node decay rate (time in 1/gamma,
amplitudes scaled so the Kerr coefficient drops out):

    db1/dt = (i*delta - 1/2) b1 - i*g b2 + i |b1|^2 b1 + n_drive
    db2/dt = (i*delta - 1/2) b2 - i*g b1 + i |b2|^2 b2

with the dimensionless drive n_drive real and applied to node 1 only.
Setting g = 0 decouples node 2 (whose only fixed point is then the origin),
which is how the single-node diagram is obtained.

For g = 0 the fixed-point photon number n = |b1|^2 solves the cubic

    n ((n + delta)^2 + 1/4) = n_drive^2,

solved exactly; the general case uses damped Newton iterations from a
deterministic ring of starting points. Stability comes from the 4x4
Jacobian of the flow in (b1, b1*, b2, b2*).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "ClassicalFixedPoint",
    "classical_fixed_points",
    "bistable_drive_interval",
    "PhaseDiagram",
    "phase_diagram",
]

logger = logging.getLogger(__name__)

_STABILITY_MARGIN = 1e-10
_DEDUP_TOL = 1e-8
_NEWTON_TOL = 1e-12
_NEWTON_MAX_ITER = 200


@dataclass(frozen=True)
class ClassicalFixedPoint:
    """One steady amplitude pair with its linear stability.

    amplitudes: (b1, b2); b2 is exactly 0 when the nodes are uncoupled.
    stable: max Re eigenvalue < -1e-10; marginal: |max Re| <= 1e-10.
    """

    amplitudes: Tuple[complex, complex]
    stable: bool
    max_re_eig: float
    marginal: bool = False


def _flow(v: np.ndarray, delta: float, g: float, n_drive: float) -> np.ndarray:
    """RHS for v = (b1, b1*, b2, b2*) treated as independent variables."""

    b1, b1c, b2, b2c = v
    lin = 1j * delta - 0.5
    return np.array(
        [
            lin * b1 - 1j * g * b2 + 1j * b1c * b1 * b1 + n_drive,
            np.conj(lin) * b1c + 1j * g * b2c - 1j * b1 * b1c * b1c + n_drive,
            lin * b2 - 1j * g * b1 + 1j * b2c * b2 * b2,
            np.conj(lin) * b2c + 1j * g * b1c - 1j * b2 * b2c * b2c,
        ]
    )


def _jacobian(v: np.ndarray, delta: float, g: float) -> np.ndarray:
    b1, b1c, b2, b2c = v
    lin = 1j * delta - 0.5
    return np.array(
        [
            [lin + 2j * b1c * b1, 1j * b1 * b1, -1j * g, 0.0],
            [-1j * b1c * b1c, np.conj(lin) - 2j * b1 * b1c, 0.0, 1j * g],
            [-1j * g, 0.0, lin + 2j * b2c * b2, 1j * b2 * b2],
            [0.0, 1j * g, -1j * b2c * b2c, np.conj(lin) - 2j * b2 * b2c],
        ]
    )


def _classify(v: np.ndarray, delta: float, g: float) -> ClassicalFixedPoint:
    eigs = np.linalg.eigvals(_jacobian(v, delta, g))
    max_re = float(eigs.real.max())
    return ClassicalFixedPoint(
        amplitudes=(complex(v[0]), complex(v[2])),
        stable=max_re < -_STABILITY_MARGIN,
        max_re_eig=max_re,
        marginal=abs(max_re) <= _STABILITY_MARGIN,
    )


def _single_node_roots(delta: float, n_drive: float) -> List[np.ndarray]:
    """Exact g=0 fixed points from the cubic in n = |b1|^2."""

    if n_drive == 0.0:
        return [np.zeros(4, dtype=complex)]
    coeffs = [1.0, 2.0 * delta, delta * delta + 0.25, -(n_drive * n_drive)]
    roots: List[np.ndarray] = []
    for n in np.roots(coeffs):
        if abs(n.imag) > 1e-9 * max(1.0, abs(n)):
            continue
        n = float(n.real)
        if n < 0.0:
            continue
        # one exact Newton step on the cubic tightens np.roots output
        p = ((n + delta) ** 2 + 0.25) * n - n_drive**2
        dp = 3.0 * n * n + 4.0 * delta * n + delta * delta + 0.25
        if dp != 0.0:
            n -= p / dp
        b1 = -n_drive / (1j * (delta + n) - 0.5)
        v = np.array([b1, np.conj(b1), 0.0, 0.0], dtype=complex)
        if np.abs(_flow(v, delta, 0.0, n_drive)).max() > 1e-7 * max(1.0, n_drive):
            continue  # spurious real part from a nearly-degenerate pair
        roots.append(v)
    return roots


def _newton_from(
    v: np.ndarray, delta: float, g: float, n_drive: float
) -> Optional[np.ndarray]:
    v = v.copy()
    r = _flow(v, delta, g, n_drive)
    best = np.abs(r).max()
    for _ in range(_NEWTON_MAX_ITER):
        if best < _NEWTON_TOL:
            # keep only physical roots where starred entries are conjugates
            if abs(v[1] - np.conj(v[0])) > 1e-9 or abs(v[3] - np.conj(v[2])) > 1e-9:
                return None
            return v
        try:
            step = np.linalg.solve(_jacobian(v, delta, g), -r)
        except np.linalg.LinAlgError:
            return None
        damping = 1.0
        for _ in range(40):
            v_try = v + damping * step
            r_try = _flow(v_try, delta, g, n_drive)
            n_try = np.abs(r_try).max()
            if n_try < best:
                v, r, best = v_try, r_try, n_try
                break
            damping *= 0.5
        else:
            return None
    return None


def _newton_roots(delta: float, g: float, n_drive: float) -> List[np.ndarray]:
    """Damped-Newton multi-start search for the coupled system.

    Starts on a ring of 16 phased points plus the origin, then iteratively
    reseeds from midpoints of the roots found so far; the second pass picks
    up saddles sitting between attractors that the ring alone can miss.
    """

    scale = max(abs(n_drive), abs(n_drive) ** (1.0 / 3.0), 0.3)
    lin = 1j * delta - 0.5
    starts = [np.zeros(4, dtype=complex)]
    for radius in (0.5 * scale, 1.5 * scale):
        for k in range(8):
            b1 = radius * np.exp(2j * np.pi * k / 8.0)
            b2 = 1j * g * b1 / lin if g != 0.0 else 0.0
            starts.append(np.array([b1, np.conj(b1), b2, np.conj(b2)], dtype=complex))

    roots: List[np.ndarray] = []
    for idx, v0 in enumerate(starts):
        root = _newton_from(v0, delta, g, n_drive)
        if root is None:
            logger.debug(
                "fixed-point start %d did not converge at delta=%g g=%g drive=%g",
                idx, delta, g, n_drive,
            )
            continue
        if all(np.abs(root - u).max() > _DEDUP_TOL for u in roots):
            roots.append(root)

    for _ in range(3):  # midpoint refinement passes
        seeds = list(roots) + [np.zeros(4, dtype=complex)]
        new_roots = []
        for a in range(len(seeds)):
            for b in range(a + 1, len(seeds)):
                root = _newton_from(
                    0.5 * (seeds[a] + seeds[b]), delta, g, n_drive
                )
                if root is None:
                    continue
                known = roots + new_roots
                if all(np.abs(root - u).max() > _DEDUP_TOL for u in known):
                    new_roots.append(root)
        if not new_roots:
            break
        roots.extend(new_roots)

    # saddles sit on basin boundaries between coexisting attractors, where
    # plain multi-start is blind; bisect the boundary and polish from there
    stable = [
        v for v in roots
        if np.linalg.eigvals(_jacobian(v, delta, g)).real.max() < -_STABILITY_MARGIN
    ]
    for a in range(len(stable)):
        for b in range(a + 1, len(stable)):
            root = _boundary_root(stable[a], stable[b], stable, delta, g, n_drive)
            if root is not None and all(
                np.abs(root - u).max() > _DEDUP_TOL for u in roots
            ):
                roots.append(root)
    return roots


def _basin_of(
    v: np.ndarray,
    attractors: Sequence[np.ndarray],
    delta: float,
    g: float,
    n_drive: float,
) -> Optional[int]:
    """Index of the attractor the flow from v converges to, else None."""

    dt = 0.02
    v = v.copy()
    for _ in range(20_000):
        for i, a in enumerate(attractors):
            if np.abs(v - a).max() < 1e-4:
                return i
        v = v + dt * _flow(v, delta, g, n_drive)
        if not np.isfinite(v).all() or np.abs(v).max() > 1e6:
            return None
    return None


def _boundary_root(
    a: np.ndarray,
    b: np.ndarray,
    attractors: Sequence[np.ndarray],
    delta: float,
    g: float,
    n_drive: float,
) -> Optional[np.ndarray]:
    """Saddle search on the basin boundary between attractors a and b.

    Bisects the segment between the attractors to land on the boundary,
    then rides the flow: a near-boundary trajectory follows the saddle's
    stable manifold and passes arbitrarily close to the saddle before
    peeling off, so Newton from the minimum-|flow| point (excluding
    neighbourhoods of the known attractors) converges onto it.
    """

    lo, hi = 0.05, 0.95
    basin_lo = _basin_of(a + lo * (b - a), attractors, delta, g, n_drive)
    basin_hi = _basin_of(a + hi * (b - a), attractors, delta, g, n_drive)
    if basin_lo is None or basin_hi is None or basin_lo == basin_hi:
        return None
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if _basin_of(a + mid * (b - a), attractors, delta, g, n_drive) == basin_lo:
            lo = mid
        else:
            hi = mid

    v = a + 0.5 * (lo + hi) * (b - a)
    dt = 0.02
    best_v: Optional[np.ndarray] = None
    best_f = np.inf
    for _ in range(20_000):
        v = v + dt * _flow(v, delta, g, n_drive)
        if not np.isfinite(v).all() or np.abs(v).max() > 1e6:
            break
        if min(np.abs(v - u).max() for u in attractors) < 0.05:
            break  # peeled off onto a known attractor
        f = np.abs(_flow(v, delta, g, n_drive)).max()
        if f < best_f:
            best_v, best_f = v.copy(), f
    if best_v is None:
        return None
    return _newton_from(best_v, delta, g, n_drive)


def _dedup(roots: Sequence[np.ndarray]) -> List[np.ndarray]:
    kept: List[np.ndarray] = []
    for v in sorted(
        roots,
        key=lambda u: (round(u[0].real, 9), round(u[0].imag, 9),
                       round(u[2].real, 9), round(u[2].imag, 9)),
    ):
        if all(np.abs(v - u).max() > _DEDUP_TOL for u in kept):
            kept.append(v)
    return kept


def classical_fixed_points(
    delta: float, g: float, n_drive: float
) -> List[ClassicalFixedPoint]:
    """All classical fixed points with stability tags.

    Args:
        delta: scaled detuning (units of the decay rate).
        g: scaled beam-splitter coupling; 0 gives the single-node diagram.
        n_drive: dimensionless drive strength (real, applied to node 1).
    """

    if g == 0.0:
        roots = _single_node_roots(delta, float(n_drive))
    else:
        roots = _newton_roots(delta, float(g), float(n_drive))
    return [_classify(v, delta, g) for v in _dedup(roots)]


def bistable_drive_interval(delta: float) -> Optional[Tuple[float, float]]:
    """Single-node drive interval with three fixed points, or None.

    The cubic n((n+delta)^2 + 1/4) = n_drive^2 has two turning points
    n_pm = (-2 delta +- sqrt(delta^2 - 3/4))/3 once delta < -sqrt(3)/2; the
    drive values there bound the bistable window.
    """

    disc = delta * delta - 0.75
    if delta >= 0.0 or disc <= 0.0:
        return None
    s = np.sqrt(disc)
    drives = []
    for n in ((-2.0 * delta - s) / 3.0, (-2.0 * delta + s) / 3.0):
        drives.append(float(np.sqrt(n * ((n + delta) ** 2 + 0.25))))
    lo, hi = sorted(drives)
    return lo, hi


@dataclass(frozen=True)
class PhaseDiagram:
    """Fixed-point counts over a 2D parameter grid.

    axis1/axis2 name which of ("delta", "g", "n_drive") each grid dimension
    sweeps; n_fixed_points[i, j] and n_stable[i, j] correspond to
    (axis1_values[i], axis2_values[j]); any_marginal flags cells containing
    a marginal eigenvalue, failed flags cells where the search errored.
    """

    axis1: str
    axis1_values: np.ndarray
    axis2: str
    axis2_values: np.ndarray
    n_fixed_points: np.ndarray
    n_stable: np.ndarray
    any_marginal: np.ndarray
    failed: np.ndarray
    fixed: dict = field(default_factory=dict)


_PARAM_NAMES = ("delta", "g", "n_drive")


def phase_diagram(
    axis1: str,
    axis1_values: Sequence[float],
    axis2: str,
    axis2_values: Sequence[float],
    fixed: Optional[dict] = None,
) -> PhaseDiagram:
    """Count fixed points and stable fixed points over a parameter grid."""

    fixed = dict(fixed or {})
    for name in (axis1, axis2, *fixed):
        if name not in _PARAM_NAMES:
            raise ValueError(f"unknown parameter {name!r}; expected {_PARAM_NAMES}")
    if axis1 == axis2:
        raise ValueError("axis1 and axis2 must differ")
    missing = set(_PARAM_NAMES) - {axis1, axis2} - set(fixed)
    if missing:
        raise ValueError(f"missing fixed value for {sorted(missing)}")

    v1 = np.asarray(axis1_values, dtype=float)
    v2 = np.asarray(axis2_values, dtype=float)
    n_fp = np.zeros((v1.size, v2.size), dtype=int)
    n_st = np.zeros_like(n_fp)
    marg = np.zeros(n_fp.shape, dtype=bool)
    fail = np.zeros(n_fp.shape, dtype=bool)
    params = dict(fixed)
    for i, a in enumerate(v1):
        for j, b in enumerate(v2):
            params[axis1] = float(a)
            params[axis2] = float(b)
            try:
                points = classical_fixed_points(
                    params["delta"], params["g"], params["n_drive"]
                )
            except Exception:  # pragma: no cover - defensive per-cell guard
                logger.exception("phase-diagram cell (%d, %d) failed", i, j)
                fail[i, j] = True
                continue
            n_fp[i, j] = len(points)
            n_st[i, j] = sum(p.stable for p in points)
            marg[i, j] = any(p.marginal for p in points)
    return PhaseDiagram(
        axis1=axis1,
        axis1_values=v1,
        axis2=axis2,
        axis2_values=v2,
        n_fixed_points=n_fp,
        n_stable=n_st,
        any_marginal=marg,
        failed=fail,
        fixed=dict(fixed),
    )
