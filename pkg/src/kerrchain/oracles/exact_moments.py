"""Exact steady-state moments of the single driven-damped Kerr oscillator.

Independent reference route for the truncated-cumulant engine. The steady
state of

    d<rho>/dt = -i[ Delta b'b - (Lam/2) b'b'bb + eta b' + eta* b, rho ]
                + gamma_total D[b] rho

admits a closed-form phase-space potential solution; normal-ordered moments
follow from ratios of the entire series

    h(x, y, z) = sum_n z^n / ( n! (x)_n (y)_n ),

with (x)_n the Pochhammer symbol. Writing c = (2*Delta + i*gamma_total)/Lam
and z = 8|eta/Lam|^2,

    <b'^j b^i> = e^{i phi (i-j)} (2|eta|/Lam)^{i+j} / ( (c)_i (c*)_j )
                 * h(c+i, c*+j, z) / h(c, c*, z),      phi = arg(eta).

The phase convention is fixed by the linear limit: for Lam -> 0, Delta = 0
the formula must reduce to <b> = -2 i eta / gamma_total, which carries
e^{+i phi}. Terms of h grow far beyond float range before converging when
|eta/Lam| is large, so the series is accumulated with an explicit base-2
exponent carried alongside a complex mantissa.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from .gammafn import GammaPoleError

__all__ = [
    "KerrParams",
    "hypergeometric_h",
    "complexp_moment",
    "steady_state_cumulants",
]

_REL_TERM_TOL = 1e-16
_MAX_TERMS = 200_000


@dataclass(frozen=True)
class KerrParams:
    """Single-mode Kerr oscillator parameters, all rates in the same unit.

    Args:
        delta: drive-frame detuning.
        lam: Kerr coefficient, must be nonzero for the potential solution.
        eta: complex drive amplitude.
        gamma_total: total (monitored plus unmonitored) energy decay rate.
    """

    delta: float
    lam: float
    eta: complex
    gamma_total: float

    def __post_init__(self) -> None:
        if self.lam == 0.0:
            raise ValueError("lam must be nonzero; use the linear solver instead")
        if self.gamma_total <= 0.0:
            raise ValueError("gamma_total must be positive")


def _check_series_pole(x: complex, name: str) -> None:
    if x.imag == 0.0 and x.real <= 0.0 and x.real == math.floor(x.real):
        raise GammaPoleError(f"{name} = {x} is a non-positive integer (series pole)")


def _scaled_normalize(m: complex, e: int) -> tuple[complex, int]:
    a = abs(m)
    if a == 0.0:
        return 0.0 + 0.0j, 0
    _, shift = math.frexp(a)
    return math.ldexp(1.0, -shift) * m, e + shift


def _h_scaled(x: complex, y: complex, z: float) -> tuple[complex, int]:
    """h(x, y, z) as (mantissa, base-2 exponent) with |mantissa| ~ 1."""

    _check_series_pole(x, "x")
    _check_series_pole(y, "y")
    s_m, s_e = 1.0 + 0.0j, 0  # running sum
    t_m, t_e = 1.0 + 0.0j, 0  # current term
    small_streak = 0
    for n in range(_MAX_TERMS):
        t_m = t_m * (z / ((n + 1) * (x + n) * (y + n)))
        t_m, t_e = _scaled_normalize(t_m, t_e)
        # align the term onto the sum's exponent and add
        shift = t_e - s_e
        if shift > 0:
            s_m = math.ldexp(1.0, -shift) * s_m + t_m
            s_e = t_e
        else:
            s_m = s_m + math.ldexp(1.0, shift) * t_m
        s_m, s_e = _scaled_normalize(s_m, s_e)
        if abs(t_m) <= _REL_TERM_TOL * abs(s_m) * math.ldexp(1.0, min(s_e - t_e, 64)):
            small_streak += 1
            if small_streak >= 2:
                return s_m, s_e
        else:
            small_streak = 0
    raise RuntimeError("hypergeometric series failed to converge")


def hypergeometric_h(x: complex, y: complex, z: float) -> complex:
    """Entire series sum_n z^n / (n! (x)_n (y)_n).

    Raises GammaPoleError when x or y is a non-positive integer and
    OverflowError when the value exceeds float range (the moment formulas
    only ever need ratios, which stay bounded).
    """

    m, e = _h_scaled(complex(x), complex(y), float(z))
    if e > 1020:
        raise OverflowError("h(x, y, z) exceeds float range; use moment ratios")
    return math.ldexp(1.0, e) * m


def _pochhammer(x: complex, n: int) -> complex:
    out = 1.0 + 0.0j
    for m in range(n):
        out *= x + m
    return out


def complexp_moment(params: KerrParams, j: int, i: int) -> complex:
    """Steady-state normal-ordered moment <b'^j b^i>."""

    if i < 0 or j < 0:
        raise ValueError("moment orders must be non-negative")
    if i == 0 and j == 0:
        return 1.0 + 0.0j
    eta = complex(params.eta)
    if eta == 0.0:
        return 0.0 + 0.0j
    lam = params.lam
    c = (2.0 * params.delta + 1j * params.gamma_total) / lam
    cc = c.conjugate()
    z = 8.0 * abs(eta / lam) ** 2
    num_m, num_e = _h_scaled(c + i, cc + j, z)
    den_m, den_e = _h_scaled(c, cc, z)
    ratio = (num_m / den_m) * math.ldexp(1.0, num_e - den_e)
    phase = cmath.exp(1j * cmath.phase(eta) * (i - j))
    amp = (2.0 * abs(eta) / abs(lam)) ** (i + j)
    # the series variable is eta/lam; a negative lam flips the drive phase
    if lam < 0.0:
        phase *= (-1.0) ** ((i - j) % 2)
    return phase * amp / (_pochhammer(c, i) * _pochhammer(cc, j)) * ratio


def steady_state_cumulants(params: KerrParams) -> tuple[complex, complex, float]:
    """First and second cumulants (mu, C_bb, C_b'b) of the exact steady state."""

    m10 = complexp_moment(params, 0, 1)
    m20 = complexp_moment(params, 0, 2)
    m11 = complexp_moment(params, 1, 1)
    mu = m10
    c_bb = m20 - m10 * m10
    c_bdb = (m11 - abs(m10) ** 2).real
    return mu, c_bb, c_bdb
