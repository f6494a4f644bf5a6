"""Exact steady-state moments of the driven Kerr oscillator."""

import numpy as np
import pytest

from kerrchain.blocks import ChainSpec, CoherentDrive, Detuning, Kerr, Loss
from kerrchain.integrate import linear_steady_state
from kerrchain.oracles.exact_moments import (
    KerrParams,
    complexp_moment,
    steady_state_cumulants,
)
from kerrchain.oracles.fock import fock_steady_state
from kerrchain.state import ModeNetwork

P_WEAK = KerrParams(delta=-1.0, lam=0.02, eta=0.3, gamma_total=1.0)
P_STRONG = KerrParams(delta=0.5, lam=0.3, eta=1.1, gamma_total=2.0)

# frozen regression values (cross-validated against the Fock-space null
# vector below; see test_matches_fock_steady_state)
FROZEN = {
    P_WEAK: (
        -0.24020846881800612 - 0.12028066146240031j,
        0.00011254958984931174 + 0.0006424362534208986j,
        8.508637165949295e-07,
    ),
    P_STRONG: (
        0.5104513126935009 - 0.7182434015927139j,
        0.07071755546697531 + 0.0351885672725919j,
        0.013633615189994841,
    ),
}


@pytest.mark.parametrize("params", [P_WEAK, P_STRONG])
def test_frozen_cumulants(params):
    mu, cbb, cbdb = steady_state_cumulants(params)
    ref_mu, ref_cbb, ref_cbdb = FROZEN[params]
    assert mu == pytest.approx(ref_mu, rel=1e-12)
    assert cbb == pytest.approx(ref_cbb, rel=1e-12)
    assert cbdb == pytest.approx(ref_cbdb, rel=1e-12)


@pytest.mark.parametrize("params", [P_WEAK, P_STRONG])
def test_moment_hierarchy_identity(params):
    # the exact steady state satisfies d<b>/dt = 0:
    #   (i delta - gamma/2) <b> + i Lambda <b^dag b^2> - i eta = 0
    m01 = complexp_moment(params, 0, 1)
    m12 = complexp_moment(params, 1, 2)
    residual = (
        (1j * params.delta - params.gamma_total / 2) * m01
        + 1j * params.lam * m12
        - 1j * params.eta
    )
    assert abs(residual) < 1e-12


@pytest.mark.parametrize("params", [P_WEAK, P_STRONG])
def test_photon_flux_balance(params):
    # d<b^dag b>/dt = 0: -gamma <n> + i eta (<b> - <b^dag>) = 0
    m01 = complexp_moment(params, 0, 1)
    m11 = complexp_moment(params, 1, 1)
    residual = -params.gamma_total * m11 + 1j * params.eta * (m01 - np.conj(m01))
    assert abs(residual) < 1e-12


def test_moment_symmetries():
    p = P_STRONG
    for j, i in [(0, 1), (0, 2), (1, 2), (1, 3)]:
        assert complexp_moment(p, j, i) == pytest.approx(
            np.conj(complexp_moment(p, i, j)), rel=1e-12
        )
    for k in (1, 2, 3):
        diag = complexp_moment(p, k, k)
        assert diag.imag == pytest.approx(0.0, abs=1e-14)
        assert diag.real > 0


def test_vacuum_moment_is_one():
    assert complexp_moment(P_WEAK, 0, 0) == pytest.approx(1.0)


def test_small_kerr_limit_matches_linear_theory():
    delta, eta, gamma = -0.8, 0.5, 1.0
    p = KerrParams(delta=delta, lam=1e-7, eta=eta, gamma_total=gamma)
    mu, cbb, cbdb = steady_state_cumulants(p)
    chain = ChainSpec(
        ModeNetwork(["b"]),
        [Detuning("b", delta), CoherentDrive("b", eta), Loss("b", gamma)],
    )
    linear = linear_steady_state(chain)
    assert mu == pytest.approx(linear.mu[0], rel=1e-5)
    # a linear damped cavity stays coherent
    assert abs(cbb) < 1e-5
    assert abs(cbdb) < 1e-5


def test_matches_fock_steady_state():
    # independent route: null vector of the number-basis Liouvillian
    p = P_STRONG
    chain = ChainSpec(
        ModeNetwork(["b"]),
        [
            Detuning("b", p.delta),
            Kerr("b", p.lam),
            CoherentDrive("b", p.eta),
            Loss("b", p.gamma_total, monitored=True),
        ],
    )
    state = fock_steady_state(chain, [30]).state
    mu, cbb, cbdb = steady_state_cumulants(p)
    assert state.mu[0] == pytest.approx(mu, abs=1e-12)
    assert state.c_bb[0, 0] == pytest.approx(cbb, abs=1e-12)
    assert state.c_bdb[0, 0] == pytest.approx(cbdb, abs=1e-12)


def test_rejects_undamped_parameters():
    with pytest.raises(ValueError):
        KerrParams(delta=0.0, lam=0.1, eta=0.1, gamma_total=0.0)
