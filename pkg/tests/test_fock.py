"""Number-basis oracle: agreement with closed forms and the cumulant integrator."""

import math

import numpy as np
import pytest

from kerrchain.blocks import (
    ChainSpec,
    CoherentDrive,
    DegenerateParametric,
    Detuning,
    Kerr,
    Loss,
)
from kerrchain.integrate import (
    IntegratorConfig,
    linear_steady_state,
    simulate_ensemble,
)
from kerrchain.oracles.fock import (
    FockLeakageError,
    build_fock_operators,
    fock_simulate,
    fock_steady_state,
    fock_unconditional,
)
from kerrchain.state import ModeNetwork


def _driven_cavity(delta=-0.4, eta=0.3, gamma=1.0, lam=0.0, monitored=False):
    blocks = [
        Detuning("b", delta),
        CoherentDrive("b", eta),
        Loss("b", gamma, monitored=monitored),
    ]
    if lam:
        blocks.insert(1, Kerr("b", lam))
    return ChainSpec(ModeNetwork(["b"]), blocks)


def test_operators_satisfy_commutation():
    ops = build_fock_operators(_driven_cavity(), [12])
    b = np.asarray(ops.lower[0].todense())
    comm = b @ b.conj().T - b.conj().T @ b
    # [b, b^dag] = 1 away from the truncation edge
    assert np.allclose(np.diag(comm)[:-1], 1.0)


def test_unconditional_linear_decay_matches_closed_form():
    chain = ChainSpec(ModeNetwork(["b"]), [Loss("b", 0.8)])
    config = IntegratorConfig(dt=1e-3, t_final=1.0, store_stride=100)
    alpha = 0.9
    n = np.arange(14)
    coeff = np.exp(-0.5 * abs(alpha) ** 2) * alpha**n / np.sqrt(
        [float(math.factorial(int(k))) for k in n]
    )
    rho0 = np.outer(coeff, coeff.conj())
    res = fock_unconditional(chain, [14], config, initial_rho=rho0)
    times = np.asarray(res.times)
    assert np.allclose(res.mu[:, 0], alpha * np.exp(-0.4 * times), atol=2e-4)
    assert res.max_leakage < 1e-8
    assert res.max_trace_dev < 1e-8


def test_steady_state_matches_linear_solver():
    chain = ChainSpec(
        ModeNetwork(["b"]),
        [
            Detuning("b", 0.3),
            DegenerateParametric("b", 0.15, phase=-np.pi / 2),
            CoherentDrive("b", 0.25),
            Loss("b", 1.0),
        ],
    )
    exact = linear_steady_state(chain)
    fock = fock_steady_state(chain, [25]).state
    assert fock.mu[0] == pytest.approx(exact.mu[0], abs=1e-10)
    assert fock.c_bb[0, 0] == pytest.approx(exact.c_bb[0, 0], abs=1e-10)
    assert fock.c_bdb[0, 0] == pytest.approx(exact.c_bdb[0, 0], abs=1e-10)


def test_matched_noise_linear_trajectory_agrees_with_cumulant_integrator():
    # a monitored linear cavity stays Gaussian, so the truncated description
    # is exact and the two integrators differ only by discretization error
    chain = _driven_cavity(monitored=True)
    config = IntegratorConfig(dt=5e-4, t_final=1.0, seed=13, store_stride=20)
    ens = simulate_ensemble(chain, config, [2])
    fock = fock_simulate(chain, [16], config, trajectory_index=2)
    assert np.asarray(fock.times) == pytest.approx(ens.times)
    assert np.allclose(fock.mu[:, 0], ens.mu[0, :, 0], atol=5e-3)
    assert np.allclose(fock.record.values, ens.record_values[0], atol=5e-2)
    assert fock.max_leakage < 1e-6


def test_matched_noise_kerr_trajectory_tracks_cumulant_integrator():
    chain = _driven_cavity(delta=-1.0, eta=0.35, lam=0.05, monitored=True)
    config = IntegratorConfig(dt=5e-4, t_final=2.0, seed=4, store_stride=40)
    ens = simulate_ensemble(chain, config, [0], store_cumulants=True)
    fock = fock_simulate(chain, [20], config, trajectory_index=0)
    scale = np.max(np.abs(fock.mu[:, 0]))
    assert np.max(np.abs(fock.mu[:, 0] - ens.mu[0, :, 0])) < 0.05 * scale
    cbdb_err = np.max(np.abs(fock.c_bdb[:, 0, 0] - ens.c_bdb_series[0][:, 0, 0]))
    assert cbdb_err < 0.15 * max(np.max(np.abs(fock.c_bdb)), 1e-3)


def test_explicit_noise_override_reproduces_default_stream():
    from kerrchain.integrate import noise_normals

    chain = _driven_cavity(monitored=True)
    config = IntegratorConfig(dt=1e-3, t_final=0.2, seed=8)
    default = fock_simulate(chain, [12], config, trajectory_index=5)
    dw = noise_normals(8, 5, 0, config.n_steps, 1) * np.sqrt(config.dt)
    override = fock_simulate(chain, [12], config, trajectory_index=5, dW=dw)
    assert np.array_equal(default.mu, override.mu)
    assert np.array_equal(default.record.values, override.record.values)


def test_leakage_raises_when_cutoff_too_small():
    chain = _driven_cavity(eta=3.0)
    config = IntegratorConfig(dt=1e-3, t_final=2.0)
    with pytest.raises(FockLeakageError):
        fock_unconditional(chain, [4], config)


def test_dimension_cap_guards_memory():
    chain = ChainSpec(
        ModeNetwork(["a", "b"]),
        [Loss("a", 1.0), Loss("b", 1.0)],
    )
    with pytest.raises(ValueError):
        build_fock_operators(chain, [100, 100], dim_cap=1600)
