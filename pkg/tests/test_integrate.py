"""Stochastic integrator: noise addressing, determinism, steady states."""

import numpy as np
import pytest

from kerrchain.blocks import (
    ChainSpec,
    CoherentDrive,
    DegenerateParametric,
    Detuning,
    Kerr,
    Loss,
    compile_chain,
    cumulant_drift,
    mean_drift,
)
from kerrchain.integrate import (
    IntegratorConfig,
    SteadyStateError,
    TrajectoryBlowupError,
    evolve_unconditional,
    linear_steady_state,
    noise_normals,
    simulate_ensemble,
    simulate_trajectory,
    steady_state,
)
from kerrchain.state import CumulantState, ModeNetwork


def _monitored_loss(gamma=1.0, extra=()):
    net = ModeNetwork(["a"])
    return ChainSpec(net, [Loss("a", gamma, monitored=True), *extra])


# ---------------------------------------------------------------- noise


def test_noise_chunking_invariance():
    full = noise_normals(seed=7, trajectory_index=3, step_start=0, n_steps=100, n_channels=2)
    parts = np.concatenate(
        [
            noise_normals(7, 3, 0, 37, 2),
            noise_normals(7, 3, 37, 50, 2),
            noise_normals(7, 3, 87, 13, 2),
        ]
    )
    assert np.array_equal(full, parts)


def test_noise_streams_are_keyed_by_seed_and_trajectory():
    a = noise_normals(1, 0, 0, 50, 1)
    b = noise_normals(1, 1, 0, 50, 1)
    c = noise_normals(2, 0, 0, 50, 1)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)
    # and the same key always reproduces the same stream
    assert np.array_equal(a, noise_normals(1, 0, 0, 50, 1))


def test_noise_marginals_look_standard_normal():
    draws = noise_normals(0, 0, 0, 20000, 1).ravel()
    assert abs(draws.mean()) < 0.03
    assert abs(draws.std() - 1.0) < 0.03
    assert abs(np.mean(draws**3)) < 0.1


def test_noise_shape_convention():
    draws = noise_normals(0, 0, 0, 5, 3)
    assert draws.shape == (5, 3, 2)


# ---------------------------------------------------------------- grids


def test_step_and_grid_counts():
    config = IntegratorConfig(dt=1e-3, t_final=1.0, store_stride=10)
    assert config.n_steps == 1000
    times = config.stored_times()
    assert times.shape == (100,)
    assert times[0] == pytest.approx(0.01)
    assert times[-1] == pytest.approx(1.0)


def test_step_count_rounds_up_fractional_final_time():
    config = IntegratorConfig(dt=0.3, t_final=1.0)
    assert config.n_steps == 4


def test_config_rejects_unknown_scheme():
    with pytest.raises(ValueError):
        IntegratorConfig(scheme="milstein")


# ---------------------------------------------------------------- trajectories


def test_ensemble_rerun_is_byte_identical():
    chain = _monitored_loss(extra=(CoherentDrive("a", 0.4), Kerr("a", 0.05)))
    config = IntegratorConfig(dt=1e-2, t_final=2.0, seed=11, store_stride=4)
    a = simulate_ensemble(chain, config, [0, 1, 5])
    b = simulate_ensemble(chain, config, [0, 1, 5])
    assert np.array_equal(a.mu, b.mu)
    assert np.array_equal(a.record_values, b.record_values)
    assert np.array_equal(a.final_c_bdb, b.final_c_bdb)


def test_ensemble_rows_do_not_depend_on_batch_composition():
    chain = _monitored_loss(extra=(CoherentDrive("a", 0.4),))
    config = IntegratorConfig(dt=1e-2, t_final=1.0, seed=3)
    together = simulate_ensemble(chain, config, [2, 7])
    alone = simulate_ensemble(chain, config, [7])
    assert np.array_equal(together.mu[1], alone.mu[0])
    assert np.array_equal(together.record_values[1], alone.record_values[0])


def test_single_trajectory_matches_ensemble_row():
    chain = _monitored_loss(extra=(CoherentDrive("a", 0.2), Kerr("a", 0.1)))
    config = IntegratorConfig(dt=1e-2, t_final=1.0, seed=5, store_stride=5)
    ens = simulate_ensemble(chain, config, [4], store_cumulants=True)
    single = simulate_trajectory(chain, config, 4)
    mu_series = np.array([s.mu[0] for s in single.states])
    assert np.array_equal(ens.mu[0, :, 0], mu_series)
    assert np.array_equal(ens.record_values[0], single.record.values)
    assert np.array_equal(np.asarray(single.times), ens.times)


def test_store_stride_subsamples_the_same_path():
    chain = _monitored_loss(extra=(CoherentDrive("a", 0.3),))
    fine = simulate_ensemble(
        chain, IntegratorConfig(dt=1e-2, t_final=1.0, seed=9, store_stride=1), [0]
    )
    coarse = simulate_ensemble(
        chain, IntegratorConfig(dt=1e-2, t_final=1.0, seed=9, store_stride=10), [0]
    )
    # block-end samples of the coarse run sit on the fine grid
    assert np.array_equal(coarse.mu[0], fine.mu[0, 9::10])
    assert np.array_equal(coarse.times, fine.times[9::10])


def test_record_is_block_average_of_innovations():
    # undriven monitored vacuum: mean stays 0, so the stored current is the
    # Wiener increment over each block divided by its duration
    gamma, dt, stride = 1.0, 1e-3, 8
    chain = _monitored_loss(gamma)
    config = IntegratorConfig(dt=dt, t_final=0.2, seed=21, store_stride=stride)
    ens = simulate_ensemble(chain, config, [3])
    normals = noise_normals(21, 3, 0, config.n_steps, 1)
    dw = normals * np.sqrt(dt)
    m = config.n_stored
    blocks = dw[: m * stride, 0, :].reshape(m, stride, 2).sum(axis=1) / (stride * dt)
    assert np.allclose(ens.record_values[0, :, 0, :], blocks, atol=1e-12)
    assert np.allclose(ens.mu[0], 0.0)


def test_conditional_coherent_state_stays_coherent():
    # with every loss channel monitored, zero cumulants are a fixed point:
    # the state stays exactly coherent while its mean diffuses
    chain = _monitored_loss(extra=(CoherentDrive("a", 1.0),))
    config = IntegratorConfig(dt=1e-2, t_final=2.0, seed=2)
    ens = simulate_ensemble(chain, config, [0], store_cumulants=True)
    assert np.all(ens.c_bb_series == 0)
    assert np.all(ens.c_bdb_series == 0)
    assert not np.array_equal(ens.mu[0], np.zeros_like(ens.mu[0]))


def test_linear_chain_cumulants_identical_across_trajectories():
    chain = ChainSpec(
        ModeNetwork(["a"]),
        [
            DegenerateParametric("a", 0.2),
            Loss("a", 1.0, monitored=True),
        ],
    )
    config = IntegratorConfig(dt=1e-2, t_final=1.0, seed=0)
    ens = simulate_ensemble(chain, config, [0, 1, 2], store_cumulants=True)
    assert np.array_equal(ens.c_bb_series[0], ens.c_bb_series[1])
    assert np.array_equal(ens.c_bdb_series[0], ens.c_bdb_series[2])
    assert np.any(ens.c_bb_series[0] != 0)


def test_blowup_is_frozen_and_reported():
    net = ModeNetwork(["a"])
    chain = ChainSpec(
        net,
        [
            Kerr("a", 1.0),
            DegenerateParametric("a", 10.0),
            Loss("a", 0.1, monitored=True),
        ],
    )
    config = IntegratorConfig(dt=1e-2, t_final=5.0, seed=0)
    initial = CumulantState.coherent(net, [2.0])
    ens = simulate_ensemble(chain, config, [0], initial=initial)
    assert len(ens.failed) == 1
    idx, t_fail = ens.failed[0]
    assert idx == 0
    assert 0.0 < t_fail <= 5.0
    # frozen tail is NaN, the head is finite
    assert np.isnan(ens.mu[0, -1, 0])
    assert np.isfinite(ens.mu[0, 0, 0])
    with pytest.raises(TrajectoryBlowupError):
        simulate_trajectory(chain, config, 0)


# ---------------------------------------------------------------- deterministic evolution


def test_unconditional_loss_decay_closed_form():
    net = ModeNetwork(["a"])
    chain = ChainSpec(net, [Loss("a", 0.8)])
    config = IntegratorConfig(dt=1e-4, t_final=1.0, store_stride=100)
    series = evolve_unconditional(chain, config, CumulantState.coherent(net, [1.5]))
    times = np.asarray(series.times)
    mus = np.array([s.mu[0] for s in series.states])
    assert np.allclose(mus, 1.5 * np.exp(-0.4 * times), atol=5e-5)


def test_linear_steady_state_closed_form():
    delta, gamma, amp = 0.6, 1.0, 0.3
    chain = ChainSpec(
        ModeNetwork(["a"]),
        [Detuning("a", delta), CoherentDrive("a", amp), Loss("a", gamma)],
    )
    state = linear_steady_state(chain)
    # (i delta - gamma/2) mu - i amp = 0
    mu_exact = 1j * amp / (1j * delta - gamma / 2)
    assert state.mu[0] == pytest.approx(mu_exact, abs=1e-12)
    assert state.c_bb[0, 0] == pytest.approx(0.0, abs=1e-12)


def test_linear_steady_state_squeezing_below_threshold():
    g, gamma = 0.2, 1.0
    chain = ChainSpec(
        ModeNetwork(["a"]),
        [DegenerateParametric("a", g, phase=-np.pi / 2), Loss("a", gamma)],
    )
    state = linear_steady_state(chain)
    # dC_bb/dt = -gamma C_bb - 2ig e^{-i phase} C_bdb + g = 0 coupled with
    # dC_bdb/dt = -gamma C_bdb + 2g Re(...) gives the standard OPO cumulants
    r = g / gamma
    assert state.c_bdb[0, 0].real == pytest.approx(2 * r**2 / (1 - 4 * r**2), abs=1e-12)
    assert state.c_bb[0, 0] == pytest.approx(r / (1 - 4 * r**2), abs=1e-12)


def test_steady_state_matches_linear_solver_on_linear_chain():
    chain = ChainSpec(
        ModeNetwork(["a", "b"]),
        [
            Detuning("a", -0.5),
            CoherentDrive("a", 0.4),
            DegenerateParametric("b", 0.15),
            Loss("a", 1.0),
            Loss("b", 0.7, monitored=True),
        ],
    )
    exact = linear_steady_state(chain)
    iterated = steady_state(chain, tol=1e-11)
    assert np.allclose(iterated.mu, exact.mu, atol=1e-9)
    assert np.allclose(iterated.c_bb, exact.c_bb, atol=1e-9)
    assert np.allclose(iterated.c_bdb, exact.c_bdb, atol=1e-9)


def test_steady_state_zeroes_nonlinear_drift():
    chain = ChainSpec(
        ModeNetwork(["a"]),
        [
            Detuning("a", -1.0),
            Kerr("a", 0.05),
            CoherentDrive("a", 0.8),
            Loss("a", 1.0),
        ],
    )
    state = steady_state(chain, tol=1e-11)
    ops = compile_chain(chain)
    mu = state.mu[None, :]
    c_bb = state.c_bb[None, :, :]
    c_bdb = state.c_bdb[None, :, :]
    dmu = mean_drift(ops, mu, c_bb, c_bdb)
    dbb, dbdb = cumulant_drift(ops, mu, c_bb, c_bdb)
    residual = max(np.abs(dmu).max(), np.abs(dbb).max(), np.abs(dbdb).max())
    assert residual < 1e-10


def test_steady_state_raises_on_undamped_chain():
    chain = ChainSpec(ModeNetwork(["a"]), [DegenerateParametric("a", 2.0), Loss("a", 0.1)])
    with pytest.raises(SteadyStateError):
        steady_state(chain, max_time=50.0)
