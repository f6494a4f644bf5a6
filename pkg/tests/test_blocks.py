"""Liouvillian blocks: drift conventions and structural invariants."""

import numpy as np
import pytest

from kerrchain.blocks import (
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
    compile_chain,
    cumulant_drift,
    heterodyne_current_means,
    innovation_coefficients,
    mean_drift,
    measurement_backaction,
)
from kerrchain.state import ModeNetwork


def _single(blocks):
    return compile_chain(ChainSpec(ModeNetwork(["a"]), blocks))


def _drifts(ops, mu, c_bb=None, c_bdb=None):
    n = ops.n_modes
    mu = np.asarray(mu, dtype=np.complex128).reshape(1, n)
    if c_bb is None:
        c_bb = np.zeros((1, n, n), dtype=np.complex128)
    else:
        c_bb = np.asarray(c_bb, dtype=np.complex128).reshape(1, n, n)
    if c_bdb is None:
        c_bdb = np.zeros((1, n, n), dtype=np.complex128)
    else:
        c_bdb = np.asarray(c_bdb, dtype=np.complex128).reshape(1, n, n)
    dmu = mean_drift(ops, mu, c_bb, c_bdb)
    dbb, dbdb = cumulant_drift(ops, mu, c_bb, c_bdb)
    return dmu[0], dbb[0], dbdb[0]


def test_chain_spec_rejects_unknown_mode():
    net = ModeNetwork(["a"])
    with pytest.raises(KeyError):
        ChainSpec(net, [Loss("zz", 1.0)])


def test_chain_spec_rejects_double_monitoring():
    net = ModeNetwork(["a"])
    with pytest.raises(ValueError):
        ChainSpec(net, [Loss("a", 1.0, monitored=True), Loss("a", 0.5, monitored=True)])


def test_detuning_rotates_mean():
    # H = -delta b^dag b gives d<b>/dt = +i delta <b>
    ops = _single([Detuning("a", 0.7)])
    dmu, _, _ = _drifts(ops, [1.0 + 2.0j])
    assert dmu[0] == pytest.approx(1j * 0.7 * (1.0 + 2.0j))


def test_coherent_drive_direction():
    ops = _single([CoherentDrive("a", 0.5j)])
    dmu, _, _ = _drifts(ops, [0.0])
    # d<b>/dt = -i * amplitude, so an i-valued amplitude pushes along +Re
    assert dmu[0] == pytest.approx(0.5)


def test_loss_damps_mean_and_cumulants():
    gamma = 1.3
    ops = _single([Loss("a", gamma)])
    mu = [0.4 - 0.1j]
    c_bb = [[0.2 + 0.1j]]
    c_bdb = [[0.6]]
    dmu, dbb, dbdb = _drifts(ops, mu, c_bb, c_bdb)
    assert dmu[0] == pytest.approx(-gamma / 2 * mu[0])
    assert dbb[0, 0] == pytest.approx(-gamma * c_bb[0][0])
    assert dbdb[0, 0] == pytest.approx(-gamma * c_bdb[0][0])


def test_beam_splitter_swaps_amplitude():
    ops = compile_chain(
        ChainSpec(ModeNetwork(["a", "b"]), [BeamSplitter("a", "b", 0.25)])
    )
    dmu, _, _ = _drifts(ops, [1.0, 0.0])
    # H = g(b_a b_b^dag + h.c.): d<b_b>/dt = -i g <b_a>
    assert dmu[1] == pytest.approx(-0.25j)
    assert dmu[0] == pytest.approx(0.0)


def test_degenerate_parametric_squeezing_axis():
    # phase=-pi/2 makes the C_bb source real positive: X stretched, P squeezed
    ops = _single([DegenerateParametric("a", 0.3, phase=-np.pi / 2)])
    _, dbb, _ = _drifts(ops, [0.0])
    assert dbb[0, 0] == pytest.approx(0.3)
    ops0 = _single([DegenerateParametric("a", 0.3)])
    _, dbb0, _ = _drifts(ops0, [0.0])
    assert dbb0[0, 0] == pytest.approx(-0.3j)


def test_nondegenerate_parametric_pairs_modes():
    ops = compile_chain(
        ChainSpec(ModeNetwork(["a", "b"]), [NonDegenerateParametric("a", "b", 0.2)])
    )
    _, dbb, _ = _drifts(ops, [0.0, 0.0])
    assert dbb[0, 1] == pytest.approx(-0.2j)
    assert dbb[1, 0] == pytest.approx(-0.2j)
    assert dbb[0, 0] == 0.0 and dbb[1, 1] == 0.0


def test_circulator_matched_is_unidirectional():
    g = 0.8
    ops = compile_chain(
        ChainSpec(ModeNetwork(["s", "t"]), [CirculatorCoupling("s", "t", g, g)])
    )
    # source: pure local damping at g/2, no feedback from the target
    dmu, _, _ = _drifts(ops, [1.0 + 0.5j, -2.0])
    assert dmu[0] == pytest.approx(-g / 2 * (1.0 + 0.5j))
    # target: damped at g/2 and driven by -g <b_s>
    assert dmu[1] == pytest.approx(-g * (1.0 + 0.5j) - g / 2 * (-2.0))


def test_directional_amp_matched_has_zero_net_damping():
    g = 0.6
    ops = compile_chain(
        ChainSpec(ModeNetwork(["s", "t"]), [DirectionalAmpCoupling("s", "t", g, g)])
    )
    assert ops.a[0, 0] == pytest.approx(0.0)
    assert ops.a[1, 1] == pytest.approx(0.0)
    assert ops.a[0, 1] == pytest.approx(0.0)
    assert ops.b[0, 1] == pytest.approx(0.0)
    # d<b_t>/dt = -g (<b_s> + <b_s^dag>): only the source X quadrature feeds in
    dmu, _, _ = _drifts(ops, [0.3 + 0.4j, 0.0])
    assert dmu[1] == pytest.approx(-g * 2 * 0.3)
    # and the target still picks up added vacuum noise
    assert ops.d_bdb[1, 1] > 0.0


def test_kerr_mean_drift_truncated_form():
    lam = 0.15
    ops = _single([Kerr("a", lam)])
    mu = 0.7 - 0.2j
    cbb = 0.1 + 0.05j
    cbdb = 0.3
    dmu, _, _ = _drifts(ops, [mu], [[cbb]], [[cbdb]])
    # i Lambda (conj(mu) mu^2 + C_bb conj(mu) + 2 C_bdb mu)
    expected = 1j * lam * (np.conj(mu) * mu * mu + cbb * np.conj(mu) + 2 * cbdb * mu)
    assert dmu[0] == pytest.approx(expected)
    # classical=True keeps only the mean-field cube
    dmu_cl = mean_drift(
        ops,
        np.array([[mu]]),
        np.array([[[cbb]]]),
        np.array([[[cbdb]]]),
        classical=True,
    )
    assert dmu_cl[0, 0] == pytest.approx(1j * lam * np.conj(mu) * mu * mu)


def test_kerr_conserves_photon_number_diagonal():
    # closed Kerr evolution cannot change <b^dag b>, so dC_bdb/dt must cancel
    # the coherent part d|mu|^2/dt exactly
    ops = _single([Kerr("a", 0.2)])
    mu = 0.5 + 0.3j
    cbb = -0.2 + 0.4j
    cbdb = 0.25
    dmu, _, dbdb = _drifts(ops, [mu], [[cbb]], [[cbdb]])
    d_n_coh = 2 * np.real(np.conj(mu) * dmu[0])
    assert d_n_coh + dbdb[0, 0].real == pytest.approx(0.0, abs=1e-14)
    assert dbdb[0, 0].imag == pytest.approx(0.0, abs=1e-15)


def _random_chain(seed):
    rng = np.random.default_rng(seed)
    net = ModeNetwork(["a", "b", "c"])
    blocks = [
        Detuning("a", rng.normal()),
        Kerr("b", rng.normal()),
        CoherentDrive("a", complex(rng.normal(), rng.normal())),
        BeamSplitter("a", "b", rng.normal()),
        DegenerateParametric("b", rng.normal(), rng.normal()),
        NonDegenerateParametric("b", "c", rng.normal(), rng.normal()),
        Loss("a", abs(rng.normal())),
        Loss("c", abs(rng.normal()), monitored=True),
        CirculatorCoupling("a", "c", 0.4, 0.4),
    ]
    return compile_chain(ChainSpec(net, blocks)), rng


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_compiled_sources_have_exact_structure(seed):
    ops, _ = _random_chain(seed)
    assert np.array_equal(ops.d_bb, ops.d_bb.T)
    assert np.array_equal(ops.d_bdb, ops.d_bdb.conj().T)
    # added-noise matrix is positive semidefinite
    assert np.min(np.linalg.eigvalsh(ops.d_bdb)) >= -1e-14


@pytest.mark.parametrize("seed", [3, 4])
def test_drift_preserves_structure_bit_exactly(seed):
    ops, rng = _random_chain(seed)
    n = ops.n_modes
    mu = rng.normal(size=(2, n)) + 1j * rng.normal(size=(2, n))
    a = rng.normal(size=(2, n, n)) + 1j * rng.normal(size=(2, n, n))
    c_bb = a + a.transpose(0, 2, 1)
    h = rng.normal(size=(2, n, n)) + 1j * rng.normal(size=(2, n, n))
    c_bdb = h + h.conj().transpose(0, 2, 1)
    dbb, dbdb = cumulant_drift(ops, mu, c_bb, c_bdb)
    assert np.array_equal(dbb, dbb.transpose(0, 2, 1))
    assert np.array_equal(dbdb, dbdb.conj().transpose(0, 2, 1))
    mbb, mbdb = measurement_backaction(ops, c_bb, c_bdb)
    assert np.array_equal(mbb, mbb.transpose(0, 2, 1))
    assert np.array_equal(mbdb, mbdb.conj().transpose(0, 2, 1))


def test_backaction_vanishes_on_coherent_states():
    ops = _single([Loss("a", 2.0, monitored=True)])
    c0 = np.zeros((1, 1, 1), dtype=np.complex128)
    dbb, dbdb = measurement_backaction(ops, c0, c0)
    assert np.all(dbb == 0) and np.all(dbdb == 0)
    xi_x, xi_p = innovation_coefficients(ops, c0, c0)
    assert np.all(xi_x == 0) and np.all(xi_p == 0)


def test_backaction_single_mode_values():
    gamma = 0.9
    m = 0.2 + 0.3j  # C(b,b)
    n = 0.4  # C(b^dag,b)
    ops = _single([Loss("a", gamma, monitored=True)])
    c_bb = np.array([[[m]]], dtype=np.complex128)
    c_bdb = np.array([[[n]]], dtype=np.complex128)
    dbb, dbdb = measurement_backaction(ops, c_bb, c_bdb)
    assert dbb[0, 0, 0] == pytest.approx(-2 * gamma * m * n)
    assert dbdb[0, 0, 0] == pytest.approx(-gamma * (n**2 + abs(m) ** 2))
    xi_x, xi_p = innovation_coefficients(ops, c_bb, c_bdb)
    root = np.sqrt(gamma / 2)
    assert xi_x[0, 0, 0] == pytest.approx(root * (m + n))
    assert xi_p[0, 0, 0] == pytest.approx(1j * root * (n - m))


def test_heterodyne_current_means_scaling():
    gamma = 1.8
    ops = _single([Loss("a", gamma, monitored=True)])
    mu = np.array([[0.6 - 0.25j]])
    jm = heterodyne_current_means(ops, mu)
    assert jm.shape == (1, 1, 2)
    assert jm[0, 0, 0] == pytest.approx(np.sqrt(2 * gamma) * 0.6)
    assert jm[0, 0, 1] == pytest.approx(np.sqrt(2 * gamma) * -0.25)


def test_channel_ordering_follows_block_order():
    net = ModeNetwork(["a", "b"])
    chain = ChainSpec(
        net,
        [Loss("b", 1.0, monitored=True), Loss("a", 2.0, monitored=True)],
    )
    assert chain.measured_channels() == [(1, 1.0), (0, 2.0)]
    assert chain.n_channels == 2
    assert chain.is_linear()
    chain2 = ChainSpec(net, [Kerr("a", 0.1), Loss("a", 1.0)])
    assert not chain2.is_linear()
    assert chain2.n_channels == 0
