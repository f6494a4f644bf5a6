"""Cumulant-state container: layout, conversions, and invariants."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kerrchain.state import (
    CumulantState,
    ModeNetwork,
    MomentIndex,
    cumulants_to_moments,
    flat_size,
    from_flat,
    moments_to_cumulants,
    quadrature_stats,
    set_partitions,
    to_flat,
)


def test_network_rejects_duplicates_and_empty():
    with pytest.raises(ValueError):
        ModeNetwork(["a", "a"])
    with pytest.raises(ValueError):
        ModeNetwork([])


def test_network_index_lookup():
    net = ModeNetwork(["a1", "b1", "b2"])
    assert net.n_modes == 3
    assert net.index("b2") == 2
    with pytest.raises(KeyError):
        net.index("c9")


@pytest.mark.parametrize("n, expected", [(1, 5), (2, 14), (3, 27)])
def test_flat_size_dof_count(n, expected):
    # 2N^2 + 3N real numbers: 2N means, N^2+N for symmetric C_bb,
    # N^2 for hermitian C_bdb
    assert flat_size(n) == expected


def _random_state(rng, n):
    net = ModeNetwork([f"m{i}" for i in range(n)])
    mu = rng.normal(size=n) + 1j * rng.normal(size=n)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    c_bb = a + a.T  # symmetric, not hermitian
    h = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    c_bdb = h + h.conj().T
    return CumulantState(network=net, mu=mu, c_bb=c_bb, c_bdb=c_bdb)


@pytest.mark.parametrize("n", [1, 2, 4])
def test_flat_round_trip_exact(n):
    rng = np.random.default_rng(42 + n)
    state = _random_state(rng, n)
    vec = to_flat(state)
    assert vec.shape == (flat_size(n),)
    back = from_flat(state.network, vec)
    # serialization just rearranges floats, so the round trip is exact
    assert np.array_equal(back.mu, state.mu)
    assert np.array_equal(back.c_bb, state.c_bb)
    assert np.array_equal(back.c_bdb, state.c_bdb)


def test_flat_round_trip_tolerance_contract():
    rng = np.random.default_rng(7)
    state = _random_state(rng, 3)
    back = from_flat(state.network, to_flat(state))
    assert np.max(np.abs(back.mu - state.mu)) <= 1e-12
    assert np.max(np.abs(back.c_bb - state.c_bb)) <= 1e-12
    assert np.max(np.abs(back.c_bdb - state.c_bdb)) <= 1e-12


def test_vacuum_and_coherent_cumulant_nullity():
    net = ModeNetwork(["a", "b"])
    vac = CumulantState.vacuum(net)
    assert np.all(vac.mu == 0)
    coh = CumulantState.coherent(net, [0.3 - 1j, 2.0])
    # coherent states are fully described by their mean
    assert np.all(coh.c_bb == 0)
    assert np.all(coh.c_bdb == 0)
    assert coh.mu[0] == 0.3 - 1j


def test_validate_flags_asymmetry():
    net = ModeNetwork(["a", "b"])
    state = CumulantState.vacuum(net)
    state.c_bb[0, 1] = 1.0  # breaks c_bb symmetry
    with pytest.raises(ValueError):
        state.validate()


def test_validate_flags_nonhermitian_cbdb():
    net = ModeNetwork(["a", "b"])
    state = CumulantState.vacuum(net)
    state.c_bdb[0, 1] = 1j
    state.c_bdb[1, 0] = 1j  # hermiticity needs -1j here
    with pytest.raises(ValueError):
        state.validate()


def test_moment_index_conjugate_and_order():
    ix = MomentIndex(daggers=(0,), plains=(1, 1))
    assert ix.order == 3
    cj = ix.conjugate()
    assert cj.daggers == (1, 1) and cj.plains == (0,)


def test_set_partitions_bell_numbers():
    # B_1..B_4 = 1, 2, 5, 15
    for n, bell in [(1, 1), (2, 2), (3, 5), (4, 15)]:
        assert sum(1 for _ in set_partitions(list(range(n)))) == bell


def test_cumulant_moment_round_trip_third_order():
    rng = np.random.default_rng(0)
    indices = []
    for d in range(3):
        for p in range(3 - d + 1):
            if 0 < d + p <= 3:
                indices.append(MomentIndex(daggers=(0,) * d, plains=(0,) * p))
    moments = {ix: complex(rng.normal(), rng.normal()) for ix in indices}
    back = cumulants_to_moments(moments_to_cumulants(moments))
    for ix in indices:
        assert back[ix] == pytest.approx(moments[ix], abs=1e-12)


def test_second_cumulant_is_covariance():
    # C(b,b) = <bb> - <b>^2 for a single mode
    mu = 0.7 + 0.2j
    bb = 1.1 - 0.4j
    moments = {
        MomentIndex(plains=(0,)): mu,
        MomentIndex(plains=(0, 0)): bb,
    }
    cum = moments_to_cumulants(moments)
    assert cum[MomentIndex(plains=(0, 0))] == pytest.approx(bb - mu * mu)


def test_coherent_state_moments_factorize():
    # all cumulants beyond first order vanish iff moments factorize
    alpha = 0.5 - 0.3j
    ixs = {
        MomentIndex(plains=(0,)): alpha,
        MomentIndex(daggers=(0,)): np.conj(alpha),
        MomentIndex(plains=(0, 0)): alpha**2,
        MomentIndex(daggers=(0,), plains=(0,)): abs(alpha) ** 2,
        MomentIndex(daggers=(0, 0)): np.conj(alpha) ** 2,
    }
    cum = moments_to_cumulants(ixs)
    for ix, value in cum.items():
        if ix.order > 1:
            assert abs(value) < 1e-14


def test_state_moment_reconstruction():
    rng = np.random.default_rng(3)
    state = _random_state(rng, 2)
    ix = MomentIndex(daggers=(0,), plains=(1,))
    # <b0^dag b1> = C(b0^dag, b1) + conj(mu0) mu1
    expected = state.c_bdb[0, 1] + np.conj(state.mu[0]) * state.mu[1]
    assert state.moment(ix) == pytest.approx(expected)


def test_quadrature_stats_vacuum_and_squeezed():
    net = ModeNetwork(["a"])
    vac = CumulantState.vacuum(net)
    stats = quadrature_stats(vac, "a")
    assert stats.var_max == pytest.approx(0.5)
    assert stats.var_min == pytest.approx(0.5)
    sq = CumulantState.vacuum(net)
    sq.c_bb[0, 0] = 0.3  # stretches X, squeezes P
    stats = quadrature_stats(sq, "a")
    assert stats.var_max == pytest.approx(0.8)
    assert stats.var_min == pytest.approx(0.2)
    assert stats.angle == pytest.approx(0.0)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.floats(-5, 5, allow_nan=False, allow_infinity=False),
        min_size=14,
        max_size=14,
    )
)
def test_flat_round_trip_property(values):
    # any admissible flat vector survives from_flat -> to_flat unchanged
    net = ModeNetwork(["a", "b"])
    vec = np.asarray(values)
    state = from_flat(net, vec)
    assert np.array_equal(to_flat(state), vec)
