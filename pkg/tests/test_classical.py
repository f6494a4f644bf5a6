"""Mean-field fixed points and the classical phase diagram."""

import numpy as np
import pytest

from kerrchain.blocks import ChainSpec, CoherentDrive, Detuning, Kerr, Loss
from kerrchain.integrate import IntegratorConfig, evolve_unconditional
from kerrchain.oracles.classical import (
    bistable_drive_interval,
    classical_fixed_points,
    phase_diagram,
)
from kerrchain.state import CumulantState, ModeNetwork

# closed form: turning points of n((n+delta)^2 + 1/4) at delta=-1 sit at
# n = (2 +- 1/2)/3, giving the frozen drive window below
INTERVAL_LO = 0.4811252243246882
INTERVAL_HI = 0.5


def test_bistable_interval_frozen_value():
    lo, hi = bistable_drive_interval(-1.0)
    assert lo == pytest.approx(INTERVAL_LO, abs=1e-12)
    assert hi == pytest.approx(INTERVAL_HI, abs=1e-12)


def test_no_interval_above_critical_detuning():
    # bistability needs delta < -sqrt(3)/2
    assert bistable_drive_interval(-0.5) is None
    assert bistable_drive_interval(-np.sqrt(3) / 2) is None
    assert bistable_drive_interval(0.3) is None
    assert bistable_drive_interval(-0.87) is not None


def test_fixed_point_count_through_the_window():
    inside = classical_fixed_points(-1.0, 0.0, 0.49)
    assert len(inside) == 3
    assert [fp.stable for fp in inside] == [True, False, True]
    below = classical_fixed_points(-1.0, 0.0, 0.40)
    above = classical_fixed_points(-1.0, 0.0, 0.55)
    assert len(below) == 1 and below[0].stable
    assert len(above) == 1 and above[0].stable


def test_fixed_points_solve_the_cubic():
    delta, nd = -1.0, 0.49
    for fp in classical_fixed_points(delta, 0.0, nd):
        n = abs(fp.amplitudes[0]) ** 2
        assert n * ((n + delta) ** 2 + 0.25) == pytest.approx(nd**2, abs=1e-10)


def test_fixed_points_are_mean_field_equilibria():
    # unconditional mean-field flow started at a stable root stays there
    delta, lam, nd = -1.0, 0.05 , 0.49
    fps = classical_fixed_points(delta, 0.0, nd)
    stable = [fp for fp in fps if fp.stable]
    net = ModeNetwork(["b"])
    # scaled flow uses b = sqrt(Lambda) mu with a real additive drive, so the
    # physical drive amplitude is i * n_drive / sqrt(Lambda)
    chain = ChainSpec(
        net,
        [
            Detuning("b", delta * 1.0),
            Kerr("b", lam),
            CoherentDrive("b", 1j * nd / np.sqrt(lam)),
            Loss("b", 1.0),
        ],
    )
    config = IntegratorConfig(dt=1e-3, t_final=30.0, store_stride=1000)
    for fp in stable:
        alpha = fp.amplitudes[0] / np.sqrt(lam)
        series = evolve_unconditional(
            chain, config, CumulantState.coherent(net, [alpha]), classical=True
        )
        final = series.states[-1].mu[0]
        assert final == pytest.approx(alpha, abs=2e-6)


def test_unstable_root_flows_away():
    delta, lam, nd = -1.0, 0.05, 0.49
    unstable = [fp for fp in classical_fixed_points(delta, 0.0, nd) if not fp.stable]
    assert len(unstable) == 1
    net = ModeNetwork(["b"])
    chain = ChainSpec(
        net,
        [
            Detuning("b", delta),
            Kerr("b", lam),
            CoherentDrive("b", 1j * nd / np.sqrt(lam)),
            Loss("b", 1.0),
        ],
    )
    alpha = unstable[0].amplitudes[0] / np.sqrt(lam)
    config = IntegratorConfig(dt=1e-3, t_final=60.0, store_stride=1000)
    # a small kick makes the repeller visible in finite time
    series = evolve_unconditional(
        chain, config, CumulantState.coherent(net, [alpha * 1.001]), classical=True
    )
    assert abs(series.states[-1].mu[0] - alpha) > 1e-2


def test_two_node_diagram_reduces_to_single_node_at_zero_coupling():
    fps_single = classical_fixed_points(-1.0, 0.0, 0.49)
    fps_pair = classical_fixed_points(-1.0, 1e-12, 0.49)
    assert len(fps_single) == len(fps_pair)


def test_phase_diagram_grid_shape_and_window():
    drives = np.linspace(0.40, 0.55, 16)
    pd = phase_diagram("n_drive", drives, "delta", [-1.0], fixed={"g": 0.0})
    assert pd.n_stable.shape == (16, 1)
    assert pd.n_fixed_points.shape == (16, 1)
    assert not pd.failed.any()
    inside = (drives > INTERVAL_LO) & (drives < INTERVAL_HI)
    assert np.array_equal(pd.n_fixed_points[:, 0] == 3, inside)
    assert np.array_equal(pd.n_stable[:, 0] == 2, inside)
    outside = ~inside
    assert np.all(pd.n_stable[outside, 0] == 1)
