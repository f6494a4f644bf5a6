"""Reference measurement chains for the two classification tasks.

Two hardware configurations are provided, each feeding a signal one-way
into a continuously heterodyned Kerr network:

* Pointer-state readout ("task1"): a coherently driven cavity, detuned
  per class, drives the first node of a K-node Kerr network through a
  quadrature-selective directional amplifier.  Every network node is
  monitored.
* Amplifier-state readout ("task2"): a driven two-mode parametric
  amplifier feeds a single Kerr node through a circulator.  The node is
  monitored, unless a phase-preserving post-amplifier stage is enabled,
  in which case the monitored channel moves to the first post-amplifier
  mode.

The closed-form helpers (``eta_eff_task1``, ``eta_eff_task2``,
``amplifier_steady_quadratures``, ``pa_gain``) express the steady signal
the Kerr network sees, which together with ``n_eff`` locates the
operating point on the classical phase diagram of the driven network.

All builders are pure functions of immutable specs; rates are quoted in
units of the signal-mode linewidth ``kappa`` unless stated otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from .blocks import (
    BeamSplitter,
    ChainSpec,
    CirculatorCoupling,
    CoherentDrive,
    Detuning,
    DirectionalAmpCoupling,
    DegenerateParametric,
    Kerr,
    Loss,
    NonDegenerateParametric,
)
from .state import ModeNetwork

__all__ = [
    "QRCHyperparams",
    "QRCDraw",
    "sample_random_qrc",
    "TaskISpec",
    "AmplifierClass",
    "PostAmpSection",
    "TaskIISpec",
    "build_task1_chain",
    "build_task2_chain",
    "build_task2_pa_chain",
    "eta_eff_task1",
    "eta_eff_task2",
    "n_eff",
    "amplifier_steady_quadratures",
    "pa_gain",
    "pa_for_gain",
    "pa_for_unit_gain",
    "task2_drive_instance",
    "TASK2_DRIVE_INSTANCES",
    "preset",
    "PRESET_NAMES",
]


# --------------------------------------------------------------------------
# Kerr-network hyperparameters and disorder draws


@dataclass(frozen=True)
class QRCHyperparams:
    """Mean node parameters of the Kerr network plus disorder half-width.

    Individual networks are drawn around these means: node Kerr strengths
    are scattered multiplicatively as lambda_bar*(1+u) and node detunings
    additively as delta_bar + gamma_bar*u, with u uniform on
    [-epsilon, epsilon].  Damping rates and the inter-node coupling are
    not randomized.
    """

    n_nodes: int
    lambda_bar: float
    delta_bar: float
    g_bar: float
    gamma_bar: float
    epsilon: float = 0.1
    sampler_seed: int = 0

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError(f"need at least one node, got {self.n_nodes}")
        if self.gamma_bar <= 0:
            raise ValueError(f"gamma_bar must be positive, got {self.gamma_bar}")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")


@dataclass(frozen=True)
class QRCDraw:
    """One realized network: per-node rates plus the shared coupling."""

    lambdas: Tuple[float, ...]
    deltas: Tuple[float, ...]
    gammas: Tuple[float, ...]
    g: float

    @property
    def n_nodes(self) -> int:
        return len(self.lambdas)


def sample_random_qrc(hyper: QRCHyperparams) -> QRCDraw:
    """Draw one disordered network, deterministically in ``sampler_seed``."""
    rng = np.random.default_rng(hyper.sampler_seed)
    k = hyper.n_nodes
    u_lambda = rng.uniform(-hyper.epsilon, hyper.epsilon, size=k)
    u_delta = rng.uniform(-hyper.epsilon, hyper.epsilon, size=k)
    lambdas = tuple(hyper.lambda_bar * (1.0 + u) for u in u_lambda)
    deltas = tuple(hyper.delta_bar + hyper.gamma_bar * u for u in u_delta)
    gammas = (hyper.gamma_bar,) * k
    return QRCDraw(lambdas=lambdas, deltas=deltas, gammas=gammas, g=hyper.g_bar)


# --------------------------------------------------------------------------
# Task specs


@dataclass(frozen=True)
class TaskISpec:
    """Pointer-state readout: one driven cavity feeding a K-node network.

    The four classes are cavity detunings (+/-)chi1 (+/-) chi2, listed in
    descending order; with the defaults chi1=2, chi2=0.5 this gives
    (2.5, 1.5, -1.5, -2.5)*kappa.  The drive is real (X-quadrature) and
    resonant with the bare cavity.  ``gamma_c`` sets both the coherent
    and dissipative halves of the directional coupling, which makes the
    cavity dynamics independent of everything downstream.
    """

    kappa: float = 1.0
    eta: float = 26.0
    chi1: float = 2.0
    chi2: float = 0.5
    gamma_c: float = 1.0
    qrc: QRCHyperparams = field(
        default_factory=lambda: QRCHyperparams(
            n_nodes=2,
            lambda_bar=0.005,
            delta_bar=0.0,
            g_bar=1.0,
            gamma_bar=1.0,
            epsilon=0.0,
        )
    )

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.gamma_c <= 0:
            raise ValueError(f"gamma_c must be positive, got {self.gamma_c}")

    @property
    def n_classes(self) -> int:
        return 4

    def class_detunings(self) -> Tuple[float, float, float, float]:
        """Cavity detuning per class, descending."""
        return (
            self.chi1 + self.chi2,
            self.chi1 - self.chi2,
            -(self.chi1 - self.chi2),
            -(self.chi1 + self.chi2),
        )

    def delta_a(self, sigma: int) -> float:
        _check_sigma(sigma, self.n_classes)
        return self.class_detunings()[sigma - 1]


@dataclass(frozen=True)
class AmplifierClass:
    """Drive and squeezing strengths defining one amplifier state."""

    eta: float
    g1: float
    g12: float


@dataclass(frozen=True)
class PostAmpSection:
    """Two-mode phase-preserving amplifier appended after the Kerr node.

    ``gamma_c`` is the circulator coupling (coherent = dissipative rate)
    from the Kerr node into mode d1; ``g_pa`` the two-mode interaction.
    The circulator replaces the node's direct monitored loss -- its rate
    should equal the bare loss it replaces so the node's total damping is
    unchanged.  The effective damping gamma_d1 + gamma_c of d1 should
    equal gamma_d2 so both post-amplifier modes relax at the same rate.
    """

    g_pa: float
    gamma_d1: float = 0.5
    gamma_d2: float = 1.5
    gamma_c: float = 1.0

    @property
    def gamma_d(self) -> float:
        """Common effective damping rate of the post-amplifier modes."""
        return self.gamma_d1 + self.gamma_c


@dataclass(frozen=True)
class TaskIISpec:
    """Amplifier-state readout: two-mode amplifier feeding one Kerr node.

    The two classes share first moments of the coupled amplifier mode by
    construction but differ in second cumulants.  kappa1 + gamma_c must
    equal kappa2 so both amplifier modes see the same total damping.
    """

    kappa: float = 1.0
    classes: Tuple[AmplifierClass, AmplifierClass] = (
        AmplifierClass(eta=5.0, g1=0.3, g12=0.0),
        AmplifierClass(eta=8.0, g1=0.0, g12=0.3),
    )
    kappa1: float = 0.5
    kappa2: float = 1.0
    gamma_c: float = 0.5
    qrc_lambda: float = 0.0027
    qrc_delta: float = -1.0
    qrc_gamma: float = 1.0
    pa: Optional[PostAmpSection] = None

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if abs(self.kappa1 + self.gamma_c - self.kappa2) > 1e-12 * self.kappa:
            raise ValueError(
                "kappa1 + gamma_c must equal kappa2 for equal total damping; got "
                f"{self.kappa1} + {self.gamma_c} != {self.kappa2}"
            )
        if self.qrc_gamma <= 0:
            raise ValueError(f"qrc_gamma must be positive, got {self.qrc_gamma}")

    @property
    def n_classes(self) -> int:
        return 2

    def amplifier_class(self, sigma: int) -> AmplifierClass:
        _check_sigma(sigma, self.n_classes)
        return self.classes[sigma - 1]


def _check_sigma(sigma: int, n_classes: int) -> None:
    if not 1 <= sigma <= n_classes:
        raise ValueError(f"class label must be in 1..{n_classes}, got {sigma}")


# --------------------------------------------------------------------------
# Chain builders


def build_task1_chain(
    spec: TaskISpec, sigma: int, qrc_draw: Optional[QRCDraw] = None
) -> ChainSpec:
    """Cavity + K-node monitored Kerr network for class ``sigma``.

    ``qrc_draw`` fixes the disordered node parameters; by default one is
    sampled from ``spec.qrc`` (deterministic in its sampler_seed).
    """
    delta_a = spec.delta_a(sigma)
    draw = sample_random_qrc(spec.qrc) if qrc_draw is None else qrc_draw
    nodes = [f"b{k + 1}" for k in range(draw.n_nodes)]
    network = ModeNetwork(["a1"] + nodes)
    blocks = [
        Detuning("a1", delta_a),
        CoherentDrive("a1", spec.eta),
        Loss("a1", spec.kappa),
        DirectionalAmpCoupling("a1", "b1", g_c=spec.gamma_c, gamma_c=spec.gamma_c),
    ]
    for label, lam, delta, gamma in zip(nodes, draw.lambdas, draw.deltas, draw.gammas):
        blocks.append(Detuning(label, delta))
        blocks.append(Kerr(label, lam))
        blocks.append(Loss(label, gamma, monitored=True))
    for left, right in zip(nodes, nodes[1:]):
        blocks.append(BeamSplitter(left, right, draw.g))
    return ChainSpec(network, blocks)


def _amplifier_blocks(spec: TaskIISpec, sigma: int) -> list:
    cls = spec.amplifier_class(sigma)
    blocks = [
        CoherentDrive("a1", 1j * cls.eta),
        Loss("a1", spec.kappa1),
        Loss("a2", spec.kappa2),
    ]
    if cls.g1 != 0.0:
        # H = (g1/2) e^{-i pi/2} a1^2 + h.c., driving the X quadrature
        # of a1 against the P-quadrature drive above.
        blocks.append(DegenerateParametric("a1", cls.g1, phase=-0.5 * math.pi))
    if cls.g12 != 0.0:
        blocks.append(NonDegenerateParametric("a1", "a2", cls.g12, phase=0.0))
    return blocks


def build_task2_chain(spec: TaskIISpec, sigma: int) -> ChainSpec:
    """Two amplifier modes + one monitored Kerr node for class ``sigma``."""
    network = ModeNetwork(["a1", "a2", "b1"])
    blocks = _amplifier_blocks(spec, sigma)
    blocks += [
        CirculatorCoupling("a1", "b1", g_c=spec.gamma_c, gamma_c=spec.gamma_c),
        Detuning("b1", spec.qrc_delta),
        Kerr("b1", spec.qrc_lambda),
        Loss("b1", spec.qrc_gamma, monitored=True),
    ]
    return ChainSpec(network, blocks)


def build_task2_pa_chain(spec: TaskIISpec, sigma: int) -> ChainSpec:
    """Task-II chain with the post-amplifier stage; only d1 is monitored.

    The Kerr node keeps its Hamiltonian terms but loses its direct loss
    block: the output port that was heterodyned in ``build_task2_chain``
    is instead routed by the second circulator into d1, whose own loss
    carries the measurement.
    """
    if spec.pa is None:
        raise ValueError("spec.pa must be set to build the post-amplifier chain")
    pa = spec.pa
    network = ModeNetwork(["a1", "a2", "b1", "d1", "d2"])
    blocks = _amplifier_blocks(spec, sigma)
    blocks += [
        CirculatorCoupling("a1", "b1", g_c=spec.gamma_c, gamma_c=spec.gamma_c),
        Detuning("b1", spec.qrc_delta),
        Kerr("b1", spec.qrc_lambda),
        CirculatorCoupling("b1", "d1", g_c=pa.gamma_c, gamma_c=pa.gamma_c),
        NonDegenerateParametric("d1", "d2", pa.g_pa, phase=0.0),
        Loss("d1", pa.gamma_d1, monitored=True),
        Loss("d2", pa.gamma_d2),
    ]
    return ChainSpec(network, blocks)


# --------------------------------------------------------------------------
# Closed-form effective drives and gains


def eta_eff_task1(spec: TaskISpec, sigma: int) -> float:
    """Steady drive the network sees from the class-``sigma`` cavity.

    Equal to -2*gamma_c*Re<a1>_ss = -2*gamma_c*eta*delta_a/(delta_a^2+kappa^2/4);
    it enters the first node's mean equation as a real additive term.
    """
    delta_a = spec.delta_a(sigma)
    return -2.0 * spec.gamma_c * spec.eta * delta_a / (delta_a**2 + spec.kappa**2 / 4.0)


def eta_eff_task2(spec: TaskIISpec, sigma: int) -> float:
    """Steady drive the Kerr node sees from the class-``sigma`` amplifier.

    Equal to -gamma_c*<a1>_ss = 2*gamma_c*kappa*eta/(4*g12^2+kappa*(2*g1-kappa));
    real for the P-quadrature drive used here.  Diverges at the amplifier
    instability threshold, where no steady state exists.
    """
    cls = spec.amplifier_class(sigma)
    kappa = spec.kappa
    denom = 4.0 * cls.g12**2 + kappa * (2.0 * cls.g1 - kappa)
    if abs(denom) < 1e-12 * kappa**2:
        raise ValueError(
            "amplifier is at its instability threshold "
            f"(4*g12^2 + kappa*(2*g1 - kappa) = {denom:g}); no steady drive exists"
        )
    return 2.0 * spec.gamma_c * kappa * cls.eta / denom


def n_eff(eta_eff: float, lambda_bar: float, gamma_total: float) -> float:
    """Dimensionless drive number locating the classical operating point.

    ``gamma_total`` is the full damping rate of the driven node: its bare
    loss plus any coupling-induced damping (e.g. the circulator adds
    gamma_c).  Scales as eta*sqrt(lambda), so (lambda/4, 2*eta) maps to
    the same operating point.
    """
    if gamma_total <= 0:
        raise ValueError(f"gamma_total must be positive, got {gamma_total}")
    if lambda_bar < 0:
        raise ValueError(f"lambda_bar must be nonnegative, got {lambda_bar}")
    return (eta_eff / gamma_total) * math.sqrt(lambda_bar / gamma_total)


def amplifier_steady_quadratures(
    spec: TaskIISpec, sigma: int
) -> Tuple[float, float, float, float]:
    """Unconditional steady (X_a1, P_a1, X_a2, P_a2) of the bare amplifier.

    Solves the linear quadrature flow in closed form.  The drive pushes
    only X_a1; P_a1 and X_a2 vanish, and P_a2 = -2*g12*X_a1/kappa2.  Both
    default classes give the same X_a1 (equal first moments).
    """
    cls = spec.amplifier_class(sigma)
    kappa_eff1 = spec.kappa1 + spec.gamma_c
    denom = cls.g1 - kappa_eff1 / 2.0 + 2.0 * cls.g12**2 / spec.kappa2
    if abs(denom) < 1e-12 * spec.kappa:
        raise ValueError("amplifier X quadrature is at threshold; no steady state")
    x_a1 = -math.sqrt(2.0) * cls.eta / denom
    p_a2 = -2.0 * cls.g12 * x_a1 / spec.kappa2
    return (x_a1, 0.0, 0.0, p_a2)


def pa_gain(
    g_pa: float,
    gamma_d: float = 1.5,
    gamma_c: float = 1.0,
    gamma_d1: float = 0.5,
) -> float:
    """Amplitude gain sqrt(G) of the post-amplifier stage.

    ``gamma_d`` is the common effective damping of the post-amplifier
    modes, ``gamma_c`` the circulator rate feeding d1, and ``gamma_d1``
    the monitored loss of d1.  Valid below threshold g_pa < gamma_d/2.
    """
    if not 0.0 <= g_pa < gamma_d / 2.0:
        raise ValueError(
            f"post-amplifier interaction g_pa={g_pa:g} must lie in [0, gamma_d/2="
            f"{gamma_d / 2.0:g}) to stay below threshold"
        )
    return -2.0 * gamma_d * math.sqrt(gamma_c * gamma_d1) / (4.0 * g_pa**2 - gamma_d**2)


def pa_for_gain(
    target: float,
    gamma_d: float = 1.5,
    gamma_c: float = 1.0,
    gamma_d1: float = 0.5,
) -> float:
    """Interaction strength g_pa realizing amplitude gain ``target``.

    The gain at g_pa=0 is 2*sqrt(gamma_c*gamma_d1)/gamma_d; targets below
    that are unreachable.
    """
    floor = 2.0 * math.sqrt(gamma_c * gamma_d1) / gamma_d
    if target < floor:
        raise ValueError(
            f"target gain {target:g} is below the zero-interaction gain {floor:g}"
        )
    g_sq = (gamma_d**2 - 2.0 * gamma_d * math.sqrt(gamma_c * gamma_d1) / target) / 4.0
    return math.sqrt(g_sq)


def pa_for_unit_gain(
    gamma_d: float = 1.5, gamma_c: float = 1.0, gamma_d1: float = 0.5
) -> float:
    """g_pa at which the post-amplifier passes signals with unit gain."""
    return pa_for_gain(1.0, gamma_d=gamma_d, gamma_c=gamma_c, gamma_d1=gamma_d1)


# --------------------------------------------------------------------------
# Drive-instance rescaling (fixed operating point, varying quantum-ness)

# (eta_eff, qrc_lambda) pairs sharing n_eff ~ 0.354 for the default
# task-II damping budget (gamma_total = 1.5*kappa).  Larger lambda at
# weaker drive probes the same classical operating point with stronger
# quantum fluctuations.
TASK2_DRIVE_INSTANCES: Tuple[Tuple[float, float], ...] = (
    (20.0, 0.0010547),
    (12.5, 0.0027),
    (5.0, 0.016875),
)


def task2_drive_instance(
    spec: TaskIISpec, eta_eff_target: float, qrc_lambda: float
) -> TaskIISpec:
    """Rescale class drives so both classes see ``eta_eff_target``.

    Keeps the squeezing strengths (hence the class covariances) fixed
    while setting the common effective drive magnitude and the node Kerr
    strength; used to sweep drive strength at a fixed operating point.
    """
    new_classes = []
    for sigma in (1, 2):
        cls = spec.amplifier_class(sigma)
        denom = 4.0 * cls.g12**2 + spec.kappa * (2.0 * cls.g1 - spec.kappa)
        eta = eta_eff_target * abs(denom) / (2.0 * spec.gamma_c * spec.kappa)
        new_classes.append(replace(cls, eta=eta))
    return replace(spec, classes=tuple(new_classes), qrc_lambda=qrc_lambda)


# --------------------------------------------------------------------------
# Named presets


def _preset_task1() -> TaskISpec:
    return TaskISpec()


def _preset_task2() -> TaskIISpec:
    return TaskIISpec()


def _preset_task2_pa() -> TaskIISpec:
    return TaskIISpec(pa=PostAmpSection(g_pa=pa_for_unit_gain()))


_PRESETS = {
    "task1-fig4": _preset_task1,
    "task2-fig6": _preset_task2,
    "task2-pa": _preset_task2_pa,
}

PRESET_NAMES = tuple(sorted(_PRESETS))


def preset(name: str):
    """Return a fresh task spec for one of the named configurations."""
    try:
        factory = _PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {PRESET_NAMES}") from None
    return factory()
