"""kerrchain: conditional dynamics of measured Kerr-oscillator networks.

Simulates continuously heterodyne-monitored networks of Kerr-nonlinear
bosonic modes using stochastic equations of motion for means and second-order
cumulants, with exact oracles (complex-P steady states, classical fixed
points, truncated Fock-space integration) for validation, plus the readout,
training, and experiment layers for quantum-state classification tasks built
on such networks.
"""

from .state import (
    CumulantState,
    ModeNetwork,
    MomentIndex,
    cumulants_to_moments,
    moments_to_cumulants,
    quadrature_stats,
)
from .blocks import (
    BeamSplitter,
    ChainOperators,
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
)

__version__ = "0.1.0"

__all__ = [
    "CumulantState",
    "ModeNetwork",
    "MomentIndex",
    "cumulants_to_moments",
    "moments_to_cumulants",
    "quadrature_stats",
    "BeamSplitter",
    "ChainOperators",
    "ChainSpec",
    "CirculatorCoupling",
    "CoherentDrive",
    "DegenerateParametric",
    "Detuning",
    "DirectionalAmpCoupling",
    "Kerr",
    "Loss",
    "NonDegenerateParametric",
    "compile_chain",
    "__version__",
]
