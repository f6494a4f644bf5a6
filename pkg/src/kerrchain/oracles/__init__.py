"""Independent reference implementations used to validate the cumulant engine.

Nothing here shares code with the main integrator: steady-state moments come
from a complex-P phase-space solution, classical fixed points from direct
root finding, and conditional trajectories from brute-force integration of
the stochastic master equation in a truncated Fock space.
"""
