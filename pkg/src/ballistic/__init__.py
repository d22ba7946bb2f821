"""Simulation and verification laboratory for three-velocity ballistic
annihilation with asymmetric mover weights.

Layers:

* :mod:`ballistic.model` -- domain types, spacing laws, velocity sampling,
  deterministic stream addressing.
* :mod:`ballistic.engine` -- exact event-driven window resolution
  (rationals for atomic spacings, floats otherwise).
* :mod:`ballistic.kernel` -- the same algorithm compiled with numba for
  Monte Carlo volume.
* :mod:`ballistic.oracle` -- naive reference resolver and exact rational
  enumeration over velocity assignments.
* :mod:`ballistic.estimators` -- Monte Carlo estimators for visit,
  ordering and survival probabilities, identity residual checks, and the
  theta bracket.
* :mod:`ballistic.theory` -- closed-form bounds, visit-probability
  quadratics, fixed-point solver.
* :mod:`ballistic.sweep` -- phase-diagram sweeps and critical-point
  bracketing.
* :mod:`ballistic.cli` -- the ``ballistic`` command.
"""

from .model import (
    AlphaTriple,
    Configuration,
    Params,
    Particle,
    RandomnessContract,
    SpacingSpec,
    Velocity,
)

__all__ = [
    "AlphaTriple",
    "Configuration",
    "Params",
    "Particle",
    "RandomnessContract",
    "SpacingSpec",
    "Velocity",
]

__version__ = "0.1.0"
