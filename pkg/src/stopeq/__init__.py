"""Equilibrium stopping regions for time-inconsistent Markov stopping problems.

The solver works on finite Markov chains with a nonnegative payoff and an
arbitrary (typically non-exponential) discount curve.  Equilibria are fixed
points of the best-response map ``theta``; under decreasing impatience they
are reached by iterating ``theta`` from any region it shrinks, and the
intersection of all equilibria is itself the value-dominating equilibrium.
"""

from stopeq.discounting import DIReport, DiscountCurve, check_DI, check_strict_DI, delta
from stopeq.equilibrium import (
    Certificate,
    IterationTrace,
    OptimalResult,
    enumerate_equilibria,
    is_equilibrium,
    iterate_to_fixpoint,
    mandatory_core,
    optimal_equilibrium,
    refine_pair,
    theta,
)
from stopeq.errors import SolverError, StopEqError, ValidationError
from stopeq.evaluate import (
    HittingProfile,
    Region,
    StoppingProblem,
    ValueReport,
    continuation_value,
    equilibrium_value,
    exact_exponential_value,
    hitting_profile,
)
from stopeq.finite_horizon import TimedRegion, backward_induction, iterate_finite
from stopeq.markov import (
    Boundary,
    Chain,
    LatticeSpec,
    build_finite_chain,
    build_lattice_chain,
    step_distribution,
)

__version__ = "0.1.0"

__all__ = [
    "Boundary",
    "Certificate",
    "Chain",
    "DIReport",
    "DiscountCurve",
    "HittingProfile",
    "IterationTrace",
    "LatticeSpec",
    "OptimalResult",
    "Region",
    "SolverError",
    "StopEqError",
    "StoppingProblem",
    "TimedRegion",
    "ValidationError",
    "ValueReport",
    "backward_induction",
    "build_finite_chain",
    "build_lattice_chain",
    "check_DI",
    "check_strict_DI",
    "continuation_value",
    "delta",
    "enumerate_equilibria",
    "equilibrium_value",
    "exact_exponential_value",
    "hitting_profile",
    "is_equilibrium",
    "iterate_finite",
    "iterate_to_fixpoint",
    "mandatory_core",
    "optimal_equilibrium",
    "refine_pair",
    "step_distribution",
    "theta",
]
