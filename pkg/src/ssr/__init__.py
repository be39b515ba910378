"""Steady-state response of nonlinear mechanical systems via integral equations.

Periodic and quasi-periodic responses of ``M xdd + C xd + K x + S(x, xd) = f(t)``
are computed as fixed points of Green's-function integral equations, solved
by Picard iteration, Newton-Raphson or a hybrid of both, and continued in
the forcing frequency.
"""
from .bench import (
    build_chain,
    build_two_dof,
    chain_nonlinearity,
    cubic_spring,
    play_spring,
    time_march_oracle,
)
from .continuation import backbone_continue, continue_branch, sequential_sweep
from .discretization import CollocationGrid, FourierSolution, PeriodicSolution
from .errors import (
    SSRError,
    ModelError,
    NondiagonalizableError,
    ProportionalityError,
    ResonanceError,
    StabilityError,
    InternalError,
    DiscretizationError,
    ConvergenceError,
    Diverged,
    MaxIter,
    SingularJacobian,
    BothFailed,
    BranchPointError,
    StepFailed,
    SeedRejected,
    TransientNotDecayed,
    ConfigError,
)
from .forcing import ForcingSpec, FrequencyIndexSet, harmonic_forcing, qper_forcing
from .model import (
    MechanicalSystem,
    Nonlinearity,
    diagonalize_first_order,
    lift_to_first_order,
    modal_decompose_second_order,
)
from .newton import hybrid_solve, newton_solve_periodic, solve, solve_quasiperiodic_hybrid
from .picard import certify_problem, picard_iterate, picard_quasiperiodic
from .problem import periodic_problem, quasiperiodic_problem

__version__ = "0.1.0"
