"""Numerical lab for weakly coupled semilinear structurally damped wave systems.

Modules:

- ``moduli``: moduli of continuity, critical-curve algebra, classification,
  lifespan scaling functions.
- ``kernels``: the linear propagator kernels and their Fourier application.
- ``solver``: pseudospectral Lawson-Heun integrator with blow-up detection.
- ``testfunctions``: test-function family and quadrature checks of its lemmas.
- ``experiments``: decay, curve and lifespan sweeps with hashed outputs.
- ``cli``: the ``fractodamp`` command.
"""
from .errors import (ConfigError, ConvergenceError, DomainError, FractodampError, InconclusiveError,
                     PreconditionError, QuadratureError, ShapeError)
from .grid import GridSpec
from .kernels import KernelPoint, apply_propagator, eval_kernels, kernel_ode_residual
from .moduli import (Constant, IteratedLog, PowerLog, PurePower, SystemParams, Tabulated,
                     classify_system, critical_integral, lifespan_bound, psi, psi_inverse)
from .solver import (DampedWaveSolver, FieldState, InitialData, RunOutcome, RunStatus,
                     SolverControls, make_initial_data, run)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ConvergenceError", "DomainError", "FractodampError", "InconclusiveError",
    "PreconditionError", "QuadratureError", "ShapeError", "GridSpec", "KernelPoint",
    "apply_propagator", "eval_kernels", "kernel_ode_residual", "Constant", "IteratedLog",
    "PowerLog", "PurePower", "SystemParams", "Tabulated", "classify_system", "critical_integral",
    "lifespan_bound", "psi", "psi_inverse", "DampedWaveSolver", "FieldState", "InitialData",
    "RunOutcome", "RunStatus", "SolverControls", "make_initial_data", "run",
]
