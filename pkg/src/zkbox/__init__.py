"""Finite-difference simulator and verification harness for the 3D
Zakharov-Kuznetsov equation on a box with dissipative boundary conditions."""
from .diagnostics import (CheckResult, DecayFit, DiagnosticsRecord, check_boundedness,
                          check_envelope, check_eux_bound, continuous_dependence,
                          energy_identity_residual, fit_decay_rate, record)
from .errors import (CompatibilityError, ConfigError, DivergenceError, SingularSystemError,
                     ValidationError, ZKError)
from .grid import Field3, Grid3, make_grid
from .ineq import IneqReport, interpolation_ratio, steklov_ratio, theta
from .solver import (ManufacturedSolution, SimState, SolverConfig, compute_ut,
                     make_initial_bump, run, simulate, step)
from .theory import (HypothesisCertificate, PhysParams, TheoryConstants, check_hypotheses,
                     compute_constants, compute_J0, decay_envelope)

__version__ = "0.1.0"
