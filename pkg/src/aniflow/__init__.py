"""Parametric finite elements for anisotropic curve shortening flow.

Curves in R^d evolve by ``H(x_rho) x_t = [Phi'(x_rho)]_rho`` with
``Phi = phi^2 / 2``; the matrix ``H`` makes the system strictly parabolic, so
no mesh redistribution is needed.
"""
from .anisotropy import (Anisotropy, ConstantMobility, CustomAnisotropy, DiagonalQuadraticAnisotropy,
                         IsotropicAnisotropy, InversePhiMobility, Mobility, NormalDensityAnisotropy,
                         RegularizedL1Anisotropy, SinModulatedAnisotropy, ValidationReport, make_anisotropy,
                         make_mobility, validate)
from .assembly import CyclicBlockSystem, ForcingTerm, SchemeOptions, forcing_from_exact, jacobian, residual
from .config import FlowConfig
from .diagnostics import (ConvergenceRow, TimeSeriesRecord, convergence_study, discrete_curvature, eoc,
                          k_infinity)
from .errors import (AniflowError, ConfigError, DegenerateVector, DimensionMismatch, EigenFailure, InvalidInput,
                     InvalidTime, NewtonDiverged, SingularSystem)
from .flow_matrix import FlowMatrixParts, check_parabolicity, compute_parts, reduce_2d
from .mesh import NodalField, PeriodicGrid, element_ratio, energy_phi, energy_Phi, error_norms, interpolate
from .presets import closed_helix_nodes, ellipse3d_problem, make_curve
from .ritz import RitzOptions, ritz_project
from .solver import NewtonOptions, StepReport, run_flow, solve_linear, solve_timestep

__version__ = "0.1.0"
