"""Massive fractional operators on periodic boxes: spectrum, extension, energy and solvers."""

__version__ = "0.1.0"

from .energy import (HypothesisReport, Nonlinearity, RationalOdd, RationalOddModulated, Tabulated, Zero,
                     check_hypotheses, energy, gradient, hessian_vec, make_nonlinearity)
from .extension import (Bump, ExtendedField, ThetaProfile, conormal_derivative, cylinder_energy, extend,
                        theta_profile, trace_inequality_check)
from .fractional import (EigenspaceSplit, SpectrumEntry, SpectrumError, SpectrumTable, apply_inverse,
                         apply_operator, eigenspace_split, enumerate_spectrum, hs_norm, is_resonant,
                         project, rayleigh_quotient, real_eigenbasis)
from .solver import (MultiplicityResult, NonConvergence, SolutionRecord, SolverError, SolverOptions,
                     ps_diagnostics, solve_direct_min, solve_existence, solve_multiplicity, solve_newton)
from .torus import FourierField, ModeLattice, TorusConfig, analyze, inner, l2_norm, synthesize
