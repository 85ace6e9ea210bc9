"""Lorentzian density of states for 1D discrete and continuum operators."""

from .error_bounds import (ErrorBudget, RateFit, fit_rate, laplacian_bound,
                           mathieu_bound)
from .laplacian_dos import (DosCurve, InvalidParameterError, NonConvergenceWarning,
                            QuadratureSpec, dos_laplacian_continuum,
                            dos_laplacian_discrete_scaled, laplacian_error_curve)
from .mathieu_bloch import (BlochIndexWindow, MathieuParams, build_dc, build_dd_scaled,
                            default_window, dos_mathieu_continuum,
                            dos_mathieu_discrete_scaled)
from .spectral_core import (ComplexShift, SolverBreakdown, SymTriMatrix, eig_bisection,
                            eig_ql, lorentzian_trace, lorentzian_trace_resolvent,
                            resolvent_row)
from .truncation_probe import (combes_thomas_fit, corner_truncation_gap,
                               gershgorin_min_eig_bound, window_trace_sequence)

__version__ = "0.1.0"
