"""Green-operator discretizations and solvers for singular nonlocal problems.

Quick tour::

    from singular_green import Domain, KernelSpec, build_graded_grid, assemble, solve_pure
    spec = KernelSpec("rfl_interval", s=0.25)
    grid = build_graded_grid(Domain(), M=512, g=8)
    u = solve_pure(assemble(spec, grid), q=0.5).u
"""
from .geometry import (Domain, Grid, GridFunction, build_graded_grid, default_grading,
                       delta_power)
from .kernels import KernelSpec, kernel_value, sandwich_check
from .operator import (GreenMatrix, apply, assemble, eps_shift_lower_bound_check,
                       image_of_delta_power, image_of_log_weight)
from .regimes import (CriticalExponents, ExponentFit, RegimeReport, classify,
                      critical_exponents, fit_boundary_exponent, fit_log_power,
                      verify_green_lemma)
from .solvers import (EigenResult, EpsSchedule, NonlinearitySpec, SolveResult,
                      check_source_admissible, check_weak_dual, principal_eigenpair,
                      solve_absorption, solve_perturbed, solve_pure, solve_regularized,
                      solve_source)

__all__ = [
    "Domain", "Grid", "GridFunction", "build_graded_grid", "default_grading", "delta_power",
    "KernelSpec", "kernel_value", "sandwich_check",
    "GreenMatrix", "apply", "assemble", "eps_shift_lower_bound_check",
    "image_of_delta_power", "image_of_log_weight",
    "CriticalExponents", "ExponentFit", "RegimeReport", "classify", "critical_exponents",
    "fit_boundary_exponent", "fit_log_power", "verify_green_lemma",
    "EigenResult", "EpsSchedule", "NonlinearitySpec", "SolveResult", "check_source_admissible",
    "check_weak_dual", "principal_eigenpair", "solve_absorption", "solve_perturbed",
    "solve_pure", "solve_regularized", "solve_source",
]
