"""Finite element solvers for damped-pumped reaction-diffusion equations.

The package discretizes

    du/dt - nu*Lap(u) + alpha*|u|^(p-2)*u - sum_l beta_l*|u|^(q_l-2)*u = f

on the unit square/cube with homogeneous Dirichlet boundary conditions,
using conforming P1, Crouzeix-Raviart, or interior-penalty DG elements in
space and backward Euler with a Newton solver in time.

Set DPFEM_NUM_THREADS to cap the BLAS/OpenMP thread pools; it is applied
here so it takes effect as long as this package is imported before numpy.
"""

import os as _os

_nthreads = _os.environ.get("DPFEM_NUM_THREADS")
if _nthreads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _nthreads)

from dpfem.mesh import SimplexMesh, unit_square_mesh, unit_cube_mesh
from dpfem.quadrature import QuadRule, simplex_rule, facet_rule, interval_average
from dpfem.spaces import FunctionSpace, make_space
from dpfem.nonlinear import ReactionSpec, stability_constant
from dpfem.solver import NewtonConfig, LinearConfig, TimeIntegrator, linear_solve
from dpfem.projections import (
    l2_project,
    ritz_project,
    pi1_project,
    cr_interpolate,
    avg_nodal_interpolate,
    set_initial,
)
from dpfem.analysis import convergence_rates, ConvergenceReport, free_energy
from dpfem.harness import REGISTRY, get_problem, run_single, run_study

__version__ = "0.1.0"

__all__ = [
    "SimplexMesh",
    "unit_square_mesh",
    "unit_cube_mesh",
    "QuadRule",
    "simplex_rule",
    "facet_rule",
    "interval_average",
    "FunctionSpace",
    "make_space",
    "ReactionSpec",
    "stability_constant",
    "NewtonConfig",
    "LinearConfig",
    "TimeIntegrator",
    "linear_solve",
    "l2_project",
    "ritz_project",
    "pi1_project",
    "cr_interpolate",
    "avg_nodal_interpolate",
    "set_initial",
    "convergence_rates",
    "ConvergenceReport",
    "free_energy",
    "REGISTRY",
    "get_problem",
    "run_single",
    "run_study",
]
