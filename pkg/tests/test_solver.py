"""Linear/Newton solvers and the backward Euler integrator."""

from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from dpfem.assembly import mass_matrix, operator_matrix
from dpfem.mesh import unit_square_mesh
from dpfem.nonlinear import ReactionOperator, ReactionSpec
from dpfem.solver import (
    LinearConfig,
    NewtonConfig,
    NonlinearSolveError,
    TimeIntegrator,
    linear_solve,
    newton_solve,
    num_steps,
)
from dpfem.spaces import make_space


def test_linear_solve_small_system():
    A = np.array([[4.0, 1.0], [1.0, 3.0]])
    b = np.array([1.0, 2.0])
    x = linear_solve(A, b)
    np.testing.assert_allclose(x, [1.0 / 11.0, 7.0 / 11.0], rtol=1e-12)
    x = linear_solve(sp.csr_matrix(A), b)
    np.testing.assert_allclose(x, [1.0 / 11.0, 7.0 / 11.0], rtol=1e-12)


def test_linear_solve_zero_rhs():
    A = sp.identity(5, format="csr")
    np.testing.assert_array_equal(linear_solve(A, np.zeros(5)), np.zeros(5))


def test_linear_solve_spd_cg_path():
    # large SPD sparse system exercises the CG branch; verify the residual
    rng = np.random.default_rng(0)
    space = make_space(unit_square_mesh(8), "cfem")
    A = (mass_matrix(space) + operator_matrix(space)).tocsr()
    b = rng.standard_normal(A.shape[0])
    x = linear_solve(A, b, LinearConfig(rel_tol=1e-12))
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_linear_solve_indefinite_falls_back():
    A = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    x = linear_solve(A, np.array([3.0, 4.0]))
    np.testing.assert_allclose(x, [4.0, 3.0], rtol=1e-12)


def test_newton_scalar_cubic():
    # x + x^3 = 2 has the root x = 1
    residual = lambda x: x + x**3 - 2.0  # noqa: E731
    jacobian = lambda x: np.array([[1.0 + 3.0 * x[0] ** 2]])  # noqa: E731
    x, info = newton_solve(residual, jacobian, np.array([0.0]))
    assert x[0] == pytest.approx(1.0, abs=1e-10)
    assert info.converged
    assert info.iterations == len(info.residuals) - 1


def test_newton_quadratic_convergence_tail():
    residual = lambda x: x + x**3 - 2.0  # noqa: E731
    jacobian = lambda x: np.array([[1.0 + 3.0 * x[0] ** 2]])  # noqa: E731
    _, info = newton_solve(
        residual, jacobian, np.array([0.7]), NewtonConfig(abs_tol=1e-14, rel_tol=1e-14)
    )
    r = info.residuals
    # near the root each iteration at least halves (in fact squares) the error
    tail = [b / a for a, b in zip(r[1:-1], r[2:]) if a > 1e-12]
    assert all(ratio <= 0.5 for ratio in tail)


def test_newton_iteration_cap():
    # gradient-free flat residual cannot converge
    residual = lambda x: np.array([1.0 + x[0] ** 2])  # noqa: E731
    jacobian = lambda x: np.array([[2.0 * x[0]]])  # noqa: E731
    with pytest.raises(NonlinearSolveError):
        newton_solve(residual, jacobian, np.array([0.5]), NewtonConfig(max_iter=8))


def test_num_steps():
    assert num_steps(1.0, 0.01) == 100
    assert num_steps(1.0, 0.1) == 10
    assert num_steps(0.2, 0.01) == 20
    with pytest.raises(ValueError):
        num_steps(1.0, 0.03)
    with pytest.raises(ValueError):
        num_steps(1.0, -0.1)


def _integrator(kind="cfem", p=2.0, forcing=None, n=3, **kw):
    space = make_space(unit_square_mesh(n), kind)
    reaction = ReactionSpec(alpha=1.0, p=p)
    gamma = 10.0 if kind == "dg" else None
    return space, TimeIntegrator(space, reaction, nu=1.0, forcing=forcing, gamma=gamma, **kw)


def test_single_step_matches_hand_solve():
    # linear reaction (p = 2): one BE step solves
    # (M/dt + K + M) u1 = M u0 / dt on the free dofs
    space, integ = _integrator(p=2.0)
    rng = np.random.default_rng(4)
    u0 = rng.standard_normal(space.ndofs)
    u0[space.boundary_dofs] = 0.0
    dt = 0.5
    _, states = integ.run(u0, T=dt, dt=dt)
    assert len(states) == 2

    free = space.free_dofs
    M = mass_matrix(space)
    K = operator_matrix(space)
    A = (M / dt + K + M)[free][:, free].toarray()
    rhs = (M @ u0)[free] / dt
    expect = np.linalg.solve(A, rhs)
    np.testing.assert_allclose(states[1].coeffs[free], expect, atol=1e-9)
    # Dirichlet rows stay pinned
    np.testing.assert_array_equal(states[1].coeffs[space.boundary_dofs], 0.0)


def test_linear_problem_converges_in_one_newton_iteration():
    space, integ = _integrator(p=2.0)
    u0 = np.zeros(space.ndofs)
    u0[space.free_dofs] = 1.0
    _, states = integ.run(u0, T=0.3, dt=0.1)
    assert all(s.newton_iterations == 1 for s in states[1:])


def test_step_zero_state_carries_initial_data():
    space, integ = _integrator(p=4.0)
    rng = np.random.default_rng(9)
    u0 = rng.standard_normal(space.ndofs)
    u0[space.boundary_dofs] = 0.0
    seen = []
    integ.run(u0, T=0.2, dt=0.1, observers=(seen.append,))
    assert seen[0].step == 0 and seen[0].time == 0.0
    np.testing.assert_array_equal(seen[0].coeffs, u0)
    assert [s.step for s in seen] == [0, 1, 2]
    np.testing.assert_allclose([s.time for s in seen], [0.0, 0.1, 0.2], atol=1e-14)


def test_run_is_deterministic():
    space, integ = _integrator(kind="dg", p=5.0, forcing=lambda X, t: np.sin(X[:, 0] + t))
    u0 = np.zeros(space.ndofs)
    final1, _ = integ.run(u0, T=0.2, dt=0.05)
    final2, _ = integ.run(u0, T=0.2, dt=0.05)
    np.testing.assert_array_equal(final1, final2)


def test_forcing_average_constant_in_time():
    # f(x, t) = f(x): the interval mean equals the pointwise load, so one BE
    # step of the p=2 problem with u0=0 solves (M/dt + K + M) u1 = b
    space = make_space(unit_square_mesh(3), "cfem")
    f = lambda X, t: np.ones(X.shape[0])  # noqa: E731
    integ = TimeIntegrator(space, ReactionSpec(alpha=1.0, p=2.0), nu=1.0, forcing=f)
    dt = 0.25
    _, states = integ.run(np.zeros(space.ndofs), T=dt, dt=dt)
    from dpfem.assembly import load_vector

    free = space.free_dofs
    M = mass_matrix(space)
    K = operator_matrix(space)
    A = (M / dt + K + M)[free][:, free].toarray()
    b = load_vector(space, lambda X: np.ones(X.shape[0]), integ.quad_degree)[free]
    np.testing.assert_allclose(states[1].coeffs[free], np.linalg.solve(A, b), atol=1e-9)
    assert states[1].load_l2 == pytest.approx(1.0, rel=1e-12)


def test_decay_toward_zero_without_forcing():
    # free heat flow with damping: the solution norm decays monotonically
    space, integ = _integrator(p=4.0, n=4)
    rng = np.random.default_rng(1)
    u0 = rng.standard_normal(space.ndofs)
    u0[space.boundary_dofs] = 0.0
    M = mass_matrix(space)
    _, states = integ.run(u0, T=0.5, dt=0.1)
    norms = [np.sqrt(s.coeffs @ (M @ s.coeffs)) for s in states]
    assert all(b < a for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 0.05 * norms[0]
