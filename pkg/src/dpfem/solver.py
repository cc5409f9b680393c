"""Linear solves, damped Newton iteration, and backward Euler time stepping.

The fully discrete scheme per step is

    (u^k - u^{k-1}, chi)/dt + nu*a_h(u^k, chi) + (phi(u^k), chi) = (f^k, chi)

for all chi in the (free part of the) discrete space, where f^k is the mean
of the forcing over (t_{k-1}, t_k] and a_h is the scheme's diffusion form.
Each step is solved by Newton's method with backtracking; the linear systems
are solved by preconditioned CG with a sparse-direct fallback.  The constant
part M/dt + nu*A_h is factorized once per run and reused as preconditioner —
the reaction Jacobian only perturbs it weakly at the time steps of interest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import solve as dense_solve

from dpfem.assembly import LoadAssembler, mass_matrix, operator_matrix
from dpfem.nonlinear import ReactionOperator, ReactionSpec
from dpfem.quadrature import interval_average
from dpfem.spaces import FunctionSpace

#: Relative tolerance on |N*dt - T| before the step count is rejected.
_STEP_MISMATCH_TOL = 1e-9


@dataclass(frozen=True)
class LinearConfig:
    rel_tol: float = 1e-12
    max_iter: int = 500
    dense_limit: int = 2000


@dataclass(frozen=True)
class NewtonConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_iter: int = 50
    backtrack_factor: float = 0.5
    max_backtracks: int = 20


class NonlinearSolveError(RuntimeError):
    pass


def _direct_solve(A, b: np.ndarray, dense_limit: int) -> np.ndarray:
    n = b.size
    if sp.issparse(A):
        if n <= dense_limit:
            return dense_solve(A.toarray(), b, assume_a="sym")
        try:
            return spla.splu(A.tocsc()).solve(b)
        except RuntimeError as exc:
            raise np.linalg.LinAlgError(f"sparse factorization failed: {exc}") from exc
    return dense_solve(np.asarray(A, dtype=float), b, assume_a="sym")


def linear_solve(A, b: np.ndarray, config: LinearConfig | None = None, prec=None) -> np.ndarray:
    """Solve the symmetric system A x = b to ||Ax - b|| <= rel_tol * ||b||.

    Preconditioned conjugate gradients (Jacobi by default, or the callable
    ``prec``); on breakdown or stagnation falls back to a direct symmetric
    factorization (dense below ``dense_limit`` unknowns, sparse LU above).
    """
    cfg = config or LinearConfig()
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    if prec is None:
        diag = np.asarray(A.diagonal(), dtype=float)
        if np.all(diag > 0):
            prec = lambda r: r / diag  # noqa: E731
        else:
            prec = lambda r: r  # noqa: E731

    x = np.zeros_like(b)
    r = b.copy()
    z = prec(r)
    p = z.copy()
    rz = float(r @ z)
    tol = cfg.rel_tol * bnorm
    best_true = np.inf
    for _ in range(cfg.max_iter):
        Ap = A @ p
        pAp = float(p @ Ap)
        if not np.isfinite(pAp) or pAp <= 0.0:
            return _direct_solve(A, b, cfg.dense_limit)  # breakdown: not SPD here
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        if np.linalg.norm(r) <= tol:
            # guard against drift of the recurrence residual
            true_r = b - A @ x
            true_norm = float(np.linalg.norm(true_r))
            if true_norm <= tol:
                return x
            if true_norm >= 0.9 * best_true:
                # The true residual has stopped improving: we are at the
                # round-off floor (eps * ||A|| * ||x|| scale), where a direct
                # factorization would land as well.  Accept the iterate
                # instead of burning max_iter and refactorizing.
                return x
            best_true = true_norm
            r = true_r
        z = prec(r)
        rz_new = float(r @ z)
        beta = rz_new / rz
        p = z + beta * p
        rz = rz_new
    return _direct_solve(A, b, cfg.dense_limit)


@dataclass
class NewtonInfo:
    iterations: int
    residuals: list[float] = field(default_factory=list)
    converged: bool = True


def newton_solve(
    residual,
    jacobian,
    u0: np.ndarray,
    config: NewtonConfig | None = None,
    linear: LinearConfig | None = None,
    prec=None,
) -> tuple[np.ndarray, NewtonInfo]:
    """Damped Newton iteration on residual(u) = 0.

    Converges when ||residual|| <= max(abs_tol, rel_tol * ||residual(u0)||).
    The step is halved (up to max_backtracks times) until the residual norm
    decreases.
    """
    cfg = config or NewtonConfig()
    u = np.array(u0, dtype=float)
    r = residual(u)
    rnorm = float(np.linalg.norm(r))
    info = NewtonInfo(iterations=0, residuals=[rnorm])
    tol = max(cfg.abs_tol, cfg.rel_tol * rnorm)

    while rnorm > tol:
        if info.iterations >= cfg.max_iter:
            raise NonlinearSolveError(
                f"Newton did not converge in {cfg.max_iter} iterations "
                f"(residual {rnorm:.3e}, tolerance {tol:.3e})"
            )
        delta = linear_solve(jacobian(u), -r, linear, prec)
        eta = 1.0
        for _ in range(cfg.max_backtracks + 1):
            u_try = u + eta * delta
            r_try = residual(u_try)
            rnorm_try = float(np.linalg.norm(r_try))
            if rnorm_try <= (1.0 - 1e-4 * eta) * rnorm or rnorm_try <= tol:
                break
            eta *= cfg.backtrack_factor
        else:
            raise NonlinearSolveError(
                f"line search failed after {cfg.max_backtracks} halvings "
                f"(residual {rnorm:.3e})"
            )
        u, r, rnorm = u_try, r_try, rnorm_try
        info.iterations += 1
        info.residuals.append(rnorm)
    return u, info


@dataclass(frozen=True)
class TimeState:
    """Immutable per-step snapshot handed to observers."""

    step: int
    time: float
    coeffs: np.ndarray
    newton_iterations: int
    newton_residuals: tuple
    load_l2: float


def num_steps(T: float, dt: float) -> int:
    """Number of steps N = round(T/dt); dt must divide T up to rounding."""
    if dt <= 0 or T <= 0:
        raise ValueError(f"need positive T and dt, got T={T}, dt={dt}")
    N = int(round(T / dt))
    if N < 1 or abs(N * dt - T) > _STEP_MISMATCH_TOL * T:
        raise ValueError(
            f"dt={dt} does not divide T={T}: N*dt - T = {N * dt - T:.3e} "
            f"exceeds {_STEP_MISMATCH_TOL:.0e}*T"
        )
    return N


class TimeIntegrator:
    """Backward Euler integrator for one scheme/space/reaction combination.

    Parameters
    ----------
    space : FunctionSpace
    reaction : ReactionSpec
    nu : float
        Diffusion coefficient.
    forcing : callable (points, t) -> values, or None for f = 0.
    gamma : float, optional
        SIPG penalty (required for the dg scheme).
    quad_degree : int, optional
        Volume quadrature degree for the reaction/load terms
        (default: ceil(p) + 2).
    time_quad_degree : int
        Gauss degree for the per-step forcing average f^k (default 5,
        i.e. three points).
    """

    def __init__(
        self,
        space: FunctionSpace,
        reaction: ReactionSpec,
        nu: float,
        forcing=None,
        gamma: float | None = None,
        quad_degree: int | None = None,
        time_quad_degree: int = 5,
        newton: NewtonConfig | None = None,
        linear: LinearConfig | None = None,
    ):
        self.space = space
        self.reaction = reaction
        self.nu = float(nu)
        self.forcing = forcing
        self.gamma = gamma
        self.time_quad_degree = time_quad_degree
        self.newton_config = newton or NewtonConfig()
        self.linear_config = linear or LinearConfig()

        degree = reaction.quad_degree if quad_degree is None else quad_degree
        self.quad_degree = degree
        self.mass = mass_matrix(space)
        self.diffusion = operator_matrix(space, gamma)
        self.reaction_op = ReactionOperator(space, reaction, degree)
        self.loads = LoadAssembler(space, degree)

        free = space.free_dofs
        self._free = free
        self._all_free = free.size == space.ndofs
        self._M_free = self.mass if self._all_free else self.mass[free][:, free]
        self._A_free = self.diffusion if self._all_free else self.diffusion[free][:, free]

    def _restrict(self, A: sp.csr_matrix) -> sp.csr_matrix:
        return A if self._all_free else A[self._free][:, self._free]

    def run(self, u0: np.ndarray, T: float, dt: float, observers=()) -> tuple[np.ndarray, list]:
        """Integrate from the initial coefficients to time T.

        Returns the final coefficient vector and the list of per-step
        ``TimeState`` snapshots (also passed to each observer as the run
        progresses, including a step-0 state for the initial data).
        """
        N = num_steps(T, dt)
        free = self._free
        u_full = np.array(u0, dtype=float)
        u_full[self.space.boundary_dofs] = 0.0

        A_lin = (self._M_free / dt + self.nu * self._A_free).tocsc()
        lu = spla.splu(A_lin)
        prec = lu.solve

        def full(v: np.ndarray) -> np.ndarray:
            if self._all_free:
                return v
            out = np.zeros(self.space.ndofs)
            out[free] = v
            return out

        states = []

        def emit(state: TimeState):
            states.append(state)
            for obs in observers:
                obs(state)

        emit(TimeState(0, 0.0, u_full.copy(), 0, (), 0.0))

        u = u_full[free].copy()
        for k in range(1, N + 1):
            t0, t1 = (k - 1) * dt, k * dt
            if self.forcing is None:
                load_free, fnorm = np.zeros(free.size), 0.0
            else:
                fbar = lambda X: interval_average(  # noqa: E731
                    lambda t: self.forcing(X, t), t0, t1, self.time_quad_degree
                )
                load, fnorm = self.loads.assemble_with_norm(fbar)
                load_free = load[free]
            rhs = load_free + (self._M_free @ u) / dt

            def residual(v: np.ndarray) -> np.ndarray:
                return (
                    (self._M_free @ v) / dt
                    + self.nu * (self._A_free @ v)
                    + self.reaction_op.residual(full(v))[free]
                    - rhs
                )

            def jacobian(v: np.ndarray) -> sp.csr_matrix:
                Jr = self._restrict(self.reaction_op.jacobian(full(v)))
                return A_lin + Jr

            u, info = newton_solve(
                residual, jacobian, u, self.newton_config, self.linear_config, prec
            )
            emit(
                TimeState(
                    k, t1, full(u).copy(), info.iterations, tuple(info.residuals), fnorm
                )
            )
        return full(u), states
