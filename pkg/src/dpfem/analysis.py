"""Error norms, energy functionals, and convergence-rate reporting.

The error reported by a refinement study is the discrete space-time norm

    error^2 = ||u(T) - u_h^N||_L2^2
            + nu * sum_{k=1..N} dt * ||grad_h(u(t_k) - u_h^k)||_L2^2
            (+ for dg: nu * sum_k dt * sum_E gamma/h_E * ||[u(t_k) - u_h^k]||_E^2)

where u is the exact solution (or a fine-mesh reference field).  Exact
solutions implement the small ``ExactSolution`` interface below; facet traces
receive enough context to evaluate one-sided limits of discontinuous
reference fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dpfem.assembly import FACET_QUAD_DEGREE, mass_matrix, operator_matrix, stiffness_matrix
from dpfem.nonlinear import ReactionOperator, ReactionSpec, stability_constant
from dpfem.quadrature import facet_rule, simplex_rule
from dpfem.spaces import FunctionSpace
from dpfem.solver import TimeState


@dataclass(frozen=True)
class FacetBatch:
    """Context for one-sided facet evaluations of an exact/reference field.

    Attributes
    ----------
    points : ndarray (npts, dim)
        Physical facet quadrature points (flattened over facets).
    facet_ids : ndarray (npts,)
        The mesh facet each point belongs to.
    side : int
        0 for the first adjacent cell, 1 for the second.
    toward : ndarray (npts, dim)
        Barycenter of the adjacent cell on this side: nudging each point
        toward it stays inside that cell.
    space : FunctionSpace
        The discrete space the error is measured against.
    """

    points: np.ndarray
    facet_ids: np.ndarray
    side: int
    toward: np.ndarray
    space: FunctionSpace


class ExactSolution:
    """Interface for fields that error norms compare against."""

    def value(self, X: np.ndarray, t: float) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, X: np.ndarray, t: float) -> np.ndarray:
        raise NotImplementedError

    def facet_trace(self, batch: FacetBatch, t: float) -> np.ndarray:
        """One-sided trace at facet points; continuous fields ignore the side."""
        return self.value(batch.points, t)


class SpaceTimeError:
    """Observer accumulating the space-time error of a trajectory.

    Feed it every ``TimeState`` of a run (it ignores step 0 for the time sum
    and evaluates the final-time L2 term at t = T), then read ``result()``.
    """

    def __init__(
        self,
        space: FunctionSpace,
        exact: ExactSolution,
        nu: float,
        dt: float,
        T: float,
        gamma: float | None = None,
        quad_degree: int = 8,
    ):
        self.space = space
        self.exact = exact
        self.nu = float(nu)
        self.dt = float(dt)
        self.T = float(T)
        self.gamma = gamma
        mesh = space.mesh
        rule = simplex_rule(mesh.dim, quad_degree)
        wq = rule.weights / rule.weights.sum()
        self._cell_w = mesh.cell_measures[:, None] * wq[None, :]
        verts = mesh.vertices[mesh.cells]
        self._points = np.einsum("qi,cid->cqd", rule.barycentric, verts)
        self._flat = self._points.reshape(-1, mesh.dim)
        self._basis = np.ascontiguousarray(space.tabulate(rule.barycentric).T)
        self._grad_acc = 0.0
        self._jump_acc = 0.0
        self._l2_final = None

        if space.kind == "dg":
            if gamma is None:
                raise ValueError("dg space-time error needs the penalty gamma")
            self._setup_facets()

    def _setup_facets(self):
        mesh = self.space.mesh
        rule = facet_rule(mesh.dim - 1, FACET_QUAD_DEGREE + 2)
        nq = rule.npoints
        self._facet_w = rule.weights
        self._sides = []
        barycenters = mesh.cell_barycenters()
        fverts = mesh.vertices[mesh.facets]  # (nf, d, dim)
        mu = np.column_stack([1.0 - rule.points.sum(axis=1), rule.points])  # (nq, d)
        pts = np.einsum("qk,fkd->fqd", mu, fverts)  # (nf, nq, dim)
        for side in (0, 1):
            ids = np.nonzero(mesh.facet_cells[:, side] >= 0)[0]
            cells = mesh.facet_cells[ids, side]
            bary = self.space.facet_basis_bary(ids, side, rule.points)
            basis = self.space.tabulate(np.transpose(bary, (0, 2, 1)))  # (m, nq, nloc)
            toward = np.repeat(barycenters[cells], nq, axis=0)
            batch = FacetBatch(
                points=pts[ids].reshape(-1, mesh.dim),
                facet_ids=np.repeat(ids, nq),
                side=side,
                toward=toward,
                space=self.space,
            )
            self._sides.append((ids, cells, basis, batch))
        self._facet_scale = self.gamma / mesh.facet_diameters * mesh.facet_measures

    def _jump_term(self, coeffs: np.ndarray, t: float) -> float:
        """sum_E gamma/h_E ||[u_exact - u_h]||_E^2 over all facets."""
        mesh = self.space.mesh
        nf = mesh.num_facets
        nq = self._facet_w.size
        jump = np.zeros((nf, nq))
        for side, (ids, cells, basis, batch) in enumerate(self._sides):
            uh = np.einsum("mi,mqi->mq", coeffs[self.space.cell_dofs[cells]], basis)
            uex = np.asarray(self.exact.facet_trace(batch, t), dtype=float).reshape(uh.shape)
            w = uex - uh
            jump[ids] += w if side == 0 else -w
        per_facet = (jump**2) @ self._facet_w
        return float(self._facet_scale @ per_facet)

    def on_step(self, state: TimeState):
        if state.step > 0:
            ge = self.exact.gradient(self._flat, state.time).reshape(
                self._points.shape
            )  # (nc, nq, d)
            gh = np.einsum(
                "ci,cid->cd", state.coeffs[self.space.cell_dofs], self.space.cell_basis_grads
            )
            diff = ge - gh[:, None, :]
            grad_sq = float(np.sum((diff**2).sum(axis=2) * self._cell_w))
            self._grad_acc += self.dt * grad_sq
            if self.space.kind == "dg":
                self._jump_acc += self.dt * self._jump_term(state.coeffs, state.time)
        if abs(state.time - self.T) <= 1e-9 * max(self.T, 1.0):
            ue = np.asarray(self.exact.value(self._flat, state.time), dtype=float).reshape(
                self._cell_w.shape
            )
            uh = state.coeffs[self.space.cell_dofs] @ self._basis
            self._l2_final = float(np.sum((ue - uh) ** 2 * self._cell_w))

    __call__ = on_step

    def result(self) -> float:
        if self._l2_final is None:
            raise RuntimeError("the trajectory never reached the final time T")
        return float(np.sqrt(self._l2_final + self.nu * (self._grad_acc + self._jump_acc)))


def space_time_error(space, states, exact, nu, dt, T, gamma=None, quad_degree=8) -> float:
    """Replay a finished trajectory through the error accumulator."""
    acc = SpaceTimeError(space, exact, nu, dt, T, gamma=gamma, quad_degree=quad_degree)
    for state in states:
        acc.on_step(state)
    return acc.result()


# ----------------------------------------------------------------------
# scalar functionals
# ----------------------------------------------------------------------


def l2_norm(space: FunctionSpace, fn, quad_degree: int = 10) -> float:
    """L2 norm over the mesh of a spatial callable."""
    mesh = space.mesh
    rule = simplex_rule(mesh.dim, quad_degree)
    wq = rule.weights / rule.weights.sum()
    cell_w = mesh.cell_measures[:, None] * wq[None, :]
    verts = mesh.vertices[mesh.cells]
    pts = np.einsum("qi,cid->cqd", rule.barycentric, verts).reshape(-1, mesh.dim)
    vals = np.asarray(fn(pts), dtype=float).reshape(cell_w.shape)
    return float(np.sqrt(np.sum(vals**2 * cell_w)))


def field_l2_error(space: FunctionSpace, coeffs, fn, quad_degree: int = 8) -> float:
    """L2 distance between a discrete field and a spatial callable."""
    mesh = space.mesh
    rule = simplex_rule(mesh.dim, quad_degree)
    wq = rule.weights / rule.weights.sum()
    cell_w = mesh.cell_measures[:, None] * wq[None, :]
    verts = mesh.vertices[mesh.cells]
    pts = np.einsum("qi,cid->cqd", rule.barycentric, verts).reshape(-1, mesh.dim)
    vals = np.asarray(fn(pts), dtype=float).reshape(cell_w.shape)
    basis = space.tabulate(rule.barycentric).T
    uh = coeffs[space.cell_dofs] @ basis
    return float(np.sqrt(np.sum((vals - uh) ** 2 * cell_w)))


def free_energy(
    space: FunctionSpace,
    coeffs: np.ndarray,
    reaction: ReactionSpec,
    nu: float,
    gamma: float | None = None,
    diffusion=None,
    reaction_op: ReactionOperator | None = None,
) -> float:
    """The discrete free energy (nu/2)*a_h(u,u) + int (alpha/p)|u|^p - sum (beta/q)|u|^q.

    Without ``gamma`` the quadratic part uses the broken gradient only; for
    the dg scheme pass ``gamma`` to include the SIPG facet terms, which is
    the functional that backward Euler actually dissipates.
    """
    if diffusion is None:
        diffusion = (
            operator_matrix(space, gamma)
            if (space.kind == "dg" and gamma is not None)
            else stiffness_matrix(space)
        )
    if reaction_op is None:
        reaction_op = ReactionOperator(space, reaction)
    quad = 0.5 * nu * float(coeffs @ (diffusion @ coeffs))
    return quad + reaction_op.energy(coeffs)


class StabilityAccumulator:
    """Checks the discrete energy stability bound along a run:

        nu * sum_k dt * ||grad_h u^k||^2
            <= (1/nu) * sum_k dt * ||f^k||^2 + ||u^0||^2 + 2 C* |Omega| T
    """

    def __init__(self, space: FunctionSpace, reaction: ReactionSpec, nu: float, dt: float):
        self.nu = float(nu)
        self.dt = float(dt)
        self.cstar = stability_constant(reaction)
        self._K = stiffness_matrix(space)
        self._M = mass_matrix(space)
        self._grad = 0.0
        self._force = 0.0
        self._u0_sq = None
        self._T = 0.0

    def on_step(self, state: TimeState):
        if state.step == 0:
            self._u0_sq = float(state.coeffs @ (self._M @ state.coeffs))
            return
        self._grad += self.dt * float(state.coeffs @ (self._K @ state.coeffs))
        self._force += self.dt * state.load_l2**2
        self._T = max(self._T, state.time)

    __call__ = on_step

    def bound(self) -> tuple[float, float]:
        """(left, right) sides of the stability inequality."""
        lhs = self.nu * self._grad
        rhs = self._force / self.nu + (self._u0_sq or 0.0) + 2.0 * self.cstar * self._T
        return lhs, rhs


# ----------------------------------------------------------------------
# convergence reporting
# ----------------------------------------------------------------------


def convergence_rates(hs, errors) -> list:
    """Observed orders log(e1/e2)/log(h1/h2); None for the first entry."""
    hs = [float(h) for h in hs]
    errors = [float(e) for e in errors]
    if len(hs) != len(errors):
        raise ValueError("hs and errors must have equal length")
    rates = [None]
    for i in range(1, len(hs)):
        rates.append(float(np.log(errors[i - 1] / errors[i]) / np.log(hs[i - 1] / hs[i])))
    return rates


@dataclass
class ConvergenceReport:
    """Per-grid errors and observed rates of one refinement study."""

    problem: str
    scheme: str
    grids: list = field(default_factory=list)
    hs: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    rates: list = field(default_factory=list)
    # (lhs, rhs) of the discrete stability bound for each grid's run
    stability: list = field(default_factory=list)

    @classmethod
    def from_errors(cls, problem, scheme, grids, hs, errors) -> "ConvergenceReport":
        return cls(
            problem=problem,
            scheme=scheme,
            grids=list(grids),
            hs=[float(h) for h in hs],
            errors=[float(e) for e in errors],
            rates=convergence_rates(hs, errors),
        )

    def rows(self) -> list[tuple]:
        return list(zip(self.grids, self.hs, self.errors, self.rates))

    def __str__(self) -> str:
        lines = [f"{self.problem} [{self.scheme}]", f"{'grid':>6} {'h':>12} {'error':>14} {'rate':>6}"]
        for g, h, e, r in self.rows():
            rate = "N/A" if r is None else f"{r:.2f}"
            lines.append(f"{g:>6} {h:>12.4e} {e:>14.6e} {rate:>6}")
        return "\n".join(lines)
