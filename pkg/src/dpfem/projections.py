"""Initial-data maps: projections and quasi-interpolants onto the spaces.

Each scheme gets the initial datum through the operator its error analysis
assumes:

* conforming P1: Ritz (elliptic) projection while the growth exponent stays
  subcritical, otherwise a facet-averaged nodal quasi-interpolant that is
  stable without extra regularity;
* nonconforming P1: facet-mean interpolation (exact on the Crouzeix-Raviart
  degrees of freedom);
* discontinuous P1: elementwise L2 projection.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse.linalg as spla

from dpfem.assembly import LoadAssembler, mass_matrix, stiffness_matrix
from dpfem.quadrature import facet_rule, simplex_rule
from dpfem.solver import linear_solve
from dpfem.spaces import FunctionSpace

_BOUNDARY_TRACE_TOL = 1e-10


def _volume_points(space: FunctionSpace, quad_degree: int):
    """(rule weights normalized to mean, physical points (nc, nq, dim))."""
    mesh = space.mesh
    rule = simplex_rule(mesh.dim, quad_degree)
    wq = rule.weights / rule.weights.sum()
    pts = np.einsum("qi,cid->cqd", rule.barycentric, mesh.vertices[mesh.cells])
    return rule, wq, pts


def _facet_points(mesh, facet_ids: np.ndarray, quad_degree: int):
    """(facet rule, physical points (m, nq, dim)) on the given facets."""
    rule = facet_rule(mesh.dim - 1, quad_degree)
    mu = np.column_stack([1.0 - rule.points.sum(axis=1), rule.points])
    fverts = mesh.vertices[mesh.facets[facet_ids]]
    return rule, mu, np.einsum("qk,mkd->mqd", mu, fverts)


def l2_project(space: FunctionSpace, g, quad_degree: int = 8) -> np.ndarray:
    """Global L2 projection: solve (u_h, v) = (g, v) for all v."""
    M = mass_matrix(space)
    b = LoadAssembler(space, quad_degree).assemble(g)
    return linear_solve(M, b)


def ritz_project(space: FunctionSpace, g, grad_g, quad_degree: int = 8) -> np.ndarray:
    """Elliptic projection onto the conforming space with zero trace.

    Solves (grad u_h, grad v) = (grad g, grad v) for all free v.  The datum
    must vanish on the boundary: a nonzero trace (sampled at facet
    quadrature points) raises ValueError.
    """
    if space.kind != "cfem":
        raise ValueError("the Ritz projection is only set up for the conforming space")
    mesh = space.mesh
    _, mu, bpts = _facet_points(mesh, mesh.boundary_facets, 4)
    bvals = np.asarray(g(bpts.reshape(-1, mesh.dim)), dtype=float)
    worst = float(np.max(np.abs(bvals))) if bvals.size else 0.0
    if worst > _BOUNDARY_TRACE_TOL:
        raise ValueError(
            f"Ritz projection needs zero boundary trace; sampled |g| up to {worst:.3e}"
        )

    _, wq, pts = _volume_points(space, quad_degree)
    gg = np.asarray(grad_g(pts.reshape(-1, mesh.dim)), dtype=float).reshape(pts.shape)
    cell_int = np.einsum("cqd,q->cd", gg, wq) * mesh.cell_measures[:, None]
    local = np.einsum("cd,cid->ci", cell_int, space.cell_basis_grads)
    b = np.bincount(space.cell_dofs.ravel(), weights=local.ravel(), minlength=space.ndofs)

    free = space.free_dofs
    K = stiffness_matrix(space)
    K_ff = K[free][:, free].tocsc()
    prec = spla.splu(K_ff).solve
    coeffs = np.zeros(space.ndofs)
    coeffs[free] = linear_solve(K_ff.tocsr(), b[free], prec=prec)
    return coeffs


def pi1_project(space: FunctionSpace, g, quad_degree: int = 8) -> np.ndarray:
    """Elementwise L2 projection onto discontinuous P1."""
    if space.kind != "dg":
        raise ValueError("elementwise projection is only set up for the dg space")
    mesh = space.mesh
    rule, wq, pts = _volume_points(space, quad_degree)
    N = space.tabulate(rule.barycentric)  # (nq, nloc)
    B = np.einsum("qi,qj,q->ij", N, N, wq)  # local mass / |K|
    vals = np.asarray(g(pts.reshape(-1, mesh.dim)), dtype=float).reshape(pts.shape[:2])
    rhs = np.einsum("cq,q,qi->ci", vals, wq, N)
    local = np.linalg.solve(B, rhs.T).T  # (nc, nloc)
    coeffs = np.zeros(space.ndofs)
    coeffs[space.cell_dofs] = local
    return coeffs


def cr_interpolate(space: FunctionSpace, g, quad_degree: int = 5) -> np.ndarray:
    """Facet-mean interpolation onto the nonconforming space (boundary 0)."""
    if space.kind != "ncfem":
        raise ValueError("facet-mean interpolation is only set up for the ncfem space")
    mesh = space.mesh
    interior = mesh.interior_facets
    rule, _, pts = _facet_points(mesh, interior, quad_degree)
    vals = np.asarray(g(pts.reshape(-1, mesh.dim)), dtype=float).reshape(pts.shape[:2])
    coeffs = np.zeros(space.ndofs)
    coeffs[interior] = vals @ rule.weights  # weights sum to 1: facet means
    return coeffs


def avg_nodal_interpolate(space: FunctionSpace, g, quad_degree: int = 5) -> np.ndarray:
    """Facet-averaged nodal values on the conforming space (boundary 0).

    Each interior vertex takes the value of the dual-weighted average of
    ``g`` over one adjacent facet (the lowest-index one), i.e. the
    Scott-Zhang style functional int_sigma g psi_i with psi_i the L2(sigma)
    dual of the vertex hat function.  This reproduces affine functions, so
    nodal values of smooth zero-trace data are recovered to second order.
    """
    if space.kind != "cfem":
        raise ValueError("the averaged nodal interpolant targets the conforming space")
    mesh = space.mesh
    d = mesh.dim
    nf = mesh.num_facets
    vfacet = np.full(mesh.num_vertices, nf, dtype=np.int64)
    for k in range(d):
        np.minimum.at(vfacet, mesh.facets[:, k], np.arange(nf, dtype=np.int64))

    mask = np.ones(mesh.num_vertices, dtype=bool)
    mask[mesh.boundary_vertices] = False
    vi = np.nonzero(mask)[0]

    fids = vfacet[vi]
    fverts = mesh.facets[fids]  # (m, d)
    kpos = np.argmax(fverts == vi[:, None], axis=1)

    rule, mu, pts = _facet_points(mesh, fids, quad_degree)
    vals = np.asarray(g(pts.reshape(-1, d)), dtype=float).reshape(pts.shape[:2])
    # dual weights |sigma| * psi_k at the quadrature points, table (d, nq)
    dual = 6.0 * mu.T - 2.0 if d == 2 else 12.0 * mu.T - 3.0

    coeffs = np.zeros(space.ndofs)
    coeffs[vi] = np.einsum("mq,mq,q->m", vals, dual[kpos], rule.weights)
    return coeffs


def set_initial(space: FunctionSpace, u0, p: float, u0_grad=None, quad_degree: int = 8) -> np.ndarray:
    """Map the initial datum into the space by the scheme's standard operator.

    For the conforming scheme the Ritz projection is used while
    p <= 2d/(d-2) (always in d <= 2); beyond that growth the averaged nodal
    interpolant takes over and no gradient is needed.
    """
    if space.kind == "ncfem":
        return cr_interpolate(space, u0)
    if space.kind == "dg":
        return pi1_project(space, u0, quad_degree=quad_degree)
    d = space.mesh.dim
    subcritical = d <= 2 or p <= 2.0 * d / (d - 2.0)
    if subcritical:
        if u0_grad is None:
            raise ValueError("Ritz initial data needs the gradient of the datum")
        return ritz_project(space, u0, u0_grad, quad_degree=quad_degree)
    return avg_nodal_interpolate(space, u0)
