"""Assembly of mass, stiffness, interior-penalty facet matrices and loads.

Assembly is vectorized over cells (or facets): local blocks are built for all
entities at once with einsum and scattered through a single COO->CSR
conversion.  Local blocks of symmetric forms are symmetrized exactly, and the
assembled matrix is passed through ``0.5 * (A + A.T)`` so that symmetry holds
bit-for-bit.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from dpfem.quadrature import facet_rule, simplex_rule
from dpfem.spaces import FunctionSpace

#: Facet quadrature degree used for the (quadratic) SIPG trace products.
FACET_QUAD_DEGREE = 3


def _symmetrize(A: sp.spmatrix) -> sp.csr_matrix:
    return (0.5 * (A + A.T)).tocsr()


def _scatter(space: FunctionSpace, dofs: np.ndarray, local: np.ndarray) -> sp.csr_matrix:
    """Assemble local blocks local[e, i, j] at row/col dofs[e, i]/dofs[e, j]."""
    nloc = dofs.shape[1]
    rows = np.repeat(dofs, nloc, axis=1).ravel()
    cols = np.tile(dofs, (1, nloc)).ravel()
    n = space.ndofs
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def mass_matrix(space: FunctionSpace) -> sp.csr_matrix:
    """The L2 mass matrix (exact: products of linears, degree-2 rule)."""
    rule = simplex_rule(space.mesh.dim, 2)
    N = space.tabulate(rule.barycentric).T  # (nloc, nq)
    w = rule.weights / rule.weights.sum()
    B = (N * w) @ N.T
    B = 0.5 * (B + B.T)
    local = space.mesh.cell_measures[:, None, None] * B[None, :, :]
    return _symmetrize(_scatter(space, space.cell_dofs, local))


def stiffness_matrix(space: FunctionSpace) -> sp.csr_matrix:
    """The (broken) stiffness matrix: sum_K |K| grad(phi_i) . grad(phi_j)."""
    G = space.cell_basis_grads
    local = np.einsum("cid,cjd->cij", G, G)
    local = 0.5 * (local + local.transpose(0, 2, 1))
    local = space.mesh.cell_measures[:, None, None] * local
    return _symmetrize(_scatter(space, space.cell_dofs, local))


def _facet_blocks(space: FunctionSpace, facet_ids: np.ndarray, interior: bool):
    """Jump rows and averaged normal gradients for a batch of facets.

    Returns (dofs, J, An, wq) where, with nd = (1 or 2) * (dim + 1),
      dofs : (m, nd)       global dofs, side + then side -,
      J    : (m, nd, nq)   signed traces (the scalar jump coefficients),
      An   : (m, nd)       {grad phi} . n+, constant per facet,
      wq   : (nq,)         facet reference weights (summing to 1).
    """
    mesh = space.mesh
    rule = facet_rule(mesh.dim - 1, FACET_QUAD_DEGREE)
    sides = (0, 1) if interior else (0,)
    avg = 0.5 if interior else 1.0
    n_plus = mesh.facet_normals[facet_ids]

    dofs, traces, grads = [], [], []
    for s in sides:
        cells = mesh.facet_cells[facet_ids, s]
        dofs.append(space.cell_dofs[cells])
        bary = space.facet_basis_bary(facet_ids, s, rule.points)  # (m, nloc, nq)
        traces.append(space.tabulate(np.transpose(bary, (0, 2, 1))).transpose(0, 2, 1))
        G = space.cell_basis_grads[cells]  # (m, nloc, dim)
        grads.append(avg * np.einsum("mid,md->mi", G, n_plus))
    signs = [1.0, -1.0]
    J = np.concatenate([signs[s] * traces[k] for k, s in enumerate(sides)], axis=1)
    An = np.concatenate(grads, axis=1)
    return np.concatenate(dofs, axis=1), J, An, rule.weights


def dg_facet_matrices(space: FunctionSpace, gamma: float) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """SIPG facet terms for homogeneous Dirichlet data.

    Returns ``(F, P)`` where

        F = -sum_E int_E {grad u}.[v] + {grad v}.[u]  +  P,
        P =  sum_E (gamma / h_E) int_E [u][v],

    summed over interior and boundary facets (the exterior trace is zero on
    the boundary, so [u] = u n and {grad u} = grad u there).  The SIPG
    bilinear form is ``stiffness_matrix(space) + F``; the DG norm's jump part
    is ``P``.
    """
    if space.kind != "dg":
        raise ValueError("facet matrices are defined for the dg scheme")
    mesh = space.mesh
    n = space.ndofs
    F = sp.csr_matrix((n, n))
    P = sp.csr_matrix((n, n))
    for facet_ids, interior in (
        (mesh.interior_facets, True),
        (mesh.boundary_facets, False),
    ):
        if facet_ids.size == 0:
            continue
        dofs, J, An, wq = _facet_blocks(space, facet_ids, interior)
        meas = mesh.facet_measures[facet_ids]
        pen = gamma / mesh.facet_diameters[facet_ids] * meas

        Jbar = J @ wq  # (m, nd): mean jump of each basis function
        pen_local = np.einsum("m,maq,mbq,q->mab", meas, J, J, wq)
        pen_local = 0.5 * (pen_local + pen_local.transpose(0, 2, 1))
        cons = np.einsum("m,ma,mb->mab", meas, Jbar, An)
        local_F = -(cons + cons.transpose(0, 2, 1)) + (pen / meas)[:, None, None] * pen_local
        local_P = (pen / meas)[:, None, None] * pen_local
        F = F + _scatter(space, dofs, local_F)
        P = P + _scatter(space, dofs, local_P)
    return _symmetrize(F), _symmetrize(P)


def operator_matrix(space: FunctionSpace, gamma: float | None = None) -> sp.csr_matrix:
    """The scheme's diffusion form: stiffness plus SIPG facet terms for dg."""
    K = stiffness_matrix(space)
    if space.kind == "dg":
        if gamma is None:
            raise ValueError("the dg scheme requires a penalty parameter gamma")
        F, _ = dg_facet_matrices(space, gamma)
        K = _symmetrize(K + F)
    return K


class LoadAssembler:
    """Assembles (f, phi_i) for time-dependent loads, reusing geometry."""

    def __init__(self, space: FunctionSpace, quad_degree: int):
        mesh = space.mesh
        rule = simplex_rule(mesh.dim, quad_degree)
        self.space = space
        self._basis = np.ascontiguousarray(space.tabulate(rule.barycentric).T)  # (nloc, nq)
        wq = rule.weights / rule.weights.sum()
        self._cell_w = mesh.cell_measures[:, None] * wq[None, :]  # (nc, nq)
        verts = mesh.vertices[mesh.cells]  # (nc, nloc_geom, d)
        self._points = np.einsum("qi,cid->cqd", rule.barycentric, verts)  # (nc, nq, d)
        self._flat_points = self._points.reshape(-1, mesh.dim)

    def assemble(self, f) -> np.ndarray:
        """Load vector for a spatial function ``f`` (values at points)."""
        vec, _ = self.assemble_with_norm(f)
        return vec

    def assemble_with_norm(self, f) -> tuple[np.ndarray, float]:
        """Load vector and the L2 norm of ``f`` from the same evaluations."""
        fq = np.asarray(f(self._flat_points), dtype=float).reshape(self._cell_w.shape)
        fw = fq * self._cell_w
        local = fw @ self._basis.T  # (nc, nloc)
        vec = np.bincount(
            self.space.cell_dofs.ravel(), weights=local.ravel(), minlength=self.space.ndofs
        )
        norm = float(np.sqrt(np.sum(fw * fq)))
        return vec, norm


def load_vector(space: FunctionSpace, f, quad_degree: int) -> np.ndarray:
    return LoadAssembler(space, quad_degree).assemble(f)
