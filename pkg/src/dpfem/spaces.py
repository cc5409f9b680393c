"""Piecewise-linear finite element spaces: conforming P1, Crouzeix-Raviart, DG.

All three spaces share the cell-local structure "one basis function per local
vertex slot":

* ``cfem``   -- conforming P1, one dof per mesh vertex,
* ``ncfem``  -- Crouzeix-Raviart, one dof per facet (the basis function tied
  to the facet opposite local vertex i is 1 - dim * lambda_i),
* ``dg``     -- discontinuous P1, dim+1 independent dofs per cell.

Coefficient vectors are plain numpy arrays of length ``ndofs``.
"""

from __future__ import annotations

import numpy as np

from dpfem.mesh import SimplexMesh

SCHEMES = ("cfem", "ncfem", "dg")


class FunctionSpace:
    """Degrees of freedom and basis evaluation for one of the three schemes."""

    def __init__(self, mesh: SimplexMesh, kind: str):
        if kind not in SCHEMES:
            raise ValueError(f"unknown scheme {kind!r}; expected one of {SCHEMES}")
        self.mesh = mesh
        self.kind = kind
        d = mesh.dim
        nc = mesh.num_cells

        if kind == "cfem":
            self.ndofs = mesh.num_vertices
            self.cell_dofs = mesh.cells
            self.boundary_dofs = mesh.boundary_vertices
            self.dof_points = mesh.vertices
        elif kind == "ncfem":
            self.ndofs = mesh.num_facets
            self.cell_dofs = mesh.cell_facets
            self.boundary_dofs = mesh.boundary_facets
            self.dof_points = mesh.vertices[mesh.facets].mean(axis=1)
        else:
            self.ndofs = nc * (d + 1)
            self.cell_dofs = np.arange(nc * (d + 1), dtype=np.int64).reshape(nc, d + 1)
            self.boundary_dofs = np.empty(0, dtype=np.int64)
            self.dof_points = mesh.vertices[mesh.cells].reshape(-1, d)

        mask = np.ones(self.ndofs, dtype=bool)
        mask[self.boundary_dofs] = False
        self.free_dofs = np.nonzero(mask)[0]

        # constant per-cell basis gradients, shape (nc, d+1, d)
        scale = -float(d) if kind == "ncfem" else 1.0
        self.cell_basis_grads = scale * mesh.cell_grads
        self._side_perm = None

    # ------------------------------------------------------------------
    # basis evaluation
    # ------------------------------------------------------------------

    def tabulate(self, bary: np.ndarray) -> np.ndarray:
        """Basis values at reference points given barycentric coordinates.

        Parameters
        ----------
        bary : ndarray, shape (..., dim + 1)

        Returns
        -------
        ndarray of the same shape: values[..., i] is basis function i.
        """
        bary = np.asarray(bary, dtype=float)
        if self.kind == "ncfem":
            return 1.0 - self.mesh.dim * bary
        return bary

    def interpolate(self, g) -> np.ndarray:
        """Nodal interpolation: evaluate ``g`` at the dof points."""
        return np.asarray(g(self.dof_points), dtype=float)

    def eval(self, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Evaluate the field at arbitrary points (O(1) location per point)."""
        cells, bary = self.mesh.locate(points)
        vals = self.tabulate(bary)
        return np.einsum("pi,pi->p", coeffs[self.cell_dofs[cells]], vals)

    def eval_grad(self, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
        cells, _ = self.mesh.locate(points)
        return np.einsum(
            "pi,pid->pd", coeffs[self.cell_dofs[cells]], self.cell_basis_grads[cells]
        )

    # ------------------------------------------------------------------
    # facet traces
    # ------------------------------------------------------------------

    def _facet_side_perm(self) -> np.ndarray:
        """perm[f, s, k] = cell-local vertex index of facet vertex k on side s.

        Boundary facets have side 1 filled with -1.
        """
        if self._side_perm is None:
            mesh = self.mesh
            nf, d = mesh.num_facets, mesh.dim
            perm = np.full((nf, 2, d), -1, dtype=np.int64)
            for s in range(2):
                cells = mesh.facet_cells[:, s]
                valid = np.nonzero(cells >= 0)[0]
                cv = mesh.cells[cells[valid]]  # (m, d+1)
                fv = mesh.facets[valid]  # (m, d)
                eq = cv[:, None, :] == fv[:, :, None]  # (m, d, d+1)
                perm[valid, s] = np.argmax(eq, axis=2)
            self._side_perm = perm
        return self._side_perm

    def facet_basis_bary(self, facet_ids: np.ndarray, side: int, facet_points: np.ndarray) -> np.ndarray:
        """Volume barycentric coords of facet quad points, per adjacent cell.

        Parameters
        ----------
        facet_ids : ndarray (m,)
        side : 0 or 1
        facet_points : ndarray (nq, dim-1)
            Points in facet reference coordinates.

        Returns
        -------
        ndarray, shape (m, dim + 1, nq): entry [f, j, q] is the volume
        barycentric coordinate lambda_j at facet point q, as seen from the
        side's adjacent cell.
        """
        mesh = self.mesh
        d = mesh.dim
        fp = np.atleast_2d(facet_points)
        nq = fp.shape[0]
        mu = np.column_stack([1.0 - fp.sum(axis=1), fp])  # (nq, d)
        perm = self._facet_side_perm()[facet_ids, side]  # (m, d)
        if np.any(perm < 0):
            raise ValueError("requested traces on the missing side of a boundary facet")
        m = facet_ids.size
        out = np.zeros((m, d + 1, nq))
        rows = np.repeat(np.arange(m), d)
        out[rows, perm.ravel()] = np.repeat(mu.T[None, :, :], m, axis=0).reshape(m * d, nq)
        return out

    def facet_traces(
        self, coeffs: np.ndarray, facet_ids: np.ndarray, facet_points: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray | None]:
        """Field traces at facet points from each side.

        Returns (plus, minus) arrays of shape (m, nq); ``minus`` rows are NaN
        for boundary facets.
        """
        mesh = self.mesh
        facet_ids = np.asarray(facet_ids, dtype=np.int64)
        out = []
        for side in range(2):
            cells = mesh.facet_cells[facet_ids, side]
            valid = cells >= 0
            vals = np.full((facet_ids.size, np.atleast_2d(facet_points).shape[0]), np.nan)
            if np.any(valid):
                bary = self.facet_basis_bary(facet_ids[valid], side, facet_points)
                basis = self.tabulate(np.transpose(bary, (0, 2, 1)))  # (m, nq, d+1)
                vals[valid] = np.einsum(
                    "mi,mqi->mq", coeffs[self.cell_dofs[cells[valid]]], basis
                )
            out.append(vals)
        return out[0], out[1]


def make_space(mesh: SimplexMesh, kind: str) -> FunctionSpace:
    return FunctionSpace(mesh, kind)
