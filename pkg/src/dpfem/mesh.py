"""Structured simplicial meshes of the unit square and unit cube.

The unit square with n subdivisions per side is split into 2*n*n triangles
(each grid cell cut along the diagonal from its lower-left to its upper-right
corner).  The unit cube is split into 6*n**3 tetrahedra by the Kuhn
subdivision: each grid cube is cut into the six path simplices sharing the
main diagonal, one per permutation of the axes.

Vertices are numbered lexicographically in (x, y[, z]) with x major; cells
row-major over grid cells, sub-simplices in a fixed local order.  This makes
point location O(1): the grid cell is found by flooring, the sub-simplex by
comparing (2D) or sorting (3D) the local coordinates.  A point lying on a
shared facet is assigned to the adjacent cell with the lowest index.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

#: Tolerance for locating points relative to the domain boundary.
_LOCATE_TOL = 1e-12

# Axis permutations of the Kuhn subdivision in lexicographic order; the local
# tetrahedron index inside a grid cube is the rank of its permutation.
_KUHN_PERMS = tuple(itertools.permutations(range(3)))


@dataclass
class SimplexMesh:
    """A simplicial mesh of the unit square or cube.

    Attributes
    ----------
    dim : int
        Spatial dimension (2 or 3).
    n : int
        Number of grid subdivisions per side.
    vertices : ndarray, shape (nv, dim)
    cells : ndarray, shape (nc, dim + 1)
        Vertex indices per cell, positively oriented.
    cell_measures : ndarray, shape (nc,)
    cell_grads : ndarray, shape (nc, dim + 1, dim)
        Gradients of the barycentric coordinate functions.
    cell_bary_offsets : ndarray, shape (nc, dim + 1)
        Constant parts: lambda_i(x) = offset_i + grad_i . x.
    facets : ndarray, shape (nf, dim)
        Vertex indices per facet, sorted ascending.
    facet_cells : ndarray, shape (nf, 2)
        Adjacent cell indices (second entry -1 on the boundary); the first
        adjacent cell is the one with the lower index.
    facet_local : ndarray, shape (nf, 2)
        Local index of the opposite vertex within each adjacent cell.
    facet_normals : ndarray, shape (nf, dim)
        Unit normals pointing out of the first adjacent cell.
    facet_measures, facet_diameters : ndarray, shape (nf,)
    cell_facets : ndarray, shape (nc, dim + 1)
        Facet opposite each local vertex.
    """

    dim: int
    n: int
    vertices: np.ndarray
    cells: np.ndarray
    cell_measures: np.ndarray = field(repr=False, default=None)
    cell_grads: np.ndarray = field(repr=False, default=None)
    cell_bary_offsets: np.ndarray = field(repr=False, default=None)
    facets: np.ndarray = field(repr=False, default=None)
    facet_cells: np.ndarray = field(repr=False, default=None)
    facet_local: np.ndarray = field(repr=False, default=None)
    facet_normals: np.ndarray = field(repr=False, default=None)
    facet_measures: np.ndarray = field(repr=False, default=None)
    facet_diameters: np.ndarray = field(repr=False, default=None)
    cell_facets: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        self._build_geometry()
        self._build_facets()

    # ------------------------------------------------------------------
    # construction helpers
    # ------------------------------------------------------------------

    def _build_geometry(self):
        nv = self.cells.shape[1]
        verts = self.vertices[self.cells]  # (nc, d+1, d)
        T = np.concatenate([np.ones(verts.shape[:2] + (1,)), verts], axis=2)
        Tinv = np.linalg.inv(T)  # rows of Tinv.T are the barycentric affine maps
        M = np.transpose(Tinv, (0, 2, 1))  # (nc, d+1, d+1); lambda_i = M[:, i, 0] + M[:, i, 1:].x
        self.cell_bary_offsets = np.ascontiguousarray(M[:, :, 0])
        self.cell_grads = np.ascontiguousarray(M[:, :, 1:])
        det = np.linalg.det(T)
        fact = {2: 2.0, 3: 6.0}[self.dim]
        self.cell_measures = det / fact
        if np.any(det <= 0):
            raise ValueError("mesh contains non-positively oriented cells")

    def _build_facets(self):
        d = self.dim
        nc = self.cells.shape[0]
        nloc = d + 1
        # local facet i = all cell vertices except local vertex i
        keep = np.array([[j for j in range(nloc) if j != i] for i in range(nloc)])
        all_facets = np.sort(self.cells[:, keep], axis=2).reshape(nc * nloc, d)
        facets, inverse = np.unique(all_facets, axis=0, return_inverse=True)
        nf = facets.shape[0]
        self.facets = facets
        self.cell_facets = inverse.reshape(nc, nloc)

        # adjacency: for each facet, the (cell, local) pairs that produced it
        cell_ids = np.repeat(np.arange(nc), nloc)
        local_ids = np.tile(np.arange(nloc), nc)
        order = np.lexsort((cell_ids, inverse))
        inv_sorted = inverse[order]
        first = np.searchsorted(inv_sorted, np.arange(nf), side="left")
        counts = np.bincount(inv_sorted, minlength=nf)
        facet_cells = np.full((nf, 2), -1, dtype=np.int64)
        facet_local = np.full((nf, 2), -1, dtype=np.int64)
        facet_cells[:, 0] = cell_ids[order][first]
        facet_local[:, 0] = local_ids[order][first]
        two = counts == 2
        facet_cells[two, 1] = cell_ids[order][first[two] + 1]
        facet_local[two, 1] = local_ids[order][first[two] + 1]
        self.facet_cells = facet_cells
        self.facet_local = facet_local

        # outward normal of the first adjacent cell: opposite barycentric
        # gradient points inward, so flip and normalize
        g = self.cell_grads[facet_cells[:, 0], facet_local[:, 0]]
        norms = np.linalg.norm(g, axis=1)
        self.facet_normals = -g / norms[:, None]

        fverts = self.vertices[facets]  # (nf, d, dim)
        if d == 2:
            edge = fverts[:, 1] - fverts[:, 0]
            length = np.linalg.norm(edge, axis=1)
            self.facet_measures = length
            self.facet_diameters = length
        else:
            e1 = fverts[:, 1] - fverts[:, 0]
            e2 = fverts[:, 2] - fverts[:, 0]
            self.facet_measures = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)
            e3 = fverts[:, 2] - fverts[:, 1]
            self.facet_diameters = np.maximum(
                np.linalg.norm(e1, axis=1),
                np.maximum(np.linalg.norm(e2, axis=1), np.linalg.norm(e3, axis=1)),
            )

    # ------------------------------------------------------------------
    # queries
    # ------------------------------------------------------------------

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def num_facets(self) -> int:
        return self.facets.shape[0]

    @property
    def h(self) -> float:
        """Mesh size: the largest cell diameter."""
        verts = self.vertices[self.cells]
        dmax = 0.0
        nloc = self.dim + 1
        for i in range(nloc):
            for j in range(i + 1, nloc):
                dmax = max(dmax, float(np.linalg.norm(verts[:, i] - verts[:, j], axis=1).max()))
        return dmax

    @property
    def interior_facets(self) -> np.ndarray:
        return np.nonzero(self.facet_cells[:, 1] >= 0)[0]

    @property
    def boundary_facets(self) -> np.ndarray:
        return np.nonzero(self.facet_cells[:, 1] < 0)[0]

    @property
    def boundary_vertices(self) -> np.ndarray:
        on = np.any((self.vertices <= 0.0) | (self.vertices >= 1.0), axis=1)
        return np.nonzero(on)[0]

    def cell_barycenters(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Find the cell containing each point and its barycentric coordinates.

        Points on shared facets are assigned to the lowest-index adjacent
        cell.  Raises ValueError for points outside the closed unit box
        (beyond a small tolerance).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}")
        if np.any(pts < -_LOCATE_TOL) or np.any(pts > 1.0 + _LOCATE_TOL):
            raise ValueError("point outside the unit domain")
        n = self.n
        scaled = np.clip(pts, 0.0, 1.0) * n
        idx = np.minimum(scaled.astype(np.int64), n - 1)
        # a point exactly on a grid plane belongs to the lower-index slab
        on_plane = (scaled == idx) & (idx > 0)
        idx = idx - on_plane
        local = scaled - idx

        if self.dim == 2:
            grid = idx[:, 0] * n + idx[:, 1]
            upper = local[:, 1] > local[:, 0]  # ties go to the lower triangle
            cells = 2 * grid + upper
        else:
            grid = (idx[:, 0] * n + idx[:, 1]) * n + idx[:, 2]
            # stable descending sort: ties resolve to the lexicographically
            # smallest permutation, hence the lowest local tet index
            perm = np.argsort(-local, axis=1, kind="stable")
            rank = 2 * perm[:, 0] + (perm[:, 1] > perm[:, 2])
            cells = 6 * grid + rank

        bary = self.cell_bary_offsets[cells] + np.einsum(
            "cid,cd->ci", self.cell_grads[cells], pts
        )
        return cells, bary


def unit_square_mesh(n: int) -> SimplexMesh:
    """Structured triangulation of (0,1)^2 with 2*n*n cells."""
    if n < 1:
        raise ValueError("n must be >= 1")
    coords = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(coords, coords, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    ix, iy = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ix, iy = ix.ravel(), iy.ravel()
    a = ix * (n + 1) + iy
    b = (ix + 1) * (n + 1) + iy
    c = (ix + 1) * (n + 1) + (iy + 1)
    d = ix * (n + 1) + (iy + 1)
    lower = np.column_stack([a, b, c])
    upper = np.column_stack([a, c, d])
    cells = np.empty((2 * n * n, 3), dtype=np.int64)
    cells[0::2] = lower
    cells[1::2] = upper
    return SimplexMesh(dim=2, n=n, vertices=vertices, cells=cells)


def unit_cube_mesh(n: int) -> SimplexMesh:
    """Kuhn triangulation of (0,1)^3 with 6*n**3 cells."""
    if n < 1:
        raise ValueError("n must be >= 1")
    coords = np.linspace(0.0, 1.0, n + 1)
    X, Y, Z = np.meshgrid(coords, coords, coords, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    ix, iy, iz = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    base = np.stack([ix.ravel(), iy.ravel(), iz.ravel()], axis=1)  # (ncube, 3)
    ncube = base.shape[0]
    cells = np.empty((6 * ncube, 4), dtype=np.int64)
    eye = np.eye(3, dtype=np.int64)
    for t, perm in enumerate(_KUHN_PERMS):
        v0 = base
        v1 = v0 + eye[perm[0]]
        v2 = v1 + eye[perm[1]]
        v3 = v2 + eye[perm[2]]
        quad = [vid(v[:, 0], v[:, 1], v[:, 2]) for v in (v0, v1, v2, v3)]
        # odd permutations give negative orientation; swap the last two
        parity = _perm_parity(perm)
        if parity < 0:
            quad = [quad[0], quad[1], quad[3], quad[2]]
        cells[t::6] = np.column_stack(quad)
    return SimplexMesh(dim=3, n=n, vertices=vertices, cells=cells)


def _perm_parity(perm) -> int:
    inversions = sum(
        1 for i in range(len(perm)) for j in range(i + 1, len(perm)) if perm[i] > perm[j]
    )
    return -1 if inversions % 2 else 1
