"""Projection/interpolation operators into the discrete spaces."""

from __future__ import annotations

import numpy as np
import pytest

from dpfem.analysis import field_l2_error
from dpfem.mesh import unit_cube_mesh, unit_square_mesh
from dpfem.projections import (
    avg_nodal_interpolate,
    cr_interpolate,
    l2_project,
    pi1_project,
    ritz_project,
    set_initial,
)
from dpfem.quadrature import facet_rule, simplex_rule
from dpfem.spaces import make_space


def _bubble(X):
    return np.sin(np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1])


def _bubble_grad(X):
    sx, cx = np.sin(np.pi * X[:, 0]), np.cos(np.pi * X[:, 0])
    sy, cy = np.sin(np.pi * X[:, 1]), np.cos(np.pi * X[:, 1])
    return np.pi * np.column_stack([cx * sy, sx * cy])


def _affine(X):
    return 0.5 * X[:, 0] - 1.5 * X[:, 1] + 2.0


def test_l2_project_reproduces_affine():
    space = make_space(unit_square_mesh(4), "cfem")
    coeffs = l2_project(space, _affine)
    np.testing.assert_allclose(coeffs, space.interpolate(_affine), atol=1e-11)


def test_pi1_reproduces_affine_and_is_locally_optimal():
    mesh = unit_square_mesh(3)
    space = make_space(mesh, "dg")
    coeffs = pi1_project(space, _affine)
    np.testing.assert_allclose(coeffs, space.interpolate(_affine), atol=1e-11)

    # residual of a curved target is L2-orthogonal to P1 on each cell
    coeffs = pi1_project(space, _bubble)
    rule = simplex_rule(2, 8)
    wq = rule.weights / rule.weights.sum()
    basis = space.tabulate(rule.barycentric)  # (nq, 3)
    verts = mesh.vertices[mesh.cells]
    pts = np.einsum("qi,cid->cqd", rule.barycentric, verts)
    vals = _bubble(pts.reshape(-1, 2)).reshape(pts.shape[:2])
    proj = np.einsum("ci,qi->cq", coeffs[space.cell_dofs], basis)
    resid = vals - proj
    orth = np.einsum("cq,qi,q->ci", resid, basis, wq)
    np.testing.assert_allclose(orth, 0.0, atol=1e-13)


def test_cr_interpolation_preserves_facet_means():
    mesh = unit_square_mesh(4)
    space = make_space(mesh, "ncfem")
    coeffs = cr_interpolate(space, _bubble)
    rule = facet_rule(1, 5)
    inner = mesh.interior_facets
    plus, _ = space.facet_traces(coeffs, inner, rule.points)

    ends = mesh.vertices[mesh.facets[inner]]
    s = rule.points[:, 0]
    pts = (1 - s)[None, :, None] * ends[:, :1, :] + s[None, :, None] * ends[:, 1:, :]
    gvals = _bubble(pts.reshape(-1, 2)).reshape(plus.shape)
    np.testing.assert_allclose(plus @ rule.weights, gvals @ rule.weights, atol=1e-12)
    # boundary dofs forced to zero
    np.testing.assert_array_equal(coeffs[mesh.boundary_facets], 0.0)


def test_cr_reproduces_affine_in_interior():
    # boundary dofs are clamped, so compare on an interior cell patch
    mesh = unit_square_mesh(4)
    space = make_space(mesh, "ncfem")
    zero_trace = lambda X: X[:, 0] - 0.5  # noqa: E731  (affine, not zero on bdry)
    coeffs = cr_interpolate(space, zero_trace)
    inner = mesh.interior_facets
    mids = space.dof_points[inner]
    np.testing.assert_allclose(coeffs[inner], zero_trace(mids), atol=1e-12)


def test_ritz_galerkin_orthogonality():
    from dpfem.assembly import stiffness_matrix
    from dpfem.assembly import load_vector  # noqa: F401  (same quadrature path)

    space = make_space(unit_square_mesh(4), "cfem")
    coeffs = ritz_project(space, _bubble, _bubble_grad)
    np.testing.assert_array_equal(coeffs[space.boundary_dofs], 0.0)

    # stiffness residual against the gradient load on the free dofs
    K = stiffness_matrix(space)
    rule = simplex_rule(2, 8)
    wq = rule.weights / rule.weights.sum()
    mesh = space.mesh
    verts = mesh.vertices[mesh.cells]
    pts = np.einsum("qi,cid->cqd", rule.barycentric, verts)
    grads = _bubble_grad(pts.reshape(-1, 2)).reshape(pts.shape[:2] + (2,))
    cellw = mesh.cell_measures[:, None] * wq[None, :]
    loc = np.einsum("cqd,cid,cq->ci", grads, space.cell_basis_grads, cellw)
    b = np.bincount(space.cell_dofs.ravel(), weights=loc.ravel(), minlength=space.ndofs)
    resid = (K @ coeffs - b)[space.free_dofs]
    assert np.linalg.norm(resid) <= 1e-10


def test_avg_nodal_second_order_refinement():
    errs = []
    for n in (8, 16):
        space = make_space(unit_square_mesh(n), "cfem")
        coeffs = avg_nodal_interpolate(space, _bubble)
        errs.append(field_l2_error(space, coeffs, _bubble))
    ratio = errs[0] / errs[1]
    assert 3.6 <= ratio <= 4.4


def test_avg_nodal_affine_interior_vertices():
    mesh = unit_square_mesh(4)
    space = make_space(mesh, "cfem")
    g = lambda X: 3.0 * X[:, 0] - 2.0 * X[:, 1] + 0.25  # noqa: E731
    coeffs = avg_nodal_interpolate(space, g)
    free = space.free_dofs
    np.testing.assert_allclose(coeffs[free], g(mesh.vertices[free]), atol=1e-12)
    np.testing.assert_array_equal(coeffs[space.boundary_dofs], 0.0)


def test_set_initial_dispatch():
    mesh = unit_square_mesh(4)
    cfem = make_space(mesh, "cfem")
    got = set_initial(cfem, _bubble, p=5.0, u0_grad=_bubble_grad)
    np.testing.assert_array_equal(got, ritz_project(cfem, _bubble, _bubble_grad))
    with pytest.raises(ValueError):
        set_initial(cfem, _bubble, p=5.0)  # Ritz needs the gradient

    ncfem = make_space(mesh, "ncfem")
    np.testing.assert_array_equal(
        set_initial(ncfem, _bubble, p=5.0), cr_interpolate(ncfem, _bubble)
    )
    dg = make_space(mesh, "dg")
    np.testing.assert_array_equal(
        set_initial(dg, _bubble, p=5.0), pi1_project(dg, _bubble)
    )


def test_set_initial_supercritical_3d_avoids_gradient():
    # p = 11 > 2d/(d-2) = 6 in 3d: nodal averaging, no gradient required
    mesh3 = unit_cube_mesh(3)
    space = make_space(mesh3, "cfem")
    g = lambda X: X.prod(axis=1)  # noqa: E731
    got = set_initial(space, g, p=11.0)
    np.testing.assert_array_equal(got, avg_nodal_interpolate(space, g))


def test_projection_wrong_space_rejected():
    mesh = unit_square_mesh(2)
    with pytest.raises(ValueError):
        pi1_project(make_space(mesh, "cfem"), _bubble)
    with pytest.raises(ValueError):
        cr_interpolate(make_space(mesh, "dg"), _bubble)
    with pytest.raises(ValueError):
        avg_nodal_interpolate(make_space(mesh, "ncfem"), _bubble)
