"""Function spaces: dof layout, basis evaluation, facet traces."""

from __future__ import annotations

import numpy as np
import pytest

from dpfem.mesh import unit_square_mesh
from dpfem.quadrature import facet_rule, simplex_rule
from dpfem.spaces import FunctionSpace, make_space


def _affine(X):
    return 2.0 * X[:, 0] + 3.0 * X[:, 1] + 1.0


AFFINE_GRAD = np.array([2.0, 3.0])


def test_dof_counts_square_n4():
    mesh = unit_square_mesh(4)
    cfem = make_space(mesh, "cfem")
    assert cfem.ndofs == 25
    assert cfem.free_dofs.size == 9

    ncfem = make_space(mesh, "ncfem")
    assert ncfem.ndofs == 56
    assert ncfem.free_dofs.size == 40

    dg = make_space(mesh, "dg")
    assert dg.ndofs == 96
    assert dg.free_dofs.size == 96
    assert dg.boundary_dofs.size == 0


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        make_space(unit_square_mesh(2), "p2")


@pytest.mark.parametrize("kind", ["cfem", "ncfem", "dg"])
def test_partition_of_unity(kind):
    space = make_space(unit_square_mesh(3), kind)
    bary = simplex_rule(2, 4).barycentric
    vals = space.tabulate(bary)
    np.testing.assert_allclose(vals.sum(axis=-1), 1.0, atol=1e-14)


@pytest.mark.parametrize("kind", ["cfem", "ncfem", "dg"])
def test_affine_reproduction(kind):
    space = make_space(unit_square_mesh(4), kind)
    coeffs = space.interpolate(_affine)
    rng = np.random.default_rng(3)
    pts = rng.uniform(0.1, 0.9, size=(50, 2))
    np.testing.assert_allclose(space.eval(coeffs, pts), _affine(pts), atol=1e-12)
    grads = space.eval_grad(coeffs, pts)
    np.testing.assert_allclose(grads, np.tile(AFFINE_GRAD, (len(pts), 1)), atol=1e-12)


def test_nodal_interpolation_points():
    mesh = unit_square_mesh(2)
    cfem = make_space(mesh, "cfem")
    np.testing.assert_array_equal(cfem.dof_points, mesh.vertices)
    ncfem = make_space(mesh, "ncfem")
    np.testing.assert_allclose(
        ncfem.dof_points, mesh.vertices[mesh.facets].mean(axis=1)
    )


def test_cr_vertex_value_identity():
    # CR basis at vertex j of a cell: 1 - d on the opposite dof, 1 elsewhere,
    # so the value is sum(c) - d * c_j.
    mesh = unit_square_mesh(3)
    space = make_space(mesh, "ncfem")
    rng = np.random.default_rng(11)
    coeffs = rng.standard_normal(space.ndofs)
    cell = 5
    c = coeffs[space.cell_dofs[cell]]
    for j in range(3):
        bary = np.zeros(3)
        bary[j] = 1.0
        val = space.tabulate(bary) @ c
        assert val == pytest.approx(c.sum() - 2.0 * c[j], rel=1e-12)


def test_conforming_traces_match():
    mesh = unit_square_mesh(4)
    space = make_space(mesh, "cfem")
    coeffs = np.random.default_rng(0).standard_normal(space.ndofs)
    fpts = facet_rule(1, 3).points
    inner = mesh.interior_facets
    plus, minus = space.facet_traces(coeffs, inner, fpts)
    assert plus.shape == (inner.size, fpts.shape[0])
    np.testing.assert_allclose(plus, minus, atol=1e-12)


def test_boundary_trace_minus_is_nan():
    mesh = unit_square_mesh(2)
    space = make_space(mesh, "dg")
    coeffs = np.arange(space.ndofs, dtype=float)
    fpts = facet_rule(1, 2).points
    bnd = mesh.boundary_facets
    plus, minus = space.facet_traces(coeffs, bnd, fpts)
    assert np.all(np.isfinite(plus))
    assert np.all(np.isnan(minus))


@pytest.mark.parametrize("kind", ["cfem", "ncfem", "dg"])
def test_traces_agree_with_eval(kind):
    # one-sided traces of a smooth represented field equal point evaluation
    mesh = unit_square_mesh(4)
    space = make_space(mesh, kind)
    coeffs = space.interpolate(_affine)
    fpts = facet_rule(1, 2).points
    inner = mesh.interior_facets
    plus, minus = space.facet_traces(coeffs, inner, fpts)
    # physical positions of the trace points along each facet
    ends = mesh.vertices[mesh.facets[inner]]  # (m, 2, dim)
    s = fpts[:, 0]
    phys = (1 - s)[None, :, None] * ends[:, :1, :] + s[None, :, None] * ends[:, 1:, :]
    expect = _affine(phys.reshape(-1, 2)).reshape(plus.shape)
    np.testing.assert_allclose(plus, expect, atol=1e-12)
    np.testing.assert_allclose(minus, expect, atol=1e-12)


def test_function_space_class_direct():
    mesh = unit_square_mesh(2)
    space = FunctionSpace(mesh, "dg")
    assert space.kind == "dg"
    assert space.cell_dofs.shape == (mesh.num_cells, 3)
