"""Numerical property checks behind the ``props`` CLI subcommand.

Fast invariants of the discretization, independent of any convergence
study: the discrete monotonicity bound of the damping term, agreement of
the reaction Jacobian with finite differences, Galerkin orthogonality and
gradient stability of the Ritz projection, symmetry / continuity /
coercivity of the interior-penalty form, facet-mean continuity of the
nonconforming interpolant, zero jumps of conforming fields seen through
the dg penalty, the discrete stability inequality along actual runs, and
monotone decay of the free energy for force-free, pumping-free runs.

Each check returns a :class:`PropResult`; :func:`run_all` runs the suite
and prints one ``[PASS]``/``[FAIL]`` line per check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dpfem.analysis import free_energy
from dpfem.assembly import dg_facet_matrices, operator_matrix, stiffness_matrix
from dpfem.mesh import unit_square_mesh
from dpfem.nonlinear import ReactionOperator, ReactionSpec, monotonicity_gap
from dpfem.projections import cr_interpolate, ritz_project, set_initial
from dpfem.quadrature import facet_rule, simplex_rule
from dpfem.solver import TimeIntegrator
from dpfem.spaces import make_space

#: Penalty used throughout the dg checks (same value as the dg studies).
GAMMA = 10.0

MONOTONE_EXPONENTS = (2.0, 3.0, 4.0, 5.0, 11.0)
NPAIRS = 1000


@dataclass
class PropResult:
    name: str
    ok: bool
    detail: str


# ----------------------------------------------------------------------
# small quadrature helpers (kept local: the checks should not trust the
# code paths they are checking more than necessary)
# ----------------------------------------------------------------------


def _volume_geometry(space, quad_degree):
    mesh = space.mesh
    rule = simplex_rule(mesh.dim, quad_degree)
    wq = rule.weights / rule.weights.sum()
    verts = mesh.vertices[mesh.cells]
    pts = np.einsum("qi,cid->cqd", rule.barycentric, verts)
    return wq, pts


def _grad_load(space, grad_g, quad_degree=8):
    """The vector b_i = (grad g, grad chi_i), same rule as the Ritz solve."""
    mesh = space.mesh
    wq, pts = _volume_geometry(space, quad_degree)
    gg = np.asarray(grad_g(pts.reshape(-1, mesh.dim)), dtype=float).reshape(pts.shape)
    cell_int = np.einsum("cqd,q->cd", gg, wq) * mesh.cell_measures[:, None]
    local = np.einsum("cd,cid->ci", cell_int, space.cell_basis_grads)
    return np.bincount(space.cell_dofs.ravel(), weights=local.ravel(), minlength=space.ndofs)


def _grad_norm_sq(space, grad_g, quad_degree=12):
    mesh = space.mesh
    wq, pts = _volume_geometry(space, quad_degree)
    gg = np.asarray(grad_g(pts.reshape(-1, mesh.dim)), dtype=float).reshape(pts.shape)
    dens = np.einsum("cqd,cqd->cq", gg, gg)
    return float(np.sum(dens * (mesh.cell_measures[:, None] * wq[None, :])))


def _smooth_panel():
    def s11(X):
        return np.sin(np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1])

    def s11_grad(X):
        x, y = X[:, 0], X[:, 1]
        return np.pi * np.stack(
            [np.cos(np.pi * x) * np.sin(np.pi * y), np.sin(np.pi * x) * np.cos(np.pi * y)],
            axis=-1,
        )

    def bump(X):
        x, y = X[:, 0], X[:, 1]
        return 16.0 * x * (1.0 - x) * y * (1.0 - y)

    def bump_grad(X):
        x, y = X[:, 0], X[:, 1]
        return 16.0 * np.stack(
            [(1.0 - 2.0 * x) * y * (1.0 - y), x * (1.0 - x) * (1.0 - 2.0 * y)], axis=-1
        )

    def s21(X):
        return np.sin(2.0 * np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1])

    def s21_grad(X):
        x, y = X[:, 0], X[:, 1]
        return np.stack(
            [
                2.0 * np.pi * np.cos(2.0 * np.pi * x) * np.sin(np.pi * y),
                np.pi * np.sin(2.0 * np.pi * x) * np.cos(np.pi * y),
            ],
            axis=-1,
        )

    return ((s11, s11_grad), (bump, bump_grad), (s21, s21_grad))


# ----------------------------------------------------------------------
# the checks
# ----------------------------------------------------------------------


def check_monotonicity(seed: int = 0) -> PropResult:
    """<b(u)-b(v), u-v> >= 2^(2-p) ||u-v||_p^p over random field pairs."""
    rng = np.random.default_rng(seed)
    space = make_space(unit_square_mesh(4), "cfem")
    worst = np.inf
    for p in MONOTONE_EXPONENTS:
        for _ in range(NPAIRS):
            u = rng.uniform(-2.0, 2.0, space.ndofs)
            v = rng.uniform(-2.0, 2.0, space.ndofs)
            lhs, rhs = monotonicity_gap(space, u, v, p)
            worst = min(worst, lhs - rhs + 1e-12 * (1.0 + abs(lhs)))
    exps = ",".join(f"{p:g}" for p in MONOTONE_EXPONENTS)
    return PropResult(
        "monotonicity of the damping term",
        worst >= 0.0,
        f"min slack {worst:.3e} over {NPAIRS} pairs x p in {{{exps}}}",
    )


def check_jacobian_fd(seed: int = 0) -> PropResult:
    """Directional forward difference of the reaction residual vs J(u) v."""
    rng = np.random.default_rng(seed)
    eps = 1e-6
    mesh = unit_square_mesh(8)
    specs = (
        ReactionSpec(alpha=1.0, p=5.0),
        ReactionSpec(alpha=1.0, p=5.0, pumping=((2.0, 3.0), (4.0, 4.0))),
    )
    worst = 0.0
    for kind in ("cfem", "ncfem", "dg"):
        space = make_space(mesh, kind)
        for spec in specs:
            op = ReactionOperator(space, spec)
            for _ in range(3):
                u = rng.uniform(-1.0, 1.0, space.ndofs)
                v = rng.uniform(-1.0, 1.0, space.ndofs)
                Jv = op.jacobian(u) @ v
                fd = (op.residual(u + eps * v) - op.residual(u)) / eps
                worst = max(worst, np.linalg.norm(fd - Jv) / np.linalg.norm(Jv))
    return PropResult(
        "reaction Jacobian vs finite differences",
        worst <= 1e-5,
        f"max relative deviation {worst:.3e} (tol 1e-05 at eps={eps:.0e})",
    )


def check_ritz(seed: int = 0) -> PropResult:
    """Galerkin orthogonality K c = b and gradient stability of the Ritz map."""
    worst_orth = 0.0
    worst_stab = -np.inf
    for n in (8, 16):
        space = make_space(unit_square_mesh(n), "cfem")
        K = stiffness_matrix(space)
        free = space.free_dofs
        for g, grad_g in _smooth_panel():
            c = ritz_project(space, g, grad_g)
            b = _grad_load(space, grad_g)
            worst_orth = max(worst_orth, float(np.linalg.norm((K @ c - b)[free])))
            stab = np.sqrt(float(c @ (K @ c))) - np.sqrt(_grad_norm_sq(space, grad_g))
            worst_stab = max(worst_stab, stab)
    ok = worst_orth <= 1e-10 and worst_stab <= 1e-10
    return PropResult(
        "Ritz projection orthogonality and stability",
        ok,
        f"max orthogonality residual {worst_orth:.3e}; "
        f"max ||grad R g|| - ||grad g|| = {worst_stab:.3e}",
    )


def check_dg_symmetry() -> PropResult:
    space = make_space(unit_square_mesh(8), "dg")
    A = operator_matrix(space, GAMMA)
    D = (A - A.T).tocoo()
    worst = float(np.max(np.abs(D.data))) if D.nnz else 0.0
    return PropResult(
        "interior-penalty form symmetry",
        worst == 0.0,
        f"max |A - A^T| = {worst:.1e}",
    )


def _dg_norm_matrix(space):
    _, P = dg_facet_matrices(space, GAMMA)
    return (stiffness_matrix(space) + P).tocsr()


def check_dg_continuity(seed: int = 0) -> PropResult:
    """|a(u,v)| <= (1 + gamma) |||u||| |||v||| over random pairs."""
    rng = np.random.default_rng(seed)
    space = make_space(unit_square_mesh(8), "dg")
    A = operator_matrix(space, GAMMA)
    N = _dg_norm_matrix(space)
    worst = 0.0
    for _ in range(NPAIRS):
        u = rng.standard_normal(space.ndofs)
        v = rng.standard_normal(space.ndofs)
        bound = (1.0 + GAMMA) * np.sqrt(float(u @ (N @ u)) * float(v @ (N @ v)))
        worst = max(worst, abs(float(u @ (A @ v))) / bound)
    return PropResult(
        "interior-penalty form continuity",
        worst <= 1.0 + 1e-12,
        f"max |a(u,v)| / ((1+gamma) |||u||| |||v|||) = {worst:.4f} over {NPAIRS} pairs",
    )


def check_dg_coercivity(seed: int = 0) -> PropResult:
    """Rayleigh quotients a(v,v) / |||v|||^2 stay above 0.25 at gamma = 10."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    for n in (4, 8):
        space = make_space(unit_square_mesh(n), "dg")
        A = operator_matrix(space, GAMMA)
        N = _dg_norm_matrix(space)
        for _ in range(NPAIRS):
            v = rng.standard_normal(space.ndofs)
            worst = min(worst, float(v @ (A @ v)) / float(v @ (N @ v)))
    return PropResult(
        "interior-penalty form coercivity",
        worst >= 0.25,
        f"min Rayleigh quotient {worst:.4f} at gamma={GAMMA:g}, n in {{4,8}} (threshold 0.25)",
    )


def check_cr_facet_means() -> PropResult:
    """Facet-mean jumps of the nonconforming interpolant vanish."""
    mesh = unit_square_mesh(8)
    space = make_space(mesh, "ncfem")

    def g(X):
        return np.sin(np.pi * X[:, 0]) * X[:, 1] * (1.0 - X[:, 1])

    coeffs = cr_interpolate(space, g)
    rule = facet_rule(mesh.dim - 1, 4)
    plus, minus = space.facet_traces(coeffs, mesh.interior_facets, rule.points)
    worst = float(np.max(np.abs((plus - minus) @ rule.weights)))
    return PropResult(
        "nonconforming facet-mean continuity",
        worst <= 1e-12,
        f"max facet-mean jump {worst:.3e} over {mesh.interior_facets.size} interior facets",
    )


def check_conforming_dg_jumps(seed: int = 0) -> PropResult:
    """Conforming H^1_0 fields seen through the dg penalty have zero jumps.

    Boundary facets penalize the trace against the zero exterior value, so
    the vertex data must vanish on the boundary for the jump energy to be
    exactly zero.
    """
    rng = np.random.default_rng(seed)
    mesh = unit_square_mesh(8)
    dg = make_space(mesh, "dg")
    _, P = dg_facet_matrices(dg, GAMMA)
    K = stiffness_matrix(dg)
    worst = 0.0
    for _ in range(20):
        vert_vals = rng.uniform(-1.0, 1.0, mesh.vertices.shape[0])
        vert_vals[mesh.boundary_vertices] = 0.0
        coeffs = vert_vals[mesh.cells].ravel()
        jump_energy = float(coeffs @ (P @ coeffs))
        scale = 1.0 + float(coeffs @ (K @ coeffs))
        worst = max(worst, jump_energy / scale)
    return PropResult(
        "conforming fields have zero dg jumps",
        worst <= 1e-14,
        f"max penalty energy / (1 + |v|_h^2) = {worst:.3e} over 20 conforming H^1_0 fields",
    )


def check_stability_bound() -> PropResult:
    """The a-priori gradient bound holds along actual backward Euler runs."""
    from dpfem.harness import run_single

    rows = []
    ok = True
    for problem in ("cfem_damped_2d", "ncfem_pumped_2d", "dg_damped_2d"):
        result = run_single(problem, 8)
        lhs, rhs = result.stability
        ok = ok and lhs <= rhs * (1.0 + 1e-12)
        rows.append(f"{problem}: {lhs:.3e} <= {rhs:.3e}")
    return PropResult("discrete stability inequality", ok, "; ".join(rows))


def check_energy_decay() -> PropResult:
    """Backward Euler dissipates the free energy when f = 0 and beta = 0."""
    reaction = ReactionSpec(alpha=1.0, p=4.0)

    def u0(X):
        return 2.0 * np.sin(np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1])

    def u0_grad(X):
        x, y = X[:, 0], X[:, 1]
        return 2.0 * np.pi * np.stack(
            [np.cos(np.pi * x) * np.sin(np.pi * y), np.sin(np.pi * x) * np.cos(np.pi * y)],
            axis=-1,
        )

    mesh = unit_square_mesh(8)
    worst = -np.inf
    for kind in ("cfem", "ncfem", "dg"):
        space = make_space(mesh, kind)
        gamma = GAMMA if kind == "dg" else None
        coeffs0 = set_initial(space, u0, reaction.p, u0_grad=u0_grad)
        integ = TimeIntegrator(space, reaction, 1.0, forcing=None, gamma=gamma)
        _, states = integ.run(coeffs0, T=0.2, dt=0.01)
        A = integ.diffusion
        rop = integ.reaction_op
        energies = [
            free_energy(space, s.coeffs, reaction, 1.0, gamma=gamma, diffusion=A, reaction_op=rop)
            for s in states
        ]
        for e_prev, e_next in zip(energies, energies[1:]):
            worst = max(worst, e_next - e_prev - 1e-12 * (1.0 + abs(e_prev)))
    return PropResult(
        "free-energy decay (force-free, pumping-free)",
        worst <= 0.0,
        f"max energy increment {worst:.3e} over 20 steps x 3 schemes",
    )


CHECKS = (
    check_monotonicity,
    check_jacobian_fd,
    check_ritz,
    check_dg_symmetry,
    check_dg_continuity,
    check_dg_coercivity,
    check_cr_facet_means,
    check_conforming_dg_jumps,
    check_stability_bound,
    check_energy_decay,
)


def run_all(seed: int = 0, verbose: bool = True) -> list[PropResult]:
    """Run every check; print one [PASS]/[FAIL] line per check if verbose."""
    results = []
    for fn in CHECKS:
        try:
            res = fn(seed) if "seed" in fn.__code__.co_varnames else fn()
        except Exception as exc:  # noqa: BLE001 - a crash is a failure, not an abort
            res = PropResult(fn.__name__, False, f"raised {type(exc).__name__}: {exc}")
        results.append(res)
        if verbose:
            tag = "PASS" if res.ok else "FAIL"
            print(f"[{tag}] {res.name}: {res.detail}")
    if verbose:
        nfail = sum(not r.ok for r in results)
        print(f"{len(results) - nfail}/{len(results)} property checks passed")
    return results
