"""The damped-pumped reaction term and its discrete operators.

The reaction is

    phi(u) = alpha*|u|^(p-2)*u - sum_l beta_l*|u|^(q_l-2)*u

with p >= 2 and 2 <= q_l < p.  The damping part is monotone:

    (|a|^(p-2)*a - |b|^(p-2)*b) * (a - b) >= 2^(2-p) * |a - b|^p

pointwise, which survives quadrature because all weights are positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from dpfem.quadrature import simplex_rule
from dpfem.spaces import FunctionSpace


@dataclass(frozen=True)
class ReactionSpec:
    """Coefficients of the reaction term.

    Attributes
    ----------
    alpha : float
        Damping coefficient (> 0).
    p : float
        Damping exponent (>= 2).
    pumping : tuple of (beta, q) pairs
        Pumping terms with 2 <= q < p and beta > 0.
    """

    alpha: float
    p: float
    pumping: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.p < 2:
            raise ValueError(f"damping exponent p must be >= 2, got {self.p}")
        if self.alpha <= 0:
            raise ValueError(f"damping coefficient alpha must be > 0, got {self.alpha}")
        object.__setattr__(self, "pumping", tuple((float(b), float(q)) for b, q in self.pumping))
        for beta, q in self.pumping:
            if not 2 <= q < self.p:
                raise ValueError(f"pumping exponent must satisfy 2 <= q < p, got q={q}, p={self.p}")

    @property
    def quad_degree(self) -> int:
        """Default quadrature degree for reaction integrals."""
        return int(np.ceil(self.p)) + 2

    def phi(self, u: np.ndarray) -> np.ndarray:
        """Pointwise reaction phi(u)."""
        u = np.asarray(u, dtype=float)
        if self.p == 2:
            out = self.alpha * u
        else:
            out = self.alpha * np.abs(u) ** (self.p - 2) * u
        for beta, q in self.pumping:
            out = out - (beta * u if q == 2 else beta * np.abs(u) ** (q - 2) * u)
        return out

    def dphi(self, u: np.ndarray) -> np.ndarray:
        """Pointwise derivative phi'(u) = alpha*(p-1)*|u|^(p-2) - ..."""
        u = np.asarray(u, dtype=float)
        if self.p == 2:
            out = self.alpha * np.ones_like(u)
        else:
            out = self.alpha * (self.p - 1) * np.abs(u) ** (self.p - 2)
        for beta, q in self.pumping:
            out = out - (beta * np.ones_like(u) if q == 2 else beta * (q - 1) * np.abs(u) ** (q - 2))
        return out

    def energy_density(self, u: np.ndarray) -> np.ndarray:
        """Pointwise potential (alpha/p)|u|^p - sum (beta_l/q_l)|u|^q_l."""
        u = np.asarray(u, dtype=float)
        out = (self.alpha / self.p) * np.abs(u) ** self.p
        for beta, q in self.pumping:
            out = out - (beta / q) * np.abs(u) ** q
        return out

    def damped_only(self) -> "ReactionSpec":
        return ReactionSpec(alpha=self.alpha, p=self.p)


def stability_constant(spec: ReactionSpec) -> float:
    """The pumping constant C* controlling the energy gained from pumping.

    C* = sum_l |beta_l| * (p - q_l)/p * (2 M |beta_l| q_l / (alpha p))^(q_l/(p-q_l))

    where M is the number of pumping terms.  C* = 0 without pumping.
    """
    M = len(spec.pumping)
    p, alpha = spec.p, spec.alpha
    total = 0.0
    for beta, q in spec.pumping:
        b = abs(beta)
        total += b * ((p - q) / p) * (2.0 * M * b * q / (alpha * p)) ** (q / (p - q))
    return total


def monotone_gap(u: float, v: float, p: float) -> tuple[float, float]:
    """Scalar monotonicity bound: returns (lhs, rhs) of

    (|u|^(p-2)u - |v|^(p-2)v)(u - v) >= 2^(2-p) |u - v|^p.
    """
    bu = abs(u) ** (p - 2) * u
    bv = abs(v) ** (p - 2) * v
    lhs = (bu - bv) * (u - v)
    rhs = 2.0 ** (2.0 - p) * abs(u - v) ** p
    return float(lhs), float(rhs)


def monotonicity_gap(space, u_coeffs, v_coeffs, p: float, quad_degree: int | None = None):
    """Discrete monotonicity bound for two fields in the same space.

    Returns (lhs, rhs) with lhs = <b(u)-b(v), u-v> and
    rhs = 2^(2-p) ||u-v||_Lp^p, both evaluated with the same positive-weight
    quadrature, so the pointwise inequality carries over to the sums.
    """
    from dpfem.quadrature import simplex_rule

    mesh = space.mesh
    degree = int(np.ceil(p)) + 2 if quad_degree is None else quad_degree
    rule = simplex_rule(mesh.dim, degree)
    wq = rule.weights / rule.weights.sum()
    cell_w = mesh.cell_measures[:, None] * wq[None, :]
    basis = space.tabulate(rule.barycentric).T
    uq = np.asarray(u_coeffs)[space.cell_dofs] @ basis
    vq = np.asarray(v_coeffs)[space.cell_dofs] @ basis
    if p == 2:
        bu, bv = uq, vq
    else:
        bu = np.abs(uq) ** (p - 2) * uq
        bv = np.abs(vq) ** (p - 2) * vq
    lhs = float(np.sum((bu - bv) * (uq - vq) * cell_w))
    rhs = 2.0 ** (2.0 - p) * float(np.sum(np.abs(uq - vq) ** p * cell_w))
    return lhs, rhs


# ----------------------------------------------------------------------
# discrete operators
# ----------------------------------------------------------------------


class ReactionOperator:
    """Quadrature-based residual / Jacobian / energy of the reaction term.

    Per cell, with basis values N (nloc x nq) at the reference rule:

        residual_i  = |K| sum_q w_q phi(u(x_q)) N[i, q]
        jacobian_ij = |K| sum_q w_q phi'(u(x_q)) N[i, q] N[j, q]
    """

    def __init__(self, space: FunctionSpace, spec: ReactionSpec, quad_degree: int | None = None):
        self.space = space
        self.spec = spec
        mesh = space.mesh
        degree = spec.quad_degree if quad_degree is None else quad_degree
        rule = simplex_rule(mesh.dim, degree)
        # weights folded with the reference-to-physical measure ratio
        ref_measure = rule.weights.sum()
        self._basis = np.ascontiguousarray(space.tabulate(rule.barycentric).T)  # (nloc, nq)
        self._wq = rule.weights / ref_measure  # sums to 1: cell integrals scale by |K|
        self._cell_w = mesh.cell_measures[:, None] * self._wq[None, :]  # (nc, nq)
        dofs = space.cell_dofs
        nloc = dofs.shape[1]
        self._rows = np.repeat(dofs, nloc, axis=1).ravel()
        self._cols = np.tile(dofs, (1, nloc)).ravel()

    def _values_at_quad(self, coeffs: np.ndarray) -> np.ndarray:
        return coeffs[self.space.cell_dofs] @ self._basis  # (nc, nq)

    def residual(self, coeffs: np.ndarray) -> np.ndarray:
        uq = self._values_at_quad(coeffs)
        fq = self.spec.phi(uq) * self._cell_w
        local = fq @ self._basis.T  # (nc, nloc)
        return np.bincount(self.space.cell_dofs.ravel(), weights=local.ravel(), minlength=self.space.ndofs)

    def jacobian(self, coeffs: np.ndarray) -> sp.csr_matrix:
        uq = self._values_at_quad(coeffs)
        wq = self.spec.dphi(uq) * self._cell_w  # (nc, nq)
        local = np.einsum("cq,iq,jq->cij", wq, self._basis, self._basis)
        local = 0.5 * (local + local.transpose(0, 2, 1))  # exact symmetry
        n = self.space.ndofs
        A = sp.coo_matrix((local.ravel(), (self._rows, self._cols)), shape=(n, n))
        return A.tocsr()

    def energy(self, coeffs: np.ndarray) -> float:
        uq = self._values_at_quad(coeffs)
        return float(np.sum(self.spec.energy_density(uq) * self._cell_w))

    def lp_norm_pth_power(self, coeffs: np.ndarray, p: float) -> float:
        """The quadrature L^p norm ||u||_p^p used in the monotonicity bound."""
        uq = self._values_at_quad(coeffs)
        return float(np.sum(np.abs(uq) ** p * self._cell_w))
