"""Stiffness assembly, conjugate-gradient solve, and broken-norm errors.

One degree of freedom lives on every interior edge; the local 4-DOF basis of
a cell is tied to its edges through the shared edge numbering, which enforces
the weak continuity of the nonconforming space, and boundary edges are simply
dropped (homogeneous Dirichlet).  Element integrals use one quadrature rule
family for the whole mesh: either a tensor Gauss rule through each cell's
bilinear map, or the barycenter-symmetric low-point rules built per cell from
its intermediate-domain parameters.

The assembly loop is vectorized over cells; ``element_matrices`` is the
single-element reference version of the same arithmetic.  Scalar data
callables (kappa, f, exact solutions) must accept numpy arrays (x1, x2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .element import basis_coefficients, grad_mu_bar, mu_bar
from .geometry import GeometryError, IntermediateQuad, Quadrilateral, build_affine, \
    intermediate_params
from .mesh import DofMap, Mesh
from .quadrature import FRAME_INTERMEDIATE, FRAME_REFERENCE, QuadratureRule, \
    map_rule_to_physical, one_point_rule, select_offsets, symmetric_rule, tensor_gauss

RULE_NAMES = ("1pt", "2pt", "3pt", "gauss2x2", "gauss3x3")

_GL3 = np.polynomial.legendre.leggauss(3)


@dataclass(frozen=True)
class SparseSystem:
    """Symmetric positive-definite stiffness matrix (CSR) with load vector."""

    matrix: sparse.csr_matrix
    rhs: np.ndarray


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    relative_residual: float
    converged: bool


def cell_rule(name: str, q: Quadrilateral, require_inside: bool = True) -> QuadratureRule:
    """Quadrature rule of the given family for one cell."""
    if name == "gauss2x2":
        return tensor_gauss(2)
    if name == "gauss3x3":
        return tensor_gauss(3)
    iq = intermediate_params(q)
    if name == "1pt":
        return one_point_rule(iq)
    if name == "2pt":
        return symmetric_rule(iq, 2, require_inside=require_inside)
    if name == "3pt":
        return symmetric_rule(iq, 3, require_inside=require_inside)
    raise ValueError(f"unknown rule {name!r}; expected one of {RULE_NAMES}")


def element_matrices(q: Quadrilateral, rule: QuadratureRule, kappa, f):
    """Local stiffness matrix and load vector of one cell.

    K[i, j] = sum_l w_l kappa(b_l) grad phi_i(b_l) . grad phi_j(b_l) and
    F[i] = sum_l w_l f(b_l) phi_i(b_l), with physical gradients obtained from
    the intermediate-domain ones through the inverse transposed affine map.
    """
    iq = intermediate_params(q)
    amap = build_affine(q)
    coeff = basis_coefficients(iq.hbar1, iq.hbar2)
    pts, wts = map_rule_to_physical(rule, q)
    pb = amap.apply_inverse(pts)
    gmu = grad_mu_bar(iq, pb)
    grads_bar = coeff[None, :, 1:3] + coeff[None, :, 3, None] * gmu[:, None, :]
    grads = grads_bar @ amap.inverse_matrix
    kv = wts * np.asarray(kappa(pts[:, 0], pts[:, 1]), dtype=float)
    ke = np.einsum("l,lid,ljd->ij", kv, grads, grads)
    phis = (coeff[None, :, 0] + coeff[None, :, 1] * pb[:, 0, None]
            + coeff[None, :, 2] * pb[:, 1, None]
            + coeff[None, :, 3] * mu_bar(iq, pb)[:, None])
    fv = wts * np.asarray(f(pts[:, 0], pts[:, 1]), dtype=float)
    fe = fv @ phis
    return ke, fe


class _CellGeometry:
    """Per-cell geometric quantities for a whole mesh, vectorized."""

    def __init__(self, mesh: Mesh):
        v1, v2, v3, v4 = mesh.cell_vertex_arrays()
        cr = lambda a, b: a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        den2 = cr(v1 - v4, v2 - v4)
        den1 = cr(v2 - v3, v1 - v3)
        self.hb1 = cr(v3 - v4, v2 - v4) / den2
        self.hb2 = cr(v4 - v3, v1 - v3) / den1
        if np.any(self.hb1 > -1e-10) or np.any(self.hb2 > -1e-10):
            raise GeometryError("mesh contains a non-convex cell")
        self.amat = np.stack([
            (v1 - v3) / (1.0 - self.hb1)[:, None],
            (v2 - v4) / (1.0 - self.hb2)[:, None],
        ], axis=-1)                                    # (nc, 2, 2), columns
        self.shift = (v3 - self.hb1[:, None] * v1) / (1.0 - self.hb1)[:, None]
        a, b = self.amat[:, 0, 0], self.amat[:, 0, 1]
        c, d = self.amat[:, 1, 0], self.amat[:, 1, 1]
        self.det = a * d - b * c
        self.ainv = np.empty_like(self.amat)
        self.ainv[:, 0, 0] = d / self.det
        self.ainv[:, 0, 1] = -b / self.det
        self.ainv[:, 1, 0] = -c / self.det
        self.ainv[:, 1, 1] = a / self.det
        self.coeff = basis_coefficients(self.hb1, self.hb2)   # (nc, 4, 4)
        # bilinear map pieces
        self.bk = 0.25 * np.stack([v1 - v2 - v3 + v4, v1 + v2 - v3 - v4], axis=-1)
        self.bd = 0.25 * (v1 - v2 + v3 - v4)
        self.bb = 0.25 * (v1 + v2 + v3 + v4)

    @property
    def iq_arrays(self):
        return self.hb1, self.hb2

    def to_intermediate(self, pts: np.ndarray) -> np.ndarray:
        """Pull physical points (nc, 2) back to intermediate coordinates."""
        rel = pts - self.shift
        return np.einsum("nij,nj->ni", self.ainv, rel)

    def bilinear_points(self, xhat: np.ndarray):
        """Push reference points (L, 2) through each cell's bilinear map.

        Returns physical points (nc, L, 2) and Jacobian determinants (nc, L).
        """
        lin = np.einsum("nij,lj->nli", self.bk, xhat)
        pts = lin + self.bd[:, None, :] * (xhat[:, 0] * xhat[:, 1])[None, :, None] \
            + self.bb[:, None, :]
        j1 = self.bk[:, :, 0][:, None, :] + self.bd[:, None, :] * xhat[None, :, 1, None]
        j2 = self.bk[:, :, 1][:, None, :] + self.bd[:, None, :] * xhat[None, :, 0, None]
        dets = j1[..., 0] * j2[..., 1] - j1[..., 1] * j2[..., 0]
        return pts, dets

    def basis_values(self, pb: np.ndarray) -> np.ndarray:
        """Shape function values at intermediate points (nc, 2) -> (nc, 4)."""
        x1, x2 = pb[:, 0], pb[:, 1]
        q1 = x1 * x1 - 0.3 * (1.0 + self.hb1) * x1 + 0.15 * self.hb1
        q2 = x2 * x2 - 0.3 * (1.0 + self.hb2) * x2 + 0.15 * self.hb2
        mu = x1 * x2 * (q1 + q2)
        c = self.coeff
        return c[:, :, 0] + c[:, :, 1] * x1[:, None] + c[:, :, 2] * x2[:, None] \
            + c[:, :, 3] * mu[:, None]

    def basis_gradients(self, pb: np.ndarray) -> np.ndarray:
        """Physical shape function gradients at intermediate points -> (nc, 4, 2)."""
        x1, x2 = pb[:, 0], pb[:, 1]
        hh1, hh2 = 1.0 + self.hb1, 1.0 + self.hb2
        g1 = 3 * x1 * x1 * x2 + x2 ** 3 - 0.3 * (2 * hh1 * x1 * x2 + hh2 * x2 * x2) \
            + 0.15 * (hh1 + hh2 - 2.0) * x2
        g2 = x1 ** 3 + 3 * x1 * x2 * x2 - 0.3 * (hh1 * x1 * x1 + 2 * hh2 * x1 * x2) \
            + 0.15 * (hh1 + hh2 - 2.0) * x1
        gmu = np.stack([g1, g2], axis=-1)
        gbar = self.coeff[:, :, 1:3] + self.coeff[:, :, 3, None] * gmu[:, None, :]
        return np.einsum("nid,ndk->nik", gbar, self.ainv)


def _mesh_quadrature(mesh: Mesh, geo: _CellGeometry, rule_name: str):
    """Per-cell physical points (nc, L, 2), weights (nc, L) and the matching
    intermediate coordinates (nc, L, 2) for the chosen rule family."""
    if rule_name in ("gauss2x2", "gauss3x3"):
        ref = tensor_gauss(2 if rule_name == "gauss2x2" else 3)
        pts, dets = geo.bilinear_points(ref.nodes)
        if np.any(dets <= 0):
            raise GeometryError("non-positive bilinear Jacobian on a cell")
        wts = ref.weights[None, :] * dets
        pb = np.einsum("nij,nlj->nli", geo.ainv, pts - geo.shift[:, None, :])
        return pts, wts, pb
    hb1, hb2 = geo.iq_arrays
    hh1, hh2 = 1.0 + hb1, 1.0 + hb2
    bc = np.stack([hh1, hh2], axis=-1) / 3.0
    area = 0.5 * (1.0 - hb1) * (1.0 - hb2)
    if rule_name == "1pt":
        pb = bc[:, None, :]
        wbar = area[:, None]
    elif rule_name in ("2pt", "3pt"):
        num = 2 if rule_name == "2pt" else 3
        off = select_offsets(hb1, hb2, num, require_inside=False)
        if num == 2:
            pb = np.stack([bc + off, bc - off], axis=1)
        else:
            pb = np.stack([bc, bc + off, bc - off], axis=1)
        wbar = np.repeat(area[:, None] / num, num, axis=1)
    else:
        raise ValueError(f"unknown rule {rule_name!r}; expected one of {RULE_NAMES}")
    pts = np.einsum("nij,nlj->nli", geo.amat, pb) + geo.shift[:, None, :]
    wts = np.abs(geo.det)[:, None] * wbar
    return pts, wts, pb


def assemble(mesh: Mesh, dofmap: DofMap, rule_name: str, kappa, f) -> SparseSystem:
    """Assemble the quadrature-approximated stiffness matrix and load vector.

    ``rule_name`` selects the quadrature family (one of RULE_NAMES).
    Boundary-edge contributions are discarded, so the system acts on the
    interior-edge unknowns only.
    """
    geo = _CellGeometry(mesh)
    pts, wts, pb = _mesh_quadrature(mesh, geo, rule_name)
    nc, nq = wts.shape
    ke = np.zeros((nc, 4, 4))
    fe = np.zeros((nc, 4))
    for l in range(nq):
        grads = geo.basis_gradients(pb[:, l])
        phis = geo.basis_values(pb[:, l])
        kv = wts[:, l] * np.asarray(kappa(pts[:, l, 0], pts[:, l, 1]), dtype=float)
        fv = wts[:, l] * np.asarray(f(pts[:, l, 0], pts[:, l, 1]), dtype=float)
        ke += kv[:, None, None] * np.einsum("nid,njd->nij", grads, grads)
        fe += fv[:, None] * phis
    dofs = dofmap.edge_to_dof[mesh.cell_edges]                 # (nc, 4)
    rows = np.repeat(dofs, 4, axis=1).ravel()
    cols = np.tile(dofs, (1, 4)).ravel()
    vals = ke.ravel()
    keep = (rows >= 0) & (cols >= 0)
    nd = dofmap.num_dofs
    mat = sparse.coo_matrix((vals[keep], (rows[keep], cols[keep])),
                            shape=(nd, nd)).tocsr()
    rhs = np.zeros(nd)
    keep_f = dofs.ravel() >= 0
    np.add.at(rhs, dofs.ravel()[keep_f], fe.ravel()[keep_f])
    return SparseSystem(matrix=mat, rhs=rhs)


def cg_solve(system: SparseSystem, tol: float = 1e-7, max_iter: int | None = None):
    """Plain (unpreconditioned) conjugate gradients.

    Stops when the relative residual |b - A x| / |b| drops below ``tol``;
    non-convergence within ``max_iter`` (default 10x the system size) is
    reported, not raised.
    """
    a, b = system.matrix, system.rhs
    n = len(b)
    if n == 0:
        return np.zeros(0), SolveReport(iterations=0, relative_residual=0.0,
                                        converged=True)
    if max_iter is None:
        max_iter = 10 * n
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(iterations=0, relative_residual=0.0,
                                        converged=True)
    x = np.zeros(n)
    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    it = 0
    while it < max_iter:
        if np.sqrt(rr) / bnorm <= tol:
            break
        ap = a @ p
        alpha = rr / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
    rel = np.sqrt(rr) / bnorm
    return x, SolveReport(iterations=it, relative_residual=float(rel),
                          converged=bool(rel <= tol))


def compute_errors(mesh: Mesh, dofmap: DofMap, solution: np.ndarray,
                   u_exact, grad_u_exact):
    """Broken H1 seminorm and L2 norm of the error, cell by cell.

    Integrals use the 3x3 tensor Gauss rule through each cell's bilinear map.
    Boundary edges contribute zero coefficients.
    """
    geo = _CellGeometry(mesh)
    ref = tensor_gauss(3)
    pts, dets = geo.bilinear_points(ref.nodes)
    wts = ref.weights[None, :] * dets
    dofs = dofmap.edge_to_dof[mesh.cell_edges]
    if dofmap.num_dofs == 0:
        coefs = np.zeros(dofs.shape)
    else:
        coefs = np.where(dofs >= 0, solution[np.clip(dofs, 0, None)], 0.0)  # (nc, 4)
    h1_sq = 0.0
    l2_sq = 0.0
    for l in range(len(ref)):
        pb = geo.to_intermediate(pts[:, l])
        uh = np.einsum("ni,ni->n", coefs, geo.basis_values(pb))
        guh = np.einsum("ni,nid->nd", coefs, geo.basis_gradients(pb))
        x1, x2 = pts[:, l, 0], pts[:, l, 1]
        du = guh - grad_u_exact(x1, x2)
        h1_sq += float(wts[:, l] @ (du[:, 0] ** 2 + du[:, 1] ** 2))
        l2_sq += float(wts[:, l] @ (uh - u_exact(x1, x2)) ** 2)
    return float(np.sqrt(h1_sq)), float(np.sqrt(l2_sq))


def interpolate_dofs(mesh: Mesh, dofmap: DofMap, u) -> np.ndarray:
    """Edge-mean interpolant of a smooth function, as a DOF vector.

    Edge means are computed with 3-point Gauss-Legendre per edge.
    """
    t, w = _GL3
    out = np.zeros(dofmap.num_dofs)
    interior = np.flatnonzero(dofmap.edge_to_dof >= 0)
    a = mesh.vertices[mesh.edges[interior, 0]]
    b = mesh.vertices[mesh.edges[interior, 1]]
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    acc = np.zeros(len(interior))
    for ti, wi in zip(t, w):
        p = mid + ti * half
        acc += 0.5 * wi * np.asarray(u(p[:, 0], p[:, 1]), dtype=float)
    out[dofmap.edge_to_dof[interior]] = acc
    return out
