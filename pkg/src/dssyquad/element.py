"""Four-DOF nonconforming shape functions on the intermediate quadrilateral.

The local space is P1 plus the span of one quartic bubble

    mu(x1, x2) = x1 * x2 * (q(x1; hbar1) + cbar * q(x2; hbar2)),
    q(x; h)    = x^2 - (3/10)(1 + h) x + (3/20) h,

chosen so that on every edge the mean integral of any member of the space
equals its value at the edge midpoint (the mean value property).  Thanks to
that property the four edge functionals - mean integrals or midpoint values,
interchangeably - are unisolvent, and the nodal basis is available in closed
form.  The symmetric choice cbar = 1 is used throughout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import IntermediateQuad

# Shape functions in the monomial basis (1, x1, x2, mu): phi_j = sum_k coeff[j,k] psi_k.
_COEFF_CHECK_TOL = 1e-9

# 3-point Gauss-Legendre on [-1, 1], exact for quintics.
_GAUSS3_T = np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)])
_GAUSS3_W = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


class EdgeFunctionalKind(enum.Enum):
    MEAN_INTEGRAL = "mean-integral"
    MIDPOINT_VALUE = "midpoint-value"


def qbar(x, h):
    """Edge profile polynomial q(x; h) = x^2 - (3/10)(1+h)x + (3/20)h."""
    x = np.asarray(x, dtype=float)
    return x * x - 0.3 * (1.0 + h) * x + 0.15 * h


def mu_bar(iq: IntermediateQuad, points: np.ndarray, cbar: float = 1.0) -> np.ndarray:
    """Quartic bubble mu = x1*x2*(q(x1; hbar1) + cbar*q(x2; hbar2)) at points (..., 2)."""
    p = np.asarray(points, dtype=float)
    x1, x2 = p[..., 0], p[..., 1]
    return x1 * x2 * (qbar(x1, iq.hbar1) + cbar * qbar(x2, iq.hbar2))


def grad_mu_bar(iq: IntermediateQuad, points: np.ndarray, cbar: float = 1.0) -> np.ndarray:
    """Gradient of the bubble at points (..., 2), shape (..., 2)."""
    p = np.asarray(points, dtype=float)
    x1, x2 = p[..., 0], p[..., 1]
    hh1, hh2 = iq.hh1, iq.hh2
    g1 = (3.0 * x1 * x1 * x2 + cbar * x2 ** 3
          - 0.3 * (2.0 * hh1 * x1 * x2 + cbar * hh2 * x2 * x2)
          + 0.15 * (hh1 + cbar * hh2 - 1.0 - cbar) * x2)
    g2 = (x1 ** 3 + 3.0 * cbar * x1 * x2 * x2
          - 0.3 * (hh1 * x1 * x1 + 2.0 * cbar * hh2 * x1 * x2)
          + 0.15 * (hh1 + cbar * hh2 - 1.0 - cbar) * x1)
    return np.stack([g1, g2], axis=-1)


def unisolvency_det(iq: IntermediateQuad, cbar: float = 1.0) -> float:
    """Closed-form determinant of the midpoint evaluation matrix.

    Returns -(1/160)(1-hbar1)^2(1-hbar2)^2 (hbar1^2+hbar1+1 + cbar*(hbar2^2+hbar2+1)).
    For cbar = 1 this is strictly negative, so the four midpoint values always
    determine the local function uniquely.
    """
    h1, h2 = iq.hbar1, iq.hbar2
    return (-(1.0 / 160.0) * (1.0 - h1) ** 2 * (1.0 - h2) ** 2
            * (h1 * h1 + h1 + 1.0 + cbar * (h2 * h2 + h2 + 1.0)))


def dof_matrix(iq: IntermediateQuad, cbar: float = 1.0) -> np.ndarray:
    """Matrix a[j, k] = psi_k(m_j): monomials (1, x1, x2, mu) at the edge midpoints."""
    mids = iq.edge_midpoints()
    a = np.empty((4, 4))
    a[:, 0] = 1.0
    a[:, 1] = mids[:, 0]
    a[:, 2] = mids[:, 1]
    a[:, 3] = mu_bar(iq, mids, cbar)
    return a


def basis_coefficients(hbar1, hbar2):
    """Closed-form nodal basis coefficients, vectorized over the parameters.

    Returns coeff with shape (..., 4, 4) where phi_j = sum_k coeff[..., j, k]
    psi_k in the monomial basis (1, x1, x2, mu) and phi_j(m_k) = delta_jk at
    the edge midpoints.  Row sums reproduce the partition of unity: the
    constant column sums to 1 and every other column to 0.
    """
    h1 = np.asarray(hbar1, dtype=float)
    h2 = np.asarray(hbar2, dtype=float)
    d = 2.0 + h1 + h2 + h1 * h1 + h2 * h2
    n12 = (h1 * h1 + h1 + h2 * h2 + 1.0) * h2 / d
    n21 = (h2 * h2 + h2 + h1 * h1 + 1.0) * h1 / d
    nh1 = (h1 * h1 + h1 + 2.0) / d
    nh2 = (h2 * h2 + h2 + 2.0) / d
    g = 20.0 / d
    f = 2.0 / ((1.0 - h1) * (1.0 - h2))
    rows = [
        [h1 * h2 / 2.0, -n12, -n21, g],
        [-h2 / 2.0, n12, nh2, -g],
        [0.5 * np.ones_like(d), -nh1, -nh2, g],
        [-h1 / 2.0, nh1, n21, -g],
    ]
    coeff = np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)
    return f[..., None, None] * coeff


@dataclass(frozen=True)
class DssyBasis:
    """Nodal basis of the local space P1 + span{mu} on an intermediate quadrilateral.

    phi_j takes the value 1 at edge midpoint m_j and 0 at the other three;
    because the space has the mean value property the same basis is nodal for
    the edge-mean functionals.
    """

    iq: IntermediateQuad
    cbar: float
    coeff: np.ndarray

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Values of the four shape functions at points (..., 2), shape (..., 4)."""
        p = np.asarray(points, dtype=float)
        psi = np.stack([
            np.ones(p.shape[:-1]),
            p[..., 0],
            p[..., 1],
            mu_bar(self.iq, p, self.cbar),
        ], axis=-1)
        return psi @ self.coeff.T

    def gradient(self, points: np.ndarray) -> np.ndarray:
        """Gradients of the four shape functions, shape (..., 4, 2)."""
        p = np.asarray(points, dtype=float)
        gmu = grad_mu_bar(self.iq, p, self.cbar)
        out = np.broadcast_to(self.coeff[:, 1:3], p.shape[:-1] + (4, 2)).copy()
        out += self.coeff[:, 3, None] * gmu[..., None, :]
        return out


def build_basis(iq: IntermediateQuad) -> DssyBasis:
    """Construct the nodal basis from the closed-form coefficients (cbar = 1).

    The closed form is cross-checked against a direct linear solve of the
    midpoint interpolation conditions; a mismatch beyond 1e-9 signals a
    transcription bug and aborts.
    """
    coeff = basis_coefficients(iq.hbar1, iq.hbar2)
    numeric = np.linalg.inv(dof_matrix(iq).T)
    assert np.max(np.abs(coeff - numeric)) <= _COEFF_CHECK_TOL * max(
        1.0, float(np.max(np.abs(numeric)))
    ), "closed-form basis coefficients disagree with the midpoint conditions"
    return DssyBasis(iq=iq, cbar=1.0, coeff=coeff)


def edge_functional(kind: EdgeFunctionalKind, f: Callable, a: np.ndarray,
                    b: np.ndarray) -> float:
    """Edge degree of freedom of a scalar function on the segment [a, b].

    The mean-integral kind evaluates (1/|e|) int_e f ds with 3-point
    Gauss-Legendre (exact for quartics along the edge); the midpoint kind
    returns f((a+b)/2).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not np.any(a != b):
        raise ValueError("edge endpoints coincide")
    mid = 0.5 * (a + b)
    if kind is EdgeFunctionalKind.MIDPOINT_VALUE:
        return float(f(mid))
    half = 0.5 * (b - a)
    pts = mid + np.multiply.outer(_GAUSS3_T, half)
    vals = np.array([float(f(p)) for p in pts])
    return float(0.5 * _GAUSS3_W @ vals)
