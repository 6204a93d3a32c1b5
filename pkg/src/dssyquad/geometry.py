"""Convex quadrilateral geometry and the affine link to its intermediate domain.

Every strictly convex quadrilateral K with vertices v1..v4 (counter-clockwise,
v1/v3 and v2/v4 opposite corners) is the affine image of a canonical
"intermediate" quadrilateral Kbar with vertices

    (1, 0), (0, 1), (hbar1, 0), (0, hbar2),      hbar1 < 0, hbar2 < 0.

The two shape parameters are values of the diagonal line functionals

    ell1(x) = cross(x - v3, v1 - v3) / cross(v2 - v3, v1 - v3),
    ell2(x) = cross(x - v4, v2 - v4) / cross(v1 - v4, v2 - v4),

namely hbar1 = ell2(v3) and hbar2 = ell1(v4).  The affine map taking Kbar
onto K has columns (v1 - v3)/(1 - hbar1), (v2 - v4)/(1 - hbar2) and shift
equal to the intersection point of the two diagonals; its inverse is simply
x -> (ell2(x), ell1(x)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Reject quadrilaterals whose intermediate parameters are this close to zero:
# the map formulas divide by (1 - hbar) and degenerate as hbar -> 0.
CONVEXITY_TOL = 1e-10


class GeometryError(ValueError):
    """Degenerate or invalid quadrilateral geometry."""


class NonConvexError(GeometryError):
    """Quadrilateral failed the strict convexity test."""


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _hbars(v: np.ndarray) -> tuple[float, float]:
    """Intermediate parameters (hbar1, hbar2) from a (4, 2) vertex array."""
    v1, v2, v3, v4 = v
    den1 = _cross(v2 - v3, v1 - v3)
    den2 = _cross(v1 - v4, v2 - v4)
    if abs(den1) < 1e-300 or abs(den2) < 1e-300:
        raise GeometryError("degenerate quadrilateral: collinear defining vertices")
    hb1 = _cross(v3 - v4, v2 - v4) / den2   # ell2(v3)
    hb2 = _cross(v4 - v3, v1 - v3) / den1   # ell1(v4)
    return float(hb1), float(hb2)


@dataclass(frozen=True)
class Quadrilateral:
    """Strictly convex quadrilateral, vertices counter-clockwise.

    The vertex array has shape (4, 2); v1/v3 and v2/v4 must be diagonal
    pairs.  Edge j joins v_j and v_{j+1} (cyclically), so edge 1 runs from
    v1 to v2 and edge 4 closes the loop from v4 back to v1.
    """

    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if v.shape != (4, 2):
            raise GeometryError(f"expected 4 vertices in 2D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise GeometryError("vertices must be finite")
        object.__setattr__(self, "v", v)
        area2 = sum(_cross(v[i], v[(i + 1) % 4]) for i in range(4))
        if area2 <= 0:
            raise GeometryError("vertices must be ordered counter-clockwise")
        hb1, hb2 = _hbars(v)
        if hb1 > -CONVEXITY_TOL or hb2 > -CONVEXITY_TOL:
            raise NonConvexError(
                f"quadrilateral is not strictly convex: hbar1={hb1:.3e}, hbar2={hb2:.3e}"
            )

    @property
    def area(self) -> float:
        """Polygon area by the shoelace formula."""
        v = self.v
        return 0.5 * sum(_cross(v[i], v[(i + 1) % 4]) for i in range(4))

    def edge(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Endpoints (v_j, v_{j+1}) of edge j, 0-based."""
        return self.v[j], self.v[(j + 1) % 4]

    def edge_midpoints(self) -> np.ndarray:
        """Midpoints of the four edges, shape (4, 2)."""
        return 0.5 * (self.v + np.roll(self.v, -1, axis=0))


@dataclass(frozen=True)
class IntermediateQuad:
    """Intermediate quadrilateral with vertices (1,0), (0,1), (hbar1,0), (0,hbar2)."""

    hbar1: float
    hbar2: float

    def __post_init__(self):
        if not (np.isfinite(self.hbar1) and np.isfinite(self.hbar2)):
            raise GeometryError("intermediate parameters must be finite")
        if self.hbar1 > -CONVEXITY_TOL or self.hbar2 > -CONVEXITY_TOL:
            raise NonConvexError(
                f"intermediate parameters must be strictly negative, got "
                f"({self.hbar1:.3e}, {self.hbar2:.3e})"
            )

    @property
    def hh1(self) -> float:
        return 1.0 + self.hbar1

    @property
    def hh2(self) -> float:
        return 1.0 + self.hbar2

    @property
    def barycenter(self) -> np.ndarray:
        return np.array([self.hh1 / 3.0, self.hh2 / 3.0])

    @property
    def area(self) -> float:
        return 0.5 * (1.0 - self.hbar1) * (1.0 - self.hbar2)

    @property
    def vertices(self) -> np.ndarray:
        return np.array([
            [1.0, 0.0],
            [0.0, 1.0],
            [self.hbar1, 0.0],
            [0.0, self.hbar2],
        ])

    def edge_midpoints(self) -> np.ndarray:
        """Edge midpoints m_j = (v_j + v_{j+1})/2, shape (4, 2)."""
        v = self.vertices
        return 0.5 * (v + np.roll(v, -1, axis=0))

    def contains(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """True where points of shape (..., 2) lie in the closed quadrilateral."""
        p = np.asarray(points, dtype=float)
        v = self.vertices
        ok = np.ones(p.shape[:-1], dtype=bool)
        for i in range(4):
            a, b = v[i], v[(i + 1) % 4]
            ok &= _cross(b - a, p - a) >= -tol
        return ok

    def as_quadrilateral(self) -> Quadrilateral:
        return Quadrilateral(self.vertices)


@dataclass(frozen=True)
class AffineMap2:
    """Affine map x -> m @ x + shift on the plane."""

    m: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "m", np.asarray(self.m, dtype=float).reshape(2, 2))
        object.__setattr__(self, "shift", np.asarray(self.shift, dtype=float).reshape(2))

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.m))

    @property
    def inverse_matrix(self) -> np.ndarray:
        a, b = self.m[0]
        c, d = self.m[1]
        det = a * d - b * c
        if det == 0.0:
            raise GeometryError("singular affine map")
        return np.array([[d, -b], [-c, a]]) / det

    def apply(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return p @ self.m.T + self.shift

    def apply_inverse(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return (p - self.shift) @ self.inverse_matrix.T


@dataclass(frozen=True)
class BilinearMap:
    """Bilinear map F(xhat) = a_k @ xhat + d * xhat1 * xhat2 + b from [-1,1]^2."""

    a_k: np.ndarray
    d: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a_k", np.asarray(self.a_k, dtype=float).reshape(2, 2))
        object.__setattr__(self, "d", np.asarray(self.d, dtype=float).reshape(2))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(2))

    @property
    def is_affine(self) -> bool:
        return bool(np.all(self.d == 0.0))

    def apply(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return p @ self.a_k.T + np.multiply.outer(p[..., 0] * p[..., 1], self.d) + self.b

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        """Jacobian matrices at points (..., 2), shape (..., 2, 2)."""
        p = np.asarray(points, dtype=float)
        jac = np.broadcast_to(self.a_k, p.shape[:-1] + (2, 2)).copy()
        jac[..., :, 0] += np.multiply.outer(p[..., 1], self.d)
        jac[..., :, 1] += np.multiply.outer(p[..., 0], self.d)
        return jac

    def jacobian_det(self, points: np.ndarray) -> np.ndarray:
        jac = self.jacobian(points)
        return jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]


def line_functional_1(q: Quadrilateral, x: np.ndarray) -> float:
    """Affine functional vanishing on the diagonal through v1 and v3, with value 1 at v2."""
    v1, v2, v3, v4 = q.v
    den = _cross(v2 - v3, v1 - v3)
    if abs(den) < 1e-300:
        raise GeometryError("collinear vertices v1, v2, v3")
    x = np.asarray(x, dtype=float)
    return _cross(x - v3, v1 - v3) / den


def line_functional_2(q: Quadrilateral, x: np.ndarray) -> float:
    """Affine functional vanishing on the diagonal through v2 and v4, with value 1 at v1."""
    v1, v2, v3, v4 = q.v
    den = _cross(v1 - v4, v2 - v4)
    if abs(den) < 1e-300:
        raise GeometryError("collinear vertices v1, v2, v4")
    x = np.asarray(x, dtype=float)
    return _cross(x - v4, v2 - v4) / den


def intermediate_params(q: Quadrilateral) -> IntermediateQuad:
    """Shape parameters (hbar1, hbar2) = (ell2(v3), ell1(v4)) of the quadrilateral."""
    hb1, hb2 = _hbars(q.v)
    if hb1 > -CONVEXITY_TOL or hb2 > -CONVEXITY_TOL:
        raise NonConvexError(
            f"quadrilateral is not strictly convex: hbar1={hb1:.3e}, hbar2={hb2:.3e}"
        )
    return IntermediateQuad(hb1, hb2)


def shift_candidates(q: Quadrilateral) -> tuple[np.ndarray, np.ndarray]:
    """The two equivalent expressions for the diagonal intersection point.

    Both (v3 - hbar1*v1)/(1 - hbar1) and (v4 - hbar2*v2)/(1 - hbar2) locate the
    intersection of the diagonals; they agree up to roundoff and the first is
    used as the affine shift.
    """
    v1, v2, v3, v4 = q.v
    hb1, hb2 = _hbars(q.v)
    return (v3 - hb1 * v1) / (1.0 - hb1), (v4 - hb2 * v2) / (1.0 - hb2)


def build_affine(q: Quadrilateral) -> AffineMap2:
    """Affine map taking the intermediate quadrilateral onto q, vertex to vertex.

    Columns are (v1 - v3)/(1 - hbar1) and (v2 - v4)/(1 - hbar2); the shift is
    the intersection of the two diagonals.
    """
    iq = intermediate_params(q)
    v1, v2, v3, v4 = q.v
    m = np.column_stack([
        (v1 - v3) / (1.0 - iq.hbar1),
        (v2 - v4) / (1.0 - iq.hbar2),
    ])
    shift = (v3 - iq.hbar1 * v1) / (1.0 - iq.hbar1)
    amap = AffineMap2(m, shift)
    if amap.det == 0.0:
        raise GeometryError("singular affine map")
    return amap


def build_bilinear(q: Quadrilateral) -> BilinearMap:
    """Bilinear map from the reference square [-1,1]^2 onto q.

    Maps the reference corners (1,1), (-1,1), (-1,-1), (1,-1) to v1..v4; the
    bilinear term vanishes exactly when q is a parallelogram.
    """
    v1, v2, v3, v4 = q.v
    a_k = 0.25 * np.column_stack([v1 - v2 - v3 + v4, v1 + v2 - v3 - v4])
    d = 0.25 * (v1 - v2 + v3 - v4)
    b = 0.25 * (v1 + v2 + v3 + v4)
    return BilinearMap(a_k, d, b)
