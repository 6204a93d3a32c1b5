"""Quadrature on intermediate quadrilaterals: exact moments, low-point rules.

Monomial moments over the intermediate quadrilateral are available in closed
form,

    int x1^j x2^k = j! k! / (2+j+k)! * (1 - hbar1^(j+1)) (1 - hbar2^(k+1)),

which turns the construction of quadrature rules into plain algebra.  The
one-point rule sits at the barycenter.  The two- and three-point rules use
equal weights and nodes placed symmetrically about the barycenter at offset
+-(X, Y); requiring exactness for both components of the bubble gradient
reduces to a pair of quadratic equations

    10 hh2 X^2 + 14 hh1 X Y + 7 hh2 Y^2 = L r1,
     7 hh1 X^2 + 14 hh2 X Y + 10 hh1 Y^2 = L r2,

with hh = 1 + hbar and right-hand sides derived here directly from the moment
formula.  The pair is solved as the intersection of a line with the cone
v^2 = u w in (X^2, XY, Y^2) space and polished by Newton iteration; published
radical expressions for the same solutions are kept in
``closed_form_offsets`` as an independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import GeometryError, IntermediateQuad, Quadrilateral, build_affine, \
    build_bilinear
from .element import grad_mu_bar

FRAME_INTERMEDIATE = "intermediate-affine"
FRAME_REFERENCE = "reference-bilinear"

# Offsets used for exactly parallelogram-shaped cells (hh1 = hh2 = 0), where
# the gradient-exactness equations hold for every symmetric node pair and a
# deterministic convention is needed.  (0, sqrt(3/8)) is the limit of the
# three-point construction along the degenerate families.
_PARALLELOGRAM_OFFSET = np.array([0.0, np.sqrt(3.0 / 8.0)])
_DEGENERATE_TOL = 1e-6

_NEG_CLAMP = -1e-12


class RuleConstructionError(RuntimeError):
    """No admissible symmetric quadrature rule could be constructed."""


@dataclass(frozen=True)
class MomentKey:
    """Monomial exponents (j, k) for moments on the intermediate quadrilateral."""

    j: int
    k: int

    def __post_init__(self):
        if self.j < 0 or self.k < 0:
            raise ValueError("moment exponents must be nonnegative")
        if self.j + self.k > 6:
            raise ValueError("moments are only needed up to total degree 6")


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and positive weights, either on an intermediate quadrilateral
    (frame ``intermediate-affine``) or on the reference square [-1, 1]^2
    (frame ``reference-bilinear``)."""

    nodes: np.ndarray
    weights: np.ndarray
    frame: str

    def __post_init__(self):
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if nodes.shape != (len(weights), 2):
            raise ValueError("nodes must be (L, 2) matching L weights")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        if self.frame not in (FRAME_INTERMEDIATE, FRAME_REFERENCE):
            raise ValueError(f"unknown frame {self.frame!r}")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return len(self.weights)

    def apply(self, f) -> float:
        """Apply the rule to a callable f(x1, x2) of the frame coordinates."""
        return float(self.weights @ f(self.nodes[:, 0], self.nodes[:, 1]))


def exact_moment(j: int, k: int, iq: IntermediateQuad) -> float:
    """Exact integral of x1^j x2^k over the intermediate quadrilateral."""
    key = MomentKey(j, k)
    h1, h2 = iq.hbar1, iq.hbar2
    c = math.factorial(key.j) * math.factorial(key.k) / math.factorial(2 + key.j + key.k)
    return c * (1.0 - h1 ** (key.j + 1)) * (1.0 - h2 ** (key.k + 1))


def _moment(j, k, h1, h2):
    """Moment formula vectorized over parameter arrays."""
    c = math.factorial(j) * math.factorial(k) / math.factorial(2 + j + k)
    return c * (1.0 - h1 ** (j + 1)) * (1.0 - h2 ** (k + 1))


def _gradient_mismatch(hh_a, hh_b):
    """Right-hand side r of the node equations, from the moment formula.

    r = 5 * (int p / |Kbar| - p(barycenter)) for the first bubble-gradient
    component p on a domain with parameters (hh_a, hh_b); the second component
    is the same expression with the arguments swapped.
    """
    h1 = hh_a - 1.0
    h2 = hh_b - 1.0
    area = 0.5 * (1.0 - h1) * (1.0 - h2)
    integ = (3.0 * _moment(2, 1, h1, h2) + _moment(0, 3, h1, h2)
             - 0.6 * hh_a * _moment(1, 1, h1, h2)
             - 0.3 * hh_b * _moment(0, 2, h1, h2)
             + 0.15 * (hh_a + hh_b - 2.0) * _moment(0, 1, h1, h2))
    bx, by = hh_a / 3.0, hh_b / 3.0
    at_bc = (3.0 * bx * bx * by + by ** 3
             - 0.6 * hh_a * bx * by - 0.3 * hh_b * by * by
             + 0.15 * (hh_a + hh_b - 2.0) * by)
    return 5.0 * (integ / area - at_bc)


def _inside_kbar(px, py, h1, h2, tol=1e-12):
    """Half-plane membership test for points against per-cell domains (vectorized)."""
    ok = np.ones(np.shape(px), dtype=bool)
    vx = [np.ones_like(h1), np.zeros_like(h1), h1, np.zeros_like(h1)]
    vy = [np.zeros_like(h1), np.ones_like(h1), np.zeros_like(h1), h2]
    for i in range(4):
        ax, ay = vx[i], vy[i]
        bx, by = vx[(i + 1) % 4], vy[(i + 1) % 4]
        ok &= (bx - ax) * (py - ay) - (by - ay) * (px - ax) >= -tol
    return ok


def symmetric_offset_candidates(hbar1, hbar2, num_points: int):
    """Candidate node offsets (X, Y) for the symmetric rules, vectorized.

    Solves the two gradient-exactness quadratics for arrays of intermediate
    parameters.  Returns (offsets, valid, inside) with shapes (n, 2, 2),
    (n, 2) and (n, 2): up to two candidate offsets per cell, a validity mask,
    and whether both symmetric nodes fall in the closed domain.  Exactly
    parallelogram-shaped cells get the fixed offset in slot 0.
    """
    h1 = np.atleast_1d(np.asarray(hbar1, dtype=float))
    h2 = np.atleast_1d(np.asarray(hbar2, dtype=float))
    hh1, hh2 = 1.0 + h1, 1.0 + h2
    n = len(h1)
    L = float(num_points)

    b1 = L * _gradient_mismatch(hh1, hh2)
    b2 = L * _gradient_mismatch(hh2, hh1)
    # rows of the linear system in (u, v, w) = (X^2, XY, Y^2)
    m1 = np.stack([10.0 * hh2, 14.0 * hh1, 7.0 * hh2], axis=-1)
    m2 = np.stack([7.0 * hh1, 14.0 * hh2, 10.0 * hh1], axis=-1)

    parallel = (np.abs(hh1) < _DEGENERATE_TOL) & (np.abs(hh2) < _DEGENERATE_TOL)

    with np.errstate(invalid="ignore", divide="ignore"):
        # minimum-norm particular solution p0 = M^T (M M^T)^{-1} b
        g11 = np.einsum("ni,ni->n", m1, m1)
        g12 = np.einsum("ni,ni->n", m1, m2)
        g22 = np.einsum("ni,ni->n", m2, m2)
        detg = g11 * g22 - g12 * g12
        detg_safe = np.where(detg != 0, detg, 1.0)
        lam1 = (g22 * b1 - g12 * b2) / detg_safe
        lam2 = (g11 * b2 - g12 * b1) / detg_safe
        p0 = lam1[:, None] * m1 + lam2[:, None] * m2
        nvec = np.cross(m1, m2)
        nrm = np.linalg.norm(nvec, axis=-1)
        nvec = nvec / np.where(nrm != 0, nrm, 1.0)[:, None]

        # intersect the solution line p0 + t*nvec with the cone v^2 = u w
        u0, v0, w0 = p0[:, 0], p0[:, 1], p0[:, 2]
        nu, nv, nw = nvec[:, 0], nvec[:, 1], nvec[:, 2]
        qa = nv * nv - nu * nw
        qb = 2.0 * v0 * nv - u0 * nw - w0 * nu
        qc = v0 * v0 - u0 * w0
        disc = qb * qb - 4.0 * qa * qc
        scale = np.maximum(qb * qb, np.abs(4.0 * qa * qc))
        has_real = disc >= -1e-12 * np.maximum(scale, 1e-300)
        sq = np.sqrt(np.maximum(disc, 0.0))
        sgn = np.where(qb >= 0, 1.0, -1.0)
        qq = -0.5 * (qb + sgn * sq)
        lin = np.abs(qa) < 1e-14 * np.maximum(np.abs(qb), np.abs(qc))
        t_first = np.where(lin, qc / np.where(qb != 0, -qb, 1.0),
                           qq / np.where(qa != 0, qa, 1.0))
        t_second = np.where(lin | (qq == 0), t_first,
                            qc / np.where(qq != 0, qq, 1.0))
        ts = np.stack([t_first, t_second], axis=-1)

        uvw = p0[:, None, :] + ts[:, :, None] * nvec[:, None, :]
        uu, vv, ww = uvw[..., 0], uvw[..., 1], uvw[..., 2]
        valid = has_real[:, None] & (uu >= _NEG_CLAMP) & (ww >= _NEG_CLAMP) \
            & np.isfinite(uu) & np.isfinite(ww)
        X = np.sqrt(np.maximum(uu, 0.0))
        Y = np.where(vv >= 0, 1.0, -1.0) * np.sqrt(np.maximum(ww, 0.0))

        # Newton polish on the original quadratics (symmetric Jacobian)
        B1, B2 = b1[:, None], b2[:, None]
        H1, H2 = hh1[:, None], hh2[:, None]
        for _ in range(2):
            f1 = 10.0 * H2 * X * X + 14.0 * H1 * X * Y + 7.0 * H2 * Y * Y - B1
            f2 = 7.0 * H1 * X * X + 14.0 * H2 * X * Y + 10.0 * H1 * Y * Y - B2
            j11 = 20.0 * H2 * X + 14.0 * H1 * Y
            j12 = 14.0 * H1 * X + 14.0 * H2 * Y
            j22 = 14.0 * H2 * X + 20.0 * H1 * Y
            detj = j11 * j22 - j12 * j12
            good = np.abs(detj) > 1e-13
            detj = np.where(good, detj, 1.0)
            dx = (j22 * f1 - j12 * f2) / detj
            dy = (j11 * f2 - j12 * f1) / detj
            X = np.where(good & valid, X - dx, X)
            Y = np.where(good & valid, Y - dy, Y)

    if np.any(parallel):
        mask = parallel[:, None]
        X = np.where(mask, _PARALLELOGRAM_OFFSET[0], X)
        Y = np.where(mask, _PARALLELOGRAM_OFFSET[1], Y)
        valid = np.where(mask, np.array([True, False]), valid)

    bcx, bcy = (hh1 / 3.0)[:, None], (hh2 / 3.0)[:, None]
    hb1c, hb2c = h1[:, None], h2[:, None]
    inside = valid \
        & _inside_kbar(bcx + X, bcy + Y, hb1c, hb2c) \
        & _inside_kbar(bcx - X, bcy - Y, hb1c, hb2c)

    offsets = np.stack([X, Y], axis=-1)
    return offsets, valid, inside


def select_offsets(hbar1, hbar2, num_points: int, require_inside: bool = True):
    """Pick one node offset per cell: in-domain candidates first, then smaller norm.

    With ``require_inside`` (the module default) cells without a fully
    interior candidate raise; with it disabled the smallest valid offset is
    used regardless, which strongly distorted cells occasionally need.
    """
    offsets, valid, inside = symmetric_offset_candidates(hbar1, hbar2, num_points)
    norm2 = np.where(valid, np.einsum("ncd,ncd->nc", offsets, offsets), np.inf)
    score = norm2 + np.where(inside, 0.0, 1e30)
    pick = np.argmin(score, axis=1)
    rows = np.arange(len(pick))
    chosen_ok = inside[rows, pick] if require_inside else valid[rows, pick]
    if not np.all(chosen_ok):
        bad = int(np.flatnonzero(~chosen_ok)[0])
        cands = [tuple(offsets[bad, c]) for c in range(2) if valid[bad, c]]
        raise RuleConstructionError(
            f"no admissible {num_points}-point rule for hbar="
            f"({np.atleast_1d(hbar1)[bad]:.6g}, {np.atleast_1d(hbar2)[bad]:.6g}); "
            f"candidate offsets {cands} place nodes outside the closed domain"
            if cands else
            f"no real symmetric node offsets for hbar="
            f"({np.atleast_1d(hbar1)[bad]:.6g}, {np.atleast_1d(hbar2)[bad]:.6g})"
        )
    return offsets[rows, pick]


def one_point_rule(iq: IntermediateQuad) -> QuadratureRule:
    """Barycenter rule with the domain area as weight; exact for affine functions."""
    return QuadratureRule(nodes=iq.barycenter[None, :], weights=np.array([iq.area]),
                          frame=FRAME_INTERMEDIATE)


def symmetric_rule(iq: IntermediateQuad, num_points: int,
                   require_inside: bool = True) -> QuadratureRule:
    """Equal-weight 2- or 3-point rule, symmetric about the barycenter.

    Exact for 1, x1, x2 and both components of the bubble gradient.  The
    three-point rule adds the barycenter itself as first node.
    """
    if num_points not in (2, 3):
        raise ValueError("symmetric rules exist for 2 or 3 points")
    off = select_offsets(np.array([iq.hbar1]), np.array([iq.hbar2]),
                         num_points, require_inside=require_inside)[0]
    bc = iq.barycenter
    if num_points == 2:
        nodes = np.stack([bc + off, bc - off])
    else:
        nodes = np.stack([bc, bc + off, bc - off])
    w = iq.area / num_points
    return QuadratureRule(nodes=nodes, weights=np.full(num_points, w),
                          frame=FRAME_INTERMEDIATE)


def closed_form_offsets(hh1: float, hh2: float, num_points: int):
    """Published radical expressions for the symmetric node offsets.

    Returns the two branches [(X1, Y1), (X2, Y2)]; a branch is None when its
    radicand is negative.  Unstable where hh1 or hh2 vanishes (use the
    moment-matching solver there); kept as an independent cross-check of the
    solver.
    """
    r1 = num_points * float(_gradient_mismatch(np.float64(hh1), np.float64(hh2)))
    r2 = num_points * float(_gradient_mismatch(np.float64(hh2), np.float64(hh1)))
    t1 = 7.0 * r1 * hh1 - 10.0 * r2 * hh2
    t2 = 13720.0 * hh1 ** 4 - 26603.0 * hh1 ** 2 * hh2 ** 2 + 13720.0 * hh2 ** 4
    t3 = (-70.0 * (r1 * r1 * hh1 * hh1 + r2 * r2 * hh2 * hh2)
          + 49.0 * (r1 * r1 * hh2 * hh2 + r2 * r2 * hh1 * hh1)
          + 51.0 * r1 * r2 * hh1 * hh2)
    t4 = 7.0 * (r1 * hh2 - r2 * hh1)
    t5 = (-1043.0 * r1 * hh1 * hh1 * hh2 + 980.0 * r1 * hh2 ** 3
          + 686.0 * r2 * hh1 ** 3 - 470.0 * r2 * hh1 * hh2 * hh2)
    t6 = 14.0 * (7.0 * hh1 * hh1 - 10.0 * hh2 * hh2)
    if t3 < 0 or t2 == 0 or t1 == 0:
        return [None, None]
    s3 = math.sqrt(t3)
    out = []
    for sgn in (1.0, -1.0):
        arg = (t5 + sgn * t6 * s3) / t2
        if arg < 0:
            out.append(None)
            continue
        y = math.sqrt(arg)
        x = -(t4 + sgn * s3) / t1 * y
        out.append((x, y))
    return out


def tensor_gauss(n: int) -> QuadratureRule:
    """n x n tensor-product Gauss-Legendre rule on the reference square [-1, 1]^2."""
    if n < 1:
        raise ValueError("need at least one point per direction")
    x, w = np.polynomial.legendre.leggauss(n)
    nodes = np.array([(xi, xj) for xi in x for xj in x])
    weights = np.array([wi * wj for wi in w for wj in w])
    return QuadratureRule(nodes=nodes, weights=weights, frame=FRAME_REFERENCE)


def map_rule_to_physical(rule: QuadratureRule, q: Quadrilateral):
    """Physical nodes and weights of a rule on the quadrilateral q.

    Intermediate-frame rules push forward through the affine map with the
    constant Jacobian factor; reference-frame rules go through the bilinear
    map with pointwise Jacobian determinants.
    """
    if rule.frame == FRAME_INTERMEDIATE:
        amap = build_affine(q)
        return amap.apply(rule.nodes), rule.weights * abs(amap.det)
    bmap = build_bilinear(q)
    dets = bmap.jacobian_det(rule.nodes)
    if np.any(dets <= 0):
        raise GeometryError("non-positive bilinear Jacobian at a quadrature node")
    return bmap.apply(rule.nodes), rule.weights * dets


def gradient_span_exact(iq: IntermediateQuad) -> np.ndarray:
    """Exact integrals of (1, x1, x2, dmu/dx1, dmu/dx2) from the moment formula."""
    hh1, hh2 = iq.hh1, iq.hh2
    m = lambda j, k: exact_moment(j, k, iq)
    i1 = (3.0 * m(2, 1) + m(0, 3) - 0.6 * hh1 * m(1, 1) - 0.3 * hh2 * m(0, 2)
          + 0.15 * (hh1 + hh2 - 2.0) * m(0, 1))
    i2 = (m(3, 0) + 3.0 * m(1, 2) - 0.3 * hh1 * m(2, 0) - 0.6 * hh2 * m(1, 1)
          + 0.15 * (hh1 + hh2 - 2.0) * m(1, 0))
    return np.array([iq.area, m(1, 0), m(0, 1), i1, i2])


def gradient_span_values(iq: IntermediateQuad, points: np.ndarray) -> np.ndarray:
    """Values of (1, x1, x2, dmu/dx1, dmu/dx2) at points (..., 2), shape (..., 5)."""
    p = np.asarray(points, dtype=float)
    g = grad_mu_bar(iq, p)
    return np.stack([np.ones(p.shape[:-1]), p[..., 0], p[..., 1],
                     g[..., 0], g[..., 1]], axis=-1)


def verify_exactness(rule: QuadratureRule, iq: IntermediateQuad) -> float:
    """Largest relative residual of the rule on the gradient span.

    Residuals are measured against the moment-formula integrals of
    (1, x1, x2, dmu/dx1, dmu/dx2) and normalized by max(1, |exact|).
    """
    if rule.frame != FRAME_INTERMEDIATE:
        raise ValueError("exactness is defined for intermediate-frame rules")
    vals = gradient_span_values(iq, rule.nodes)
    approx = rule.weights @ vals
    exact = gradient_span_exact(iq)
    return float(np.max(np.abs(approx - exact) / np.maximum(1.0, np.abs(exact))))


def quadrature_error(rule: QuadratureRule, q: Quadrilateral, f) -> float:
    """Quadrature error int_K f - rule(f) for a callable f(x1, x2) on q.

    The reference value uses a 6x6 tensor Gauss rule through the bilinear
    map, which dominates every polynomial integrand appearing here.
    """
    ref_pts, ref_w = map_rule_to_physical(tensor_gauss(6), q)
    pts, w = map_rule_to_physical(rule, q)
    ref = ref_w @ f(ref_pts[:, 0], ref_pts[:, 1])
    val = w @ f(pts[:, 0], pts[:, 1])
    return float(ref - val)


def format_rule(rule: QuadratureRule, iq: IntermediateQuad | None = None) -> str:
    """Plain-text dump: one ``x1 x2 weight`` line per node, full precision,
    plus an exactness report when the intermediate domain is given."""
    lines = [f"{x!r} {y!r} {w!r}" for (x, y), w in zip(rule.nodes, rule.weights)]
    if iq is not None and rule.frame == FRAME_INTERMEDIATE:
        lines.append(f"# max relative exactness residual on gradient span: "
                     f"{verify_exactness(rule, iq):.3e}")
    return "\n".join(lines)
