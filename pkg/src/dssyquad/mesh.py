"""Structured quadrilateral meshes of the unit square with random perturbation.

Vertices live on an (N+1) x (N+1) grid; cell (j, k) covers the logical box
[j, j+1] x [k, k+1] / N with local vertex order v1 = top-right, v2 = top-left,
v3 = bottom-left, v4 = bottom-right (counter-clockwise, diagonal pairs
v1/v3 and v2/v4).  Local edge i joins v_i and v_{i+1}, matching the shape
function numbering of the element module.

Perturbed meshes move only interior grid vertices, by (r1, r2)/N with r1, r2
drawn uniformly from [-r, r].  Draws come from a counter-based Philox
generator seeded explicitly and are consumed in row-major vertex order
(grid index j outer, k inner), so a (N, r, seed) triple reproduces the same
mesh on any platform.

Text format ("ncmesh v1"): a header line ``ncmesh v1 N``, then (N+1)^2 vertex
lines ``x1 x2``, then N^2 cell lines of four vertex indices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import NonConvexError, Quadrilateral, _hbars

_RESAMPLE_ROUNDS = 100


class MeshError(RuntimeError):
    """Mesh construction failed."""


@dataclass(frozen=True)
class Mesh:
    """Quadrilateral mesh with edge topology.

    vertices   : (nv, 2) float array
    cells      : (nc, 4) vertex indices per cell, local order as above
    edges      : (ne, 2) vertex index pairs, smaller index first
    cell_edges : (nc, 4) edge index of local edge i = (v_i, v_{i+1})
    boundary   : (ne,) bool, True for edges owned by a single cell
    n          : grid resolution the mesh was built from
    """

    vertices: np.ndarray
    cells: np.ndarray
    edges: np.ndarray
    cell_edges: np.ndarray
    boundary: np.ndarray
    n: int

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def cell_quad(self, c: int) -> Quadrilateral:
        return Quadrilateral(self.vertices[self.cells[c]])

    def cell_vertex_arrays(self):
        """The four vertex coordinate arrays (v1, v2, v3, v4), each (nc, 2)."""
        v = self.vertices[self.cells]
        return v[:, 0], v[:, 1], v[:, 2], v[:, 3]


@dataclass(frozen=True)
class DofMap:
    """Edge -> degree-of-freedom map; boundary edges are constrained to zero."""

    edge_to_dof: np.ndarray
    num_dofs: int


def _build_topology(vertices: np.ndarray, cells: np.ndarray, n: int) -> Mesh:
    edge_ids: dict[tuple[int, int], int] = {}
    cell_edges = np.empty((len(cells), 4), dtype=np.int64)
    for ci, cv in enumerate(cells):
        for le in range(4):
            a, b = int(cv[le]), int(cv[(le + 1) % 4])
            key = (a, b) if a < b else (b, a)
            idx = edge_ids.setdefault(key, len(edge_ids))
            cell_edges[ci, le] = idx
    edges = np.array(sorted(edge_ids, key=edge_ids.get), dtype=np.int64)
    counts = np.zeros(len(edges), dtype=np.int64)
    np.add.at(counts, cell_edges.ravel(), 1)
    if np.any(counts > 2):
        raise MeshError("an edge is shared by more than two cells")
    return Mesh(vertices=vertices, cells=cells, edges=edges,
                cell_edges=cell_edges, boundary=counts == 1, n=n)


def uniform_mesh(n: int) -> Mesh:
    """Uniform n x n grid of squares on the unit square."""
    if n < 1:
        raise ValueError("need at least one cell per direction")
    js, ks = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    vertices = np.stack([js.ravel(), ks.ravel()], axis=-1).astype(float) / n
    vid = lambda j, k: j * (n + 1) + k
    cells = np.array([
        [vid(j + 1, k + 1), vid(j, k + 1), vid(j, k), vid(j + 1, k)]
        for j in range(n) for k in range(n)
    ], dtype=np.int64)
    return _build_topology(vertices, cells, n)


def _interior_grid_ids(n: int) -> np.ndarray:
    """Vertex ids of interior grid points in row-major (j outer, k inner) order."""
    return np.array([j * (n + 1) + k
                     for j in range(1, n) for k in range(1, n)], dtype=np.int64)


def _check_cells_convex(mesh: Mesh) -> np.ndarray:
    """Indices of cells failing the strict convexity test."""
    bad = []
    for ci in range(mesh.num_cells):
        v = mesh.vertices[mesh.cells[ci]]
        try:
            hb1, hb2 = _hbars(v)
        except Exception:
            bad.append(ci)
            continue
        if hb1 > -1e-10 or hb2 > -1e-10:
            bad.append(ci)
    return np.array(bad, dtype=np.int64)


def perturb(mesh: Mesh, r: float, seed: int) -> Mesh:
    """Randomly displace the interior vertices of a structured mesh.

    Interior vertex (j, k)/n moves to (j + r1, k + r2)/n with r1, r2 uniform
    in [-r, r].  r below 0.25 keeps every cell convex; larger r triggers
    per-vertex resampling of offending cells, and a MeshError after that
    fails repeatedly.
    """
    if not 0.0 <= r < 0.5:
        raise ValueError("perturbation amplitude must lie in [0, 0.5)")
    n = mesh.n
    if r == 0.0 or n == 1:
        return mesh
    rng = np.random.default_rng(np.random.Philox(key=int(seed)))
    interior = _interior_grid_ids(n)
    vertices = mesh.vertices.copy()
    draws = rng.uniform(-r, r, size=(len(interior), 2))
    vertices[interior] += draws / n
    out = Mesh(vertices=vertices, cells=mesh.cells, edges=mesh.edges,
               cell_edges=mesh.cell_edges, boundary=mesh.boundary, n=n)
    interior_set = set(int(i) for i in interior)
    for _ in range(_RESAMPLE_ROUNDS):
        bad = _check_cells_convex(out)
        if len(bad) == 0:
            return out
        redraw = sorted({int(v) for ci in bad for v in out.cells[ci]
                         if int(v) in interior_set})
        for vtx in redraw:
            j, k = divmod(vtx, n + 1)
            vertices[vtx] = (np.array([j, k]) + rng.uniform(-r, r, size=2)) / n
        out = Mesh(vertices=vertices, cells=mesh.cells, edges=mesh.edges,
                   cell_edges=mesh.cell_edges, boundary=mesh.boundary, n=n)
    raise MeshError(f"could not restore convexity after {_RESAMPLE_ROUNDS} "
                    f"resampling rounds (r={r})")


def build_dofmap(mesh: Mesh) -> DofMap:
    """Number the interior edges; boundary edges map to -1 (value fixed to zero)."""
    edge_to_dof = np.full(mesh.num_edges, -1, dtype=np.int64)
    interior = ~mesh.boundary
    edge_to_dof[interior] = np.arange(int(interior.sum()))
    return DofMap(edge_to_dof=edge_to_dof, num_dofs=int(interior.sum()))


def mesh_to_text(mesh: Mesh) -> str:
    """Serialize the mesh in the ncmesh v1 text format."""
    lines = [f"ncmesh v1 {mesh.n}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices]
    lines += [" ".join(str(int(v)) for v in cv) for cv in mesh.cells]
    return "\n".join(lines) + "\n"


def save_text(mesh: Mesh, path) -> None:
    """Write the mesh in the ncmesh v1 text format."""
    with open(path, "w") as fh:
        fh.write(mesh_to_text(mesh))


def load_text(path) -> Mesh:
    """Read a mesh written by save_text and rebuild its topology."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    head = lines[0].split()
    if head[:2] != ["ncmesh", "v1"]:
        raise MeshError(f"unrecognized mesh header: {lines[0]!r}")
    n = int(head[2])
    nv, nc = (n + 1) ** 2, n * n
    if len(lines) != 1 + nv + nc:
        raise MeshError("mesh file has the wrong number of lines")
    vertices = np.array([[float(t) for t in ln.split()] for ln in lines[1:1 + nv]])
    cells = np.array([[int(t) for t in ln.split()] for ln in lines[1 + nv:]],
                     dtype=np.int64)
    return _build_topology(vertices, cells, n)
