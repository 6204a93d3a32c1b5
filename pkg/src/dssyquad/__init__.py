"""Nonconforming 4-DOF quadrilateral finite elements on intermediate domains,
with barycenter-symmetric 2- and 3-point quadrature rules of matching
precision, and a convergence bench for a variable-coefficient Dirichlet
problem on randomly perturbed meshes."""

from .geometry import (
    AffineMap2,
    BilinearMap,
    GeometryError,
    IntermediateQuad,
    NonConvexError,
    Quadrilateral,
    build_affine,
    build_bilinear,
    intermediate_params,
    line_functional_1,
    line_functional_2,
)
from .element import (
    DssyBasis,
    EdgeFunctionalKind,
    build_basis,
    edge_functional,
    grad_mu_bar,
    mu_bar,
    qbar,
    unisolvency_det,
)
from .quadrature import (
    QuadratureRule,
    RuleConstructionError,
    exact_moment,
    map_rule_to_physical,
    one_point_rule,
    quadrature_error,
    symmetric_rule,
    tensor_gauss,
    verify_exactness,
)
from .mesh import DofMap, Mesh, MeshError, build_dofmap, load_text, perturb, \
    save_text, uniform_mesh
from .assembly import (
    RULE_NAMES,
    SolveReport,
    SparseSystem,
    assemble,
    cell_rule,
    cg_solve,
    compute_errors,
    element_matrices,
    interpolate_dofs,
)
from .problem import builtin_problem
from .bench import ExperimentConfig, TableRow, run_convergence

__version__ = "0.1.0"

__all__ = [
    "AffineMap2", "BilinearMap", "GeometryError", "IntermediateQuad",
    "NonConvexError", "Quadrilateral", "build_affine", "build_bilinear",
    "intermediate_params", "line_functional_1", "line_functional_2",
    "DssyBasis", "EdgeFunctionalKind", "build_basis", "edge_functional",
    "grad_mu_bar", "mu_bar", "qbar", "unisolvency_det",
    "QuadratureRule", "RuleConstructionError", "exact_moment",
    "map_rule_to_physical", "one_point_rule", "quadrature_error",
    "symmetric_rule", "tensor_gauss", "verify_exactness",
    "DofMap", "Mesh", "MeshError", "build_dofmap", "load_text", "perturb",
    "save_text", "uniform_mesh",
    "RULE_NAMES", "SolveReport", "SparseSystem", "assemble", "cell_rule",
    "cg_solve", "compute_errors", "element_matrices", "interpolate_dofs",
    "builtin_problem",
    "ExperimentConfig", "TableRow", "run_convergence",
]
