"""Convergence study driver: perturbed meshes, ensemble averaging, tables.

For each grid resolution the driver solves the built-in test problem on an
ensemble of randomly perturbed meshes (ensemble member e uses seed
``base_seed + e`` for every resolution, so reduction orders can also be
averaged per member), averages the broken-norm errors, and derives reduction
orders log2(err(N/2) / err(N)) between consecutive rows.  Output formats:
aligned text, CSV, JSON lines, and an optional log-log convergence figure
rendered to a file next to the CSV.

Runs are deterministic: seeding is explicit and the per-ensemble results are
reduced in seed order even when ensembles are computed in parallel.  Set
``jobs > 1`` to distribute ensemble members over processes; the environment
variable DSSYQUAD_SEQUENTIAL=1 forces sequential execution regardless.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .assembly import RULE_NAMES, assemble, cg_solve, compute_errors
from .mesh import build_dofmap, perturb, uniform_mesh
from .problem import builtin_problem


@dataclass(frozen=True)
class ExperimentConfig:
    n_values: tuple = (4, 8, 16, 32, 64, 128)
    rule: str = "3pt"
    perturbation: float = 0.2
    ensembles: int = 20
    base_seed: int = 0
    cg_tol: float = 1e-7
    jobs: int = 1

    def __post_init__(self):
        if list(self.n_values) != sorted(set(self.n_values)):
            raise ValueError("n_values must be strictly increasing")
        if self.ensembles < 1:
            raise ValueError("need at least one ensemble member")
        if self.rule not in RULE_NAMES:
            raise ValueError(f"unknown rule {self.rule!r}; expected one of {RULE_NAMES}")
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))


@dataclass
class TableRow:
    n: int
    h1_error: float
    h1_order: float | None
    l2_error: float
    l2_order: float | None
    cg_iterations: float
    h1_order_mean: float | None = None
    l2_order_mean: float | None = None
    converged: bool = True


def _solve_ensemble(args):
    n, rule, r, seed, tol = args
    mesh = perturb(uniform_mesh(n), r, seed)
    dofmap = build_dofmap(mesh)
    prob = builtin_problem()
    system = assemble(mesh, dofmap, rule, prob.kappa, prob.f)
    solution, report = cg_solve(system, tol=tol)
    h1, l2 = compute_errors(mesh, dofmap, solution, prob.u_exact, prob.grad_u_exact)
    return h1, l2, report.iterations, report.converged


def run_convergence(cfg: ExperimentConfig, progress=None) -> list[TableRow]:
    """Run the convergence study and return one table row per resolution."""
    sequential = cfg.jobs <= 1 or os.environ.get("DSSYQUAD_SEQUENTIAL") == "1"
    results: dict[int, list] = {}
    for n in cfg.n_values:
        tasks = [(n, cfg.rule, cfg.perturbation, cfg.base_seed + e, cfg.cg_tol)
                 for e in range(cfg.ensembles)]
        if sequential:
            outs = [_solve_ensemble(t) for t in tasks]
        else:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                outs = list(pool.map(_solve_ensemble, tasks))
        results[n] = outs
        if progress is not None:
            h1m = float(np.mean([o[0] for o in outs]))
            progress(f"rule={cfg.rule} N={n}: mean H1 error {h1m:.4e}")

    rows: list[TableRow] = []
    prev_n, prev_h1, prev_l2, prev_outs = None, None, None, None
    for n in cfg.n_values:
        outs = results[n]
        h1 = float(np.mean([o[0] for o in outs]))
        l2 = float(np.mean([o[1] for o in outs]))
        iters = float(np.mean([o[2] for o in outs]))
        ok = all(o[3] for o in outs)
        h1_order = l2_order = None
        h1_order_mean = l2_order_mean = None
        if prev_n is not None:
            ratio = math.log2(n / prev_n)
            h1_order = math.log2(prev_h1 / h1) / ratio
            l2_order = math.log2(prev_l2 / l2) / ratio
            h1_order_mean = float(np.mean([
                math.log2(p[0] / c[0]) / ratio for p, c in zip(prev_outs, outs)]))
            l2_order_mean = float(np.mean([
                math.log2(p[1] / c[1]) / ratio for p, c in zip(prev_outs, outs)]))
        rows.append(TableRow(n=n, h1_error=h1, h1_order=h1_order,
                             l2_error=l2, l2_order=l2_order, cg_iterations=iters,
                             h1_order_mean=h1_order_mean, l2_order_mean=l2_order_mean,
                             converged=ok))
        prev_n, prev_h1, prev_l2, prev_outs = n, h1, l2, outs
    return rows


_CSV_HEADER = ("n,h1_error,h1_order,l2_error,l2_order,cg_iterations,"
               "h1_order_mean,l2_order_mean,converged")


def _csv_value(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    return repr(x)


def rows_to_csv(rows: list[TableRow]) -> str:
    lines = [_CSV_HEADER]
    for r in rows:
        lines.append(",".join([
            str(r.n), _csv_value(r.h1_error), _csv_value(r.h1_order),
            _csv_value(r.l2_error), _csv_value(r.l2_order),
            _csv_value(r.cg_iterations), _csv_value(r.h1_order_mean),
            _csv_value(r.l2_order_mean), _csv_value(r.converged),
        ]))
    return "\n".join(lines) + "\n"


def rows_to_jsonl(rows: list[TableRow]) -> str:
    return "\n".join(json.dumps(vars(r), sort_keys=True) for r in rows) + "\n"


def format_table(rows: list[TableRow], rule: str) -> str:
    """Aligned human-readable convergence table."""
    out = [f"rule = {rule}",
           f"{'N':>5} {'H1 error':>12} {'order':>7} {'L2 error':>12} {'order':>7} "
           f"{'CG iters':>9}"]
    for r in rows:
        h1o = f"{r.h1_order:7.3f}" if r.h1_order is not None else " " * 7
        l2o = f"{r.l2_order:7.3f}" if r.l2_order is not None else " " * 7
        flag = "" if r.converged else "  [CG not converged]"
        out.append(f"{r.n:>5} {r.h1_error:12.4e} {h1o} {r.l2_error:12.4e} {l2o} "
                   f"{r.cg_iterations:9.1f}{flag}")
    return "\n".join(out) + "\n"


def plot_convergence(rows: list[TableRow], rule: str, path) -> None:
    """Render the log-log error plot with first/second order guides to a file."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ns = np.array([r.n for r in rows], dtype=float)
    h = 1.0 / ns
    h1 = np.array([r.h1_error for r in rows])
    l2 = np.array([r.l2_error for r in rows])
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.loglog(h, h1, "o-", label="broken $H^1$ seminorm")
    ax.loglog(h, l2, "s-", label="$L^2$ norm")
    ax.loglog(h, h1[-1] * (h / h[-1]), "k--", lw=0.8, label="order 1")
    ax.loglog(h, l2[-1] * (h / h[-1]) ** 2, "k:", lw=0.8, label="order 2")
    ax.set_xlabel("$h = 1/N$")
    ax.set_ylabel("error")
    ax.set_title(f"Convergence, rule {rule}")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
