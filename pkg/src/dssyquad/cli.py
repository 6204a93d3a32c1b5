"""Command-line interface: convergence bench, rule inspection, mesh dumps."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import ExperimentConfig, format_table, plot_convergence, rows_to_csv, \
    rows_to_jsonl, run_convergence
from .assembly import RULE_NAMES
from .geometry import IntermediateQuad
from .mesh import build_dofmap, mesh_to_text, perturb, save_text, uniform_mesh
from .quadrature import format_rule, one_point_rule, symmetric_rule


def _parse_n_list(text: str) -> tuple:
    try:
        values = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse N list {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty N list")
    return values


def _cmd_bench(args) -> int:
    cfg = ExperimentConfig(
        n_values=args.n, rule=args.rule, perturbation=args.perturb,
        ensembles=args.ensembles, base_seed=args.seed, cg_tol=args.tol,
        jobs=args.jobs,
    )
    progress = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    rows = run_convergence(cfg, progress=progress)
    print(format_table(rows, cfg.rule), end="")
    if args.out:
        out = Path(args.out)
        out.write_text(rows_to_csv(rows))
        print(f"wrote {out}", file=sys.stderr)
        if args.plot:
            fig = out.with_suffix(".png")
            plot_convergence(rows, cfg.rule, fig)
            print(f"wrote {fig}", file=sys.stderr)
        if args.jsonl:
            jl = out.with_suffix(".jsonl")
            jl.write_text(rows_to_jsonl(rows))
            print(f"wrote {jl}", file=sys.stderr)
    elif args.plot or args.jsonl:
        print("--plot/--jsonl need --out to name the files", file=sys.stderr)
        return 2
    if not all(r.converged for r in rows):
        print("warning: CG failed to converge on at least one ensemble member",
              file=sys.stderr)
    return 0


def _cmd_rule_dump(args) -> int:
    iq = IntermediateQuad(args.h1, args.h2)
    if args.points == 1:
        rule = one_point_rule(iq)
    else:
        rule = symmetric_rule(iq, args.points,
                              require_inside=not args.allow_outside)
    print(format_rule(rule, iq))
    return 0


def _cmd_mesh_dump(args) -> int:
    mesh = perturb(uniform_mesh(args.n), args.perturb, args.seed)
    if args.out:
        save_text(mesh, args.out)
        print(f"wrote {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(mesh_to_text(mesh))
    dofmap = build_dofmap(mesh)
    print(f"# {mesh.num_vertices} vertices, {mesh.num_cells} cells, "
          f"{mesh.num_edges} edges, {dofmap.num_dofs} dofs", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dssyquad",
        description="Nonconforming quadrilateral elements with low-point "
                    "quadrature rules: convergence bench and inspection tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run the convergence study")
    b.add_argument("--rule", choices=RULE_NAMES, default="3pt")
    b.add_argument("--n", type=_parse_n_list, default=(4, 8, 16, 32, 64, 128),
                   metavar="N1,N2,...", help="comma-separated grid resolutions")
    b.add_argument("--perturb", type=float, default=0.2,
                   help="vertex perturbation amplitude r (default 0.2)")
    b.add_argument("--ensembles", type=int, default=20)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--tol", type=float, default=1e-7,
                   help="CG relative-residual tolerance")
    b.add_argument("--jobs", type=int, default=1,
                   help="parallel ensemble workers (DSSYQUAD_SEQUENTIAL=1 overrides)")
    b.add_argument("--out", help="write CSV here")
    b.add_argument("--plot", action="store_true",
                   help="also render a log-log convergence figure next to --out")
    b.add_argument("--jsonl", action="store_true",
                   help="also write JSON-lines rows next to --out")
    b.add_argument("--verbose", action="store_true")
    b.set_defaults(func=_cmd_bench)

    r = sub.add_parser("rule-dump", help="print nodes and weights of a rule")
    r.add_argument("--h1", type=float, required=True, help="first shape parameter (< 0)")
    r.add_argument("--h2", type=float, required=True, help="second shape parameter (< 0)")
    r.add_argument("--points", type=int, choices=(1, 2, 3), default=2)
    r.add_argument("--allow-outside", action="store_true",
                   help="accept node pairs that leave the closed domain")
    r.set_defaults(func=_cmd_rule_dump)

    m = sub.add_parser("mesh-dump", help="write a perturbed mesh in text format")
    m.add_argument("--n", type=int, required=True)
    m.add_argument("--perturb", type=float, default=0.0)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out")
    m.set_defaults(func=_cmd_mesh_dump)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
