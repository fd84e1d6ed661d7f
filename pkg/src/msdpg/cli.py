"""Command line entry point ``msdpg``.

Exit status: 0 on success, 2 when some methods failed, 1 on configuration errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .coefficient import NonEllipticError, generate_lognormal, make_field, save_grid_field, write_pgm
from .experiments import ConfigError, RunConfig, read_csv, run_experiment, run_lshape, run_sweep
from .mesh import DOMAINS, MeshError, build_coarse_fine_map, build_structured_mesh, dump_mesh
from .methods import METHODS

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML run configuration")
    p.add_argument("--domain", choices=DOMAINS)
    p.add_argument("--eps", type=float)
    p.add_argument("--coarse-n", type=int)
    p.add_argument("--fine-n", type=int)
    p.add_argument("--beta", type=float, choices=(-1.0, 0.0, 1.0))
    p.add_argument("--gamma0", type=float)
    p.add_argument("--rho", choices=("eps", "h"), dest="rho_mode")
    p.add_argument("--factor", type=float)
    p.add_argument("--delta0", type=float)
    p.add_argument("--d-tilde", type=float, help="fixed oversampling distance (overrides factor)")
    p.add_argument("--seed", type=int)
    p.add_argument("--methods", help=f"comma list from {','.join(METHODS)}")
    p.add_argument("--out", help="output directory")
    p.add_argument("--name", help="basename of the CSV")
    p.add_argument("--workers", type=int, help="threads for basis construction")
    p.add_argument("--timings", action="store_true", default=None, dest="record_timings",
                   help="write T1/T2 (makes the CSV run-dependent)")
    p.add_argument("--no-render", action="store_false", default=None, dest="render")


def _config(args, **defaults) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig.from_mapping(defaults)
    over = {k: getattr(args, k, None) for k in (
        "domain", "eps", "coarse_n", "fine_n", "beta", "gamma0", "rho_mode", "factor", "delta0", "d_tilde",
        "seed", "out", "name", "workers", "record_timings", "render")}
    if args.methods:
        over["methods"] = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    return cfg.with_overrides(**over)


def _report(res) -> int:
    for row in read_csv(res.csv_path):
        print(f"{row['method']:14s} L2={row['err_L2']}  Linf={row['err_Linf']}  energy={row['err_energy']}")
    print(f"wrote {res.csv_path}")
    return EXIT_PARTIAL if res.failures else EXIT_OK


def cmd_solve(args):
    return _report(run_experiment(_config(args).validate()))


def cmd_sweep(args):
    cfg = _config(args)
    if args.param:
        values = [float(v) for v in args.values.split(",")] if args.values else None
        if not values:
            raise ConfigError("--param needs --values")
        cfg = cfg.with_overrides(sweep={"param": args.param, "values": values})
    return _report(run_sweep(cfg))


def cmd_lshape(args):
    cfg = _config(args, domain="l-shape", coarse_n=16, fine_n=160, methods=["MsPGM", "OMsPGM", "MsDFEM", "MsDPGM"],
                  name="lshape")
    return _report(run_lshape(cfg))


def cmd_random_field(args):
    fld = generate_lognormal(args.n, args.sigma2, args.l1, args.l2, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_grid_field(fld, out / "field.txt")
    write_pgm(fld.values, out / "field.pgm")
    from .render import render_grid

    render_grid(fld.values, (0, 1, 0, 1), out / "field.svg", title=f"log a, seed {args.seed}")
    v = fld.values
    print(f"n={args.n} min={v.min():.4g} max={v.max():.4g} contrast={v.max() / v.min():.4g}")
    print(f"wrote {out}/field.txt, field.pgm, field.svg")
    return EXIT_OK


def cmd_cell_problem(args):
    from .homogenization import solve_cell_problem

    spec = {"kind": args.field}
    if args.field == "constant":
        spec["value"] = args.value
    elif args.field == "periodic":
        spec["eps"] = 1.0
    cell = solve_cell_problem(make_field(spec), args.n_cell)
    a = cell.a_star
    print(f"a* = [[{a[0, 0]:.8f}, {a[0, 1]:.3e}], [{a[1, 0]:.3e}, {a[1, 1]:.8f}]]")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        from .render import render_triangles

        for j in (0, 1):
            np.savetxt(out / f"chi{j + 1}.txt", np.column_stack([cell.mesh.nodes, cell.chi[j]]), fmt="%.17g",
                       header="y1 y2 chi")
            render_triangles(cell.mesh.nodes, cell.mesh.triangles, cell.chi[j], out / f"chi{j + 1}.svg",
                             title=f"chi^{j + 1}")
        print(f"wrote {out}/chi1.txt, chi2.txt")
    return EXIT_OK


def cmd_dump_basis(args):
    from .msbasis import build_oversampling_patch, compute_classical_basis, compute_oversampling_basis
    from .render import render_triangles

    cfg = _config(args).validate()
    coarse = build_structured_mesh(cfg.domain, cfg.coarse_n)
    if not 0 <= args.element < coarse.n_triangles:
        raise ConfigError(f"element must lie in [0, {coarse.n_triangles})")
    cf = build_coarse_fine_map(coarse, build_structured_mesh(cfg.domain, cfg.fine_n))
    fld = cfg.build_field()
    K = args.element
    if args.classical:
        b = compute_classical_basis(cf, K, fld, tol=cfg.tol)
    else:
        factor = 1.0 + 3.0 * cfg.delta0 if cfg.delta0 is not None else cfg.factor
        patch = build_oversampling_patch(coarse, K, cfg.fine_n, factor)
        b = compute_oversampling_basis(cf, K, patch, fld, tol=cfg.tol)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    xy = cf.fine_node_coords[K]
    tris = cf.template(K).triangles
    for i in range(3):
        stem = out / f"basis_K{K}_{i}"
        np.savetxt(f"{stem}.txt", np.column_stack([xy, b.values[i]]), fmt="%.17g", header="x y psi")
        render_triangles(xy, tris, b.values[i], f"{stem}.svg", title=f"element {K}, function {i}")
    print(f"{b.provenance}: wrote {out}/basis_K{K}_[0-2].txt/.svg")
    return EXIT_OK


def cmd_dump_mesh(args):
    mesh = build_structured_mesh(args.domain, args.n)
    dump_mesh(mesh, args.out)
    print(f"{mesh.n_nodes} nodes, {mesh.n_triangles} triangles, {mesh.n_edges} edges -> {args.out}")
    return EXIT_OK


def cmd_solve_reference(args):
    from .fem import reference_solution
    from .render import render_p1

    cfg = _config(args).validate()
    u = reference_solution(cfg.domain, cfg.build_field(), cfg.source, cfg.boundary_data, cfg.fine_n, tol=cfg.tol)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "reference.txt", u.values, fmt="%.17g", header=f"mesh {u.mesh.signature()} nodes {u.mesh.n_nodes}")
    render_p1(u, out / "reference.svg", title="fine reference")
    print(f"max u = {u.values.max():.6g}; wrote {out}/reference.txt, reference.svg")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="msdpg", description="Multiscale DG / Petrov-Galerkin experiment runner")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="compare methods at one configuration")
    _run_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="sweep gamma0, h or delta0")
    _run_flags(p)
    p.add_argument("--param", choices=("gamma0", "h", "delta0"))
    p.add_argument("--values", help="comma list, e.g. 10,100,1000")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("lshape", help="L-shaped domain with corner-singular boundary data")
    _run_flags(p)
    p.set_defaults(func=cmd_lshape)

    p = sub.add_parser("random-field", help="generate a log-normal field")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--l1", type=float, default=0.01)
    p.add_argument("--l2", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_random_field)

    p = sub.add_parser("cell-problem", help="periodic cell problem and effective tensor")
    p.add_argument("--field", choices=("layered", "periodic", "constant"), default="layered")
    p.add_argument("--value", type=float, default=1.0, help="value of the constant field")
    p.add_argument("--n-cell", type=int, default=256)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cell_problem)

    p = sub.add_parser("dump-basis", help="write the three basis functions of one coarse element")
    _run_flags(p)
    p.add_argument("--element", type=int, required=True)
    p.add_argument("--classical", action="store_true", help="no oversampling")
    p.set_defaults(func=cmd_dump_basis)

    p = sub.add_parser("dump-mesh", help="write a structured mesh in plain text")
    p.add_argument("--domain", choices=DOMAINS, default="unit-square")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--out", default="mesh.txt")
    p.set_defaults(func=cmd_dump_mesh)

    p = sub.add_parser("solve-reference", help="fine P1 reference solution")
    _run_flags(p)
    p.set_defaults(func=cmd_solve_reference)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MeshError, NonEllipticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
