"""Command-line front end.

Subcommands write data files only (CSV with a header row, JSON one object per
line); plotting is left to the user. Exit codes: 0 success, 2 usage,
3 numerical failure, 4 resource cap.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .errors import LocalLagrangeError
from .geometry import (
    Manifold,
    NeighborIndex,
    NodeSet,
    gen_fibonacci,
    gen_icosahedral,
    gen_torus,
    mesh_stats,
    read_nodes,
    write_nodes,
)
from .interpolate import DENSE_CAP, assemble, lagrange_all
from .kernels import KernelSpec, parse_kernel
from .localbasis import (
    TruncationSpec,
    build_local_basis,
    footprint_count,
    retained_set,
    truncate_lagrange,
    truncation_error,
)
from .solver import GmresConfig, PreconditionedOperator, gmres

logger = logging.getLogger("local_lagrange")

EXIT_USAGE = 2
GRID_N0 = 200
GRID_N1 = 400


class UsageError(Exception):
    pass


# -- helpers ---------------------------------------------------------------


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _kernel(text: str) -> KernelSpec:
    try:
        return parse_kernel(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10g}"


def _write_csv(path: Path, header: list[str], rows, args, meta: dict | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if not args.no_timestamp:
            fh.write(f"# generated: {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}\n")
        for key, val in (meta or {}).items():
            fh.write(f"# {key}: {val}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) if not isinstance(x, str) else x for x in row])


def _make_nodes(args, manifold_hint: Manifold | None = None) -> NodeSet:
    if getattr(args, "nodes", None):
        return read_nodes(args.nodes)
    family = args.family
    if family is None:
        family = "torus" if manifold_hint is Manifold.TORUS else "fibonacci"
    if family == "icosahedral":
        if args.level is None:
            raise UsageError("--family icosahedral needs --level")
        return gen_icosahedral(args.level)
    if args.n is None:
        raise UsageError(f"--family {family} needs --n")
    if family == "fibonacci":
        return gen_fibonacci(args.n)
    return gen_torus(args.n, args.seed)


def _check_pair(spec: KernelSpec, nodes: NodeSet) -> None:
    if spec.manifold is not nodes.manifold:
        raise UsageError(f"kernel {spec} needs {spec.manifold.value} nodes, got {nodes.manifold.value}")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands --------------------------------------------------------------


def cmd_nodes(args) -> int:
    nodes = _make_nodes(args)
    out = _out_dir(args)
    write_nodes(out / "nodes.txt", nodes)
    stats = mesh_stats(nodes, args.n_probe)
    record = {"N": nodes.N, "manifold": nodes.manifold.value, **stats.as_dict()}
    (out / "stats.json").write_text(json.dumps(record) + "\n", encoding="utf-8")
    print(json.dumps(record))
    return 0


def cmd_lagrange(args) -> int:
    spec = args.kernel
    nodes = _make_nodes(args, spec.manifold)
    _check_pair(spec, nodes)
    out = _out_dir(args)
    stats = mesh_stats(nodes)
    L = lagrange_all(assemble(spec, nodes), dense_cap=args.dense_cap)
    meta = {"kernel": str(spec), "floor": args.floor, "s_min": args.s_min}

    if nodes.manifold is Manifold.SPHERE2:
        xi = nodes.nearest_node([0.0, 0.0, 1.0])
        profile = diag.latitudinal_max(spec, nodes, L.column(xi), args.n0, args.n1,
                                       pole=nodes.points[xi])
        fit_l = diag.lagrange_decay(profile, stats, args.floor, args.s_min)
        fit_c = diag.coefficient_decay(L, nodes, xi, stats, args.floor, args.s_min, spec=spec)
        header = ["N", "h", "q", "rho", "nu_L", "C_L", "r2_L", "nu_c", "C_c", "r2_c", "C_c_scaled"]
        row = [nodes.N, stats.h, stats.q, stats.rho, fit_l.nu, fit_l.C, fit_l.r2,
               fit_c.nu, fit_c.C, fit_c.r2, fit_c.C_scaled]
        _write_csv(out / "decay.csv", header, [row], args,
                   {**meta, "center": xi, "grid": f"n0={args.n0} n1={args.n1}"})
        _write_csv(out / "profile.csv", ["latitude_rad", "max_abs_value"],
                   zip(profile.latitudes, profile.values), args)
        d = nodes.distance(nodes.points[xi], nodes.points)
        order = np.argsort(d, kind="stable")
        _write_csv(out / "coefficients.csv", ["distance_over_h", "abs_coefficient"],
                   ((d[i] / stats.h, abs(L.A[i, xi])) for i in order if i != xi), args)
        print(json.dumps({"N": nodes.N, "nu_L": fit_l.nu, "nu_c": fit_c.nu}))
        return 0

    xi = nodes.nearest_node([4.0, 0.0, 0.0])
    fit_v = diag.torus_coefficient_decay(L, nodes, xi, stats, "v", args.band, args.floor, args.s_min)
    fit_u = diag.torus_coefficient_decay(L, nodes, xi, stats, "u", args.band, args.floor, args.s_min)
    header = ["N", "h", "q", "rho", "nu_lat", "C_lat", "r2_lat", "nu_long", "C_long", "r2_long"]
    row = [nodes.N, stats.h, stats.q, stats.rho, fit_v.nu, fit_v.C, fit_v.r2,
           fit_u.nu, fit_u.C, fit_u.r2]
    _write_csv(out / "decay.csv", header, [row], args, {**meta, "center": xi, "band_over_h": args.band})
    du, dv = diag.torus_directional_distances(nodes, xi)
    for name, along, across in (("latitudinal", dv, du), ("longitudinal", du, dv)):
        idx = np.flatnonzero((across <= args.band * stats.h) & (np.arange(nodes.N) != xi))
        idx = idx[np.argsort(along[idx], kind="stable")]
        _write_csv(out / f"coefficients_{name}.csv", ["distance_over_h", "abs_coefficient"],
                   ((along[i] / stats.h, abs(L.A[i, xi])) for i in idx), args)
    print(json.dumps({"N": nodes.N, "nu_lat": fit_v.nu, "nu_long": fit_u.nu}))
    return 0


def cmd_precond(args) -> int:
    spec = args.kernel
    if spec.manifold is not Manifold.SPHERE2:
        raise UsageError("precond runs on icosahedral sphere nodes")
    out = _out_dir(args)
    rows = []
    reports = []
    for level in args.levels:
        nodes = gen_icosahedral(level)
        M = footprint_count(nodes.N) if args.m == "auto" else int(args.m)
        basis = build_local_basis(spec, nodes, NeighborIndex(nodes), M)
        op = PreconditionedOperator(spec, nodes, basis, block=args.block)
        f = np.random.default_rng(args.seed).uniform(-1.0, 1.0, nodes.N)
        for tol in args.tols:
            t0 = time.perf_counter()
            _, rep = gmres(op.apply, f, f, GmresConfig(tol=tol, max_iter=args.max_iter))
            wall = time.perf_counter() - t0
            iters = rep.iterations if rep.converged else -1
            shown = float("nan") if args.no_timestamp else wall
            rows.append([nodes.N, M, f"{tol:g}", iters, shown])
            reports.append({"n": nodes.N, "m": M, "tol": tol, "iterations": iters,
                            "residuals": rep.residual_history, "wall_time_s": shown})
            logger.info("N=%d M=%d tol=%g iterations=%d (%.1fs)", nodes.N, M, tol, iters, wall)
    _write_csv(out / "iterations.csv", ["N", "M", "tol", "iterations", "wall_time_s"], rows, args,
               {"kernel": str(spec), "seed": args.seed})
    with open(out / "reports.jsonl", "w", encoding="utf-8") as fh:
        for rep in reports:
            fh.write(json.dumps(rep) + "\n")
    for r in rows:
        print(",".join(_fmt(x) if not isinstance(x, str) else x for x in r))
    return 0


def cmd_truncate(args) -> int:
    spec = args.kernel
    nodes = _make_nodes(args, spec.manifold)
    _check_pair(spec, nodes)
    if nodes.manifold is not Manifold.SPHERE2:
        raise UsageError("truncate evaluates on a latitude-longitude grid and needs sphere nodes")
    out = _out_dir(args)
    stats = mesh_stats(nodes)
    L = lagrange_all(assemble(spec, nodes), dense_cap=args.dense_cap)
    xi = nodes.nearest_node([0.0, 0.0, 1.0])
    _, grid = diag.lat_lon_grid(args.n0, args.n1)
    grid = grid.reshape(-1, 3)
    index = NeighborIndex(nodes)
    rows = []
    for K in args.k_trunc:
        tspec = TruncationSpec.by_radius(K)
        col = truncate_lagrange(L, nodes, xi, tspec, stats.h, index)
        err = truncation_error(spec, nodes, L.A[:, xi], col, grid)
        rows.append([_fmt(K), tspec.radius(stats.h), col.nnz, err])
    if args.m is not None:
        M = footprint_count(nodes.N) if args.m == "auto" else int(args.m)
        col = truncate_lagrange(L, nodes, xi, TruncationSpec.by_count(M), stats.h, index)
        far = retained_set(nodes, xi, TruncationSpec.by_count(M), stats.h, index)[-1]
        r = float(nodes.distance(nodes.points[xi], nodes.points[far][None])[0])
        rows.append([f"count={M}", r, col.nnz,
                     truncation_error(spec, nodes, L.A[:, xi], col, grid)])
    _write_csv(out / "truncation.csv", ["K", "r", "retained", "sup_error"], rows, args,
               {"kernel": str(spec), "N": nodes.N, "h": _fmt(stats.h), "center": xi,
                "grid": f"n0={args.n0} n1={args.n1}"})
    for r in rows:
        print(",".join(_fmt(x) if not isinstance(x, str) else x for x in r))
    return 0


# -- parser ----------------------------------------------------------------


def _add_node_flags(p, families=("icosahedral", "fibonacci", "torus")):
    p.add_argument("--family", choices=families)
    p.add_argument("--level", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nodes", help="read nodes from a node file instead of generating them")


def _add_common(p):
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--no-timestamp", action="store_true",
                   help="omit clock-derived output (timestamp line, wall times)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="local-lagrange", allow_abbrev=False,
                                     description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("nodes", allow_abbrev=False, help="generate a node set and its mesh statistics")
    _add_node_flags(p)
    p.add_argument("--n-probe", type=int, help="probe points for the fill distance (default 100 N)")
    _add_common(p)
    p.set_defaults(func=cmd_nodes)

    p = sub.add_parser("lagrange", allow_abbrev=False, help="full Lagrange function and decay fits")
    p.add_argument("--kernel", type=_kernel, default=parse_kernel("s2-tps:m=2"))
    _add_node_flags(p)
    p.add_argument("--n0", type=int, default=GRID_N0)
    p.add_argument("--n1", type=int, default=GRID_N1)
    p.add_argument("--floor", type=float, default=diag.DEFAULT_FLOOR)
    p.add_argument("--s-min", type=float, default=diag.DEFAULT_S_MIN)
    p.add_argument("--band", type=float, default=1.0, help="torus strip half-width in units of h")
    p.add_argument("--dense-cap", type=int, default=DENSE_CAP)
    _add_common(p)
    p.set_defaults(func=cmd_lagrange)

    p = sub.add_parser("precond", allow_abbrev=False, help="GMRES iterations with the local-basis preconditioner")
    p.add_argument("--kernel", type=_kernel, default=parse_kernel("s2-tps:m=2"))
    p.add_argument("--levels", type=_int_list, default=[3, 4])
    p.add_argument("--tols", "--tol", dest="tols", type=_float_list, default=[1e-6, 1e-8])
    p.add_argument("--m", default="auto", help="footprint size or 'auto'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--block", type=int, default=512)
    p.add_argument("--max-iter", type=int, default=200)
    _add_common(p)
    p.set_defaults(func=cmd_precond)

    p = sub.add_parser("truncate", allow_abbrev=False, help="truncation error of a full Lagrange function")
    p.add_argument("--kernel", type=_kernel, default=parse_kernel("s2-tps:m=2"))
    _add_node_flags(p, ("icosahedral", "fibonacci"))
    p.add_argument("--k-trunc", type=_float_list, default=[1.0, 2.0, 4.0])
    p.add_argument("--m", default=None, help="also truncate to the M nearest centers ('auto' or an integer)")
    p.add_argument("--n0", type=int, default=GRID_N0)
    p.add_argument("--n1", type=int, default=GRID_N1)
    p.add_argument("--dense-cap", type=int, default=DENSE_CAP)
    _add_common(p)
    p.set_defaults(func=cmd_truncate)
    return parser


def _validate(args) -> None:
    for name in ("level", "n"):
        val = getattr(args, name, None)
        if val is not None and val < 0:
            raise UsageError(f"--{name} must be nonnegative")
    m = getattr(args, "m", None)
    if m is not None and m != "auto":
        try:
            int(m)
        except ValueError as exc:
            raise UsageError(f"--m must be an integer or 'auto', got {m!r}") from exc
    tols = getattr(args, "tols", None)
    if tols is not None and not all(0 < t < 1 for t in tols):
        raise UsageError("--tols must lie in (0, 1)")
    k = getattr(args, "k_trunc", None)
    if k is not None and not all(x > 0 and math.isfinite(x) for x in k):
        raise UsageError("--k-trunc values must be positive")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _validate(args)
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LocalLagrangeError as exc:
        print(f"{parser.prog}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
