"""Command line entry point: ``loopkahler <subcommand> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from . import experiments as ex
from .connection import assemble_loop_geodesic, leaf_residuals, path_length
from .errors import LoopKahlerError
from .kahler import make_model
from .io import loop_from_json, path_to_json, read_json, write_csv, write_json

log = logging.getLogger("loopkahler")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--measure", choices=("normalized", "raw"), default="normalized")
    p.add_argument("--out", type=Path, default=None, help="output directory (or path.json for geodesic)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loopkahler", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dform-identity", help="six-term dOmega vs loop integral of d omega")
    _add_common(p)
    p.add_argument("--model", default="perturbed-hermitian")
    p.add_argument("--N", type=int, default=None, help="complex dimension (flat-cn, fubini-study-pn)")
    p.add_argument("--M", type=int, default=64)
    p.add_argument("--trials", type=int, default=10)

    p = sub.add_parser("levi-civita", help="metric compatibility and torsion of the loop connection")
    _add_common(p)
    p.add_argument("--model", default="fubini-study-p1")
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--M", type=int, default=64)
    p.add_argument("--trials", type=int, default=20)

    p = sub.add_parser("geodesic", help="assemble the leaf-wise geodesic between two loops")
    _add_common(p)
    p.add_argument("--model", default=None, help="model of the loop files (default: as recorded in --f)")
    p.add_argument("--f", type=Path, default=None, help="start loop JSON (default: constant [1:0])")
    p.add_argument("--g", type=Path, default=None, help="end loop JSON (default: [cos ns : sin ns])")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--M", type=int, default=256)
    p.add_argument("--P", type=int, default=64)

    p = sub.add_parser("lp1", help="lower and upper bounds for the loop distance on LP^1")
    _add_common(p)
    p.add_argument("--n", type=int, nargs="+", default=[1, 2, 4, 8, 16])
    p.add_argument("--M", type=int, default=None, help="grid size (default max(64, 64 n))")
    p.add_argument("--P", type=int, default=64)

    p = sub.add_parser("pl2", help="Fubini-Study distance and Cauchy experiments on P^N")
    _add_common(p)
    p.add_argument("--N", type=int, nargs="+", default=[16])

    p = sub.add_parser("all", help="run every experiment")
    _add_common(p)
    p.add_argument("--M", type=int, default=64)
    p.add_argument("--P", type=int, default=64)
    p.add_argument("--N", type=int, default=16)
    p.add_argument("--trials", type=int, default=10)
    return parser


def _geodesic(args):
    if (args.f is None) != (args.g is None):
        raise LoopKahlerError("--f and --g must be given together")
    if args.f is None:
        f, g = ex.lp1_loops(args.n, args.M, args.measure)
    else:
        fdata = read_json(args.f)
        model = make_model(args.model, fdata.get("dim")) if args.model else None
        f = loop_from_json(fdata, model)
        g = loop_from_json(read_json(args.g), f.model)
    path = assemble_loop_geodesic(f.model, f, g, args.P)
    table = leaf_residuals(f.model, path)
    if args.out is not None:
        target = args.out if args.out.suffix == ".json" else args.out / "path.json"
        rows = [{"node": j, "time": float(path.times[i + 1]), "residual": float(table[i, j])}
                for j in range(table.shape[1]) for i in range(table.shape[0])]
        write_json(target, path_to_json(path))
        write_csv(target.with_name(target.stem + "_residuals.csv"), rows)
        log.info("wrote %s", target)
        args.out = None  # nothing else to write
    if args.f is None:
        return [ex.geodesic_assembly(args.n, args.M, args.P, args.measure)]
    residual = float(table.max())
    rep = ex.ExperimentReport("geodesic", {"model": f.model.name, "f": str(args.f), "g": str(args.g),
                                           "M": f.grid.M, "P": args.P},
                              {"residual": residual, "length": path_length(f.model, path)},
                              {"geodesic_residual": residual <= ex.GEODESIC_TOL})
    return [rep]


def run(args) -> list:
    cmd = args.command
    if cmd == "dform-identity":
        return [ex.dform_identity(args.model, args.M, args.trials, args.seed, args.N, args.measure)]
    if cmd == "levi-civita":
        return [ex.levi_civita(args.M, args.trials, args.seed, args.model, args.N, args.measure)]
    if cmd == "geodesic":
        return _geodesic(args)
    if cmd == "lp1":
        return [ex.lp1(n, args.M, args.P, args.measure) for n in args.n]
    if cmd == "pl2":
        reps = []
        for N in args.N:
            reps += [ex.pl2_distance(N, args.seed), ex.pl2_cauchy(N, args.seed)]
        return reps
    if cmd == "all":
        config = ex.RunConfig(seed=args.seed, M=args.M, P=args.P, N=args.N, trials=args.trials,
                              measure=args.measure)
        return ex.run_all(config, args.out)
    raise AssertionError(cmd)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        reports = run(args)
    except ex.SuiteError as exc:
        for r in exc.reports:
            print(r.summary())
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LoopKahlerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.out is not None and args.command != "all":
        ex.write_reports(reports, args.out)
    for r in reports:
        print(r.summary())
        for k, v in r.results.items():
            if isinstance(v, float):
                print(f"    {k:>24s} = {v:.12g}")
    ok = all(r.passed for r in reports)
    print("all flags passed" if ok else "some flags failed")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
