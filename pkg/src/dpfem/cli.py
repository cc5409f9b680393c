"""Command line interface.

Subcommands
-----------
solve   one time integration of a registered problem on one grid
study   refinement study producing the error/rate table and CSV
props   numerical property checks

Options may come from the command line or from a config file passed with
``--config``.  The config file is either an INI-style text of flat
``key = value`` lines (section headers are allowed and ignored for lookup)
or a JSON object with the same keys; explicit command-line flags win.
Recognized keys: problem, grids, dt, scheme, gamma, out_dir, vtk.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys

from dpfem.harness import REGISTRY, get_problem, measure_error, run_single, run_study
from dpfem.io import export_vtk

_CONFIG_KEYS = ("problem", "grids", "dt", "scheme", "gamma", "out_dir", "vtk")
_TRUTHY = {"1", "true", "yes", "on"}
_FALSY = {"0", "false", "no", "off"}


def _parse_grids(text):
    parts = [p for chunk in str(text).split(",") for p in chunk.split()]
    try:
        grids = tuple(int(p) for p in parts if p)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid list {text!r}") from None
    if not grids:
        raise argparse.ArgumentTypeError(f"no grid sizes in {text!r}")
    return grids


def _parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in _TRUTHY:
        return True
    if text in _FALSY:
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


def load_config(path: str) -> dict:
    """Flat key/value options from an INI-style or JSON config file."""
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError(f"{path}: top level must be a JSON object")
        flat = {}
        for key, value in data.items():
            if isinstance(value, dict):  # one level of sections, as in INI
                flat.update(value)
            else:
                flat[key] = value
    else:
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text)
        except configparser.MissingSectionHeaderError:
            parser.read_string("[run]\n" + text)
        flat = dict(parser.defaults())
        for section in parser.sections():
            flat.update(parser.items(section))
    unknown = sorted(set(flat) - set(_CONFIG_KEYS))
    if unknown:
        raise ValueError(f"{path}: unknown option(s) {unknown}; known: {list(_CONFIG_KEYS)}")
    return flat


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    flat = load_config(args.config)
    if args.problem is None and "problem" in flat:
        args.problem = str(flat["problem"])
    if args.grids is None and "grids" in flat:
        v = flat["grids"]
        args.grids = tuple(int(x) for x in v) if isinstance(v, (list, tuple)) else _parse_grids(v)
    if args.dt is None and "dt" in flat:
        args.dt = float(flat["dt"])
    if args.scheme is None and "scheme" in flat:
        args.scheme = str(flat["scheme"])
    if args.gamma is None and "gamma" in flat:
        args.gamma = float(flat["gamma"])
    if args.out_dir is None and "out_dir" in flat:
        args.out_dir = str(flat["out_dir"])
    if not args.vtk and "vtk" in flat:
        args.vtk = _parse_bool(flat["vtk"])
    return args


def _add_run_options(sp: argparse.ArgumentParser):
    sp.add_argument("--config", help="INI or JSON file providing default option values")
    sp.add_argument("--problem", help="registered problem name (see `dpfem study -h`)")
    sp.add_argument(
        "--grids", type=_parse_grids, help="comma-separated mesh sizes, e.g. 4,8,16,32,64"
    )
    sp.add_argument("--dt", type=float, help="time step (default: the problem's step policy)")
    sp.add_argument("--scheme", choices=("cfem", "ncfem", "dg"), help="spatial scheme override")
    sp.add_argument("--gamma", type=float, help="interior-penalty parameter for the dg scheme")
    sp.add_argument("--out-dir", help="directory for CSV/VTK output")
    sp.add_argument("--vtk", action="store_true", help="write the final field as legacy VTK")


def cmd_solve(args) -> int:
    if args.problem is None:
        print("solve: --problem is required (flag or config)", file=sys.stderr)
        return 2
    spec = get_problem(args.problem)
    grids = args.grids or (spec.default_grids[0],)
    if len(grids) != 1:
        print(f"solve runs a single grid, got --grids {grids}", file=sys.stderr)
        return 2
    n = grids[0]
    result = run_single(spec, n, scheme=args.scheme, dt=args.dt, gamma=args.gamma)
    steps = len(result.states) - 1
    print(
        f"{spec.name} [{result.scheme}] n={n} h={result.h:.6e} "
        f"dofs={result.space.ndofs} steps={steps} dt={result.dt:g}"
    )
    lhs, rhs = result.stability
    print(
        f"newton iterations <= {result.newton_max}; "
        f"stability {lhs:.6e} <= {rhs:.6e}; {result.elapsed:.2f}s"
    )
    if spec.reference_mode:
        print("reference-mode problem: errors are measured by `study` against a fine run")
    else:
        print(f"space-time error: {measure_error(spec, result):.6e}")
    if args.vtk:
        path = os.path.join(args.out_dir or ".", f"{spec.name}_{result.scheme}_n{n}.vtk")
        export_vtk(result.space, result.states[-1].coeffs, path)
        print(f"wrote {path}")
    return 0


def cmd_study(args) -> int:
    if args.problem is None:
        print("study: --problem is required (flag or config)", file=sys.stderr)
        return 2
    reports = run_study(
        args.problem, grids=args.grids, out_dir=args.out_dir, dt=args.dt, gamma=args.gamma
    )
    for report in reports:
        print()
        print(report)
    return 0


def cmd_props(args) -> int:
    from dpfem.props import run_all

    results = run_all()
    return 0 if all(r.ok for r in results) else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dpfem",
        description="Finite element solvers for damped-pumped reaction-diffusion equations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run one problem on one grid")
    _add_run_options(solve)
    solve.set_defaults(func=cmd_solve)

    study = sub.add_parser(
        "study",
        help="refinement study with error/rate table and CSV",
        epilog="registered problems: " + ", ".join(sorted(REGISTRY)),
    )
    _add_run_options(study)
    study.set_defaults(func=cmd_study)

    props = sub.add_parser("props", help="run the numerical property checks")
    props.set_defaults(func=cmd_props)

    args = parser.parse_args(argv)
    try:
        args = _merge_config(args)
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary: diagnose and exit nonzero
        print(f"dpfem {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
