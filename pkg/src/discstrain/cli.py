"""Command-line entry point: ``discstrain run|validate|demo1d|compare``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .compare import CompareError, compare_runs
from .config import ValidationError, check_against_mesh, load_config
from .material import PARAMETER_SETS, derive_alpha
from .runner import EXIT_OK, EXIT_VALIDATION, run_case, write_error
from .uniaxial import default_cycle_points, piecewise_path, run_path

DEMO_COLUMNS = ("step", "strain", "stress", "effective_stress", "plastic_strain",
                "discontinuity_strain", "elastic_strain", "k", "d")


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ValidationError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        if args.output:
            write_error(Path(args.output), "validation", str(exc), field=exc.field)
        return EXIT_VALIDATION
    code = run_case(cfg, Path(args.output) if args.output else None)
    out = Path(args.output) if args.output else cfg.output_dir()
    print(f"{cfg.case}: exit {code}, artifacts in {out}")
    return code


def _cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
        mesh = cfg.build_mesh()
        check_against_mesh(cfg, mesh)
    except ValidationError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"{cfg.case}: ok ({mesh.n_elements} elements, {mesh.n_nodes} nodes)")
    return EXIT_OK


def _cmd_demo1d(args) -> int:
    params = PARAMETER_SETS[args.params]
    if args.ell >= params.max_length:
        print(f"invalid --ell: must be below {params.max_length:.6g} mm", file=sys.stderr)
        return EXIT_VALIDATION
    points = default_cycle_points(params, args.ell)
    eps_y = params.sigma_y / params.E
    path = piecewise_path(points, args.step or eps_y / 200.0)
    hist = run_path(path, params, args.ell, discontinuity=not args.no_discontinuity)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DEMO_COLUMNS)
        for i, (eps, sig, eff, ep, ed, k, d) in enumerate(hist.as_rows()):
            w.writerow([i, repr(eps), repr(sig), repr(eff), repr(ep), repr(ed), repr(eps - ep - ed), repr(k), repr(d)])
    print(f"{len(path)} rows written to {out} (alpha = {derive_alpha(params, args.ell):.6g})")
    return EXIT_OK


def _cmd_compare(args) -> int:
    try:
        report = compare_runs(args.dir_a, args.dir_b)
    except CompareError as exc:
        print(f"comparison error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(report.to_text())
    if args.json:
        Path(args.json).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="discstrain", description="Elastoplastic damage with discontinuity strain.")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a case file")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output directory (overrides the case file and environment)")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("validate", help="check a case file and its mesh without running")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)

    d = sub.add_parser("demo1d", help="two-cycle uniaxial demonstration, written as CSV")
    d.add_argument("--no-discontinuity", action="store_true", help="disable the discontinuity strain")
    d.add_argument("--ell", type=float, default=30.0, help="characteristic length in mm (default 30)")
    d.add_argument("--params", choices=sorted(PARAMETER_SETS), default="center_notched")
    d.add_argument("--step", type=float, default=None, help="strain increment (default sigma_y/E/200)")
    d.add_argument("-o", "--output", default="demo1d.csv")
    d.set_defaults(func=_cmd_demo1d)

    c = sub.add_parser("compare", help="compare two finished runs")
    c.add_argument("dir_a")
    c.add_argument("dir_b")
    c.add_argument("--json", help="also write the report as JSON")
    c.set_defaults(func=_cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
