"""Command-line scenario runner.

Subcommands mirror the pipeline stages: ``trace``, ``bridge``,
``classify``, ``asym``, ``surface``, ``integrate``, ``validate`` (the
full pipeline) and ``converge`` (slope fit of an existing comparison
CSV).  Exit codes: 0 on success, 2 when an acceptance check fails
(surface verification or convergence slope), 1 on any other error.
"""

from __future__ import annotations

import argparse
import sys

from . import scenarios as sc

STAGES = {
    "trace": (),
    "bridge": (),
    "classify": (),
    "asym": (),
    "surface": ("field",),
    "integrate": ("comparison",),
    "validate": ("comparison",),
}


def _add_common(p: argparse.ArgumentParser, need_scenario=True):
    if need_scenario:
        p.add_argument("--scenario", required=True,
                       help="scenario file path or built-in name "
                            f"({', '.join(sorted(sc.BUILTIN_SCENARIOS))})")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--grid", type=int, default=None,
                   help="override the grid (N gives an N x N lattice)")
    p.add_argument("--r-list", type=float, nargs="+", default=None,
                   help="override the r values")
    p.add_argument("--kappa", type=float, nargs="+", default=None,
                   help="override the reference kappa values")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="farfield2d",
        description="far-field expansion and deformed-surface validation of "
                    "2D Fourier integrals with curve singularities",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("trace", "trace the singular curves and emit trace CSVs"),
        ("bridge", "determine the bypass signs"),
        ("classify", "locate and classify the special points"),
        ("asym", "evaluate the closed-form expansion"),
        ("surface", "build and verify the deformed surface"),
        ("integrate", "integrate numerically over the deformed surface"),
        ("validate", "full pipeline: classify, expand, integrate, compare"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
    p = sub.add_parser("converge", help="fit the log-log discrepancy slope")
    p.add_argument("--comparison", default=None,
                   help="path to an existing comparison CSV")
    p.add_argument("--slope-window", type=float, nargs=2, default=(-2.6, -1.4),
                   metavar=("LO", "HI"), help="acceptance window for the slope")
    _add_common(p, need_scenario=False)
    p.add_argument("--scenario", default=None,
                   help="scenario to run first when no comparison CSV is given")
    return ap


def _run_stage(args, stage: str) -> int:
    grid = (args.grid, args.grid) if args.grid else None
    scenario = sc.load_scenario(args.scenario)
    if stage in ("trace", "bridge", "classify", "asym"):
        # geometry stages never integrate
        result = sc.run_scenario(scenario, args.out, grid=grid, r_values=())
    else:
        result = sc.run_scenario(
            scenario, args.out, grid=grid,
            r_values=tuple(args.r_list) if args.r_list else None,
            kappa_values=tuple(args.kappa) if args.kappa else None,
        )

    if stage == "trace":
        for key, path in sorted(result.artifacts.items()):
            if key.startswith("trace_"):
                print(path)
    elif stage == "bridge":
        for cid, s in sorted(result.bridges.items()):
            print(f"{cid}: {s:+d}")
        print(result.artifacts["bridges"])
    elif stage == "classify":
        for p in result.points:
            print(f"({p.location[0]:+.6f}, {p.location[1]:+.6f})  {p.kind:10s} "
                  f"{p.activity or '':8s} contributing={p.contributing}  {p.reason}")
        print(result.artifacts["classification"])
    elif stage == "asym":
        for c in result.contributions:
            amp = c.amplitude(result.scenario.direction)
            print(f"({c.source.location[0]:+.6f}, {c.source.location[1]:+.6f})  "
                  f"{c.source.kind:10s} r^{c.r_power:+.3f}  C = {amp:.6g}")
        print(result.artifacts["expansion"])
    elif stage == "surface":
        print(result.surface_report.summary())
        print(result.artifacts["field"])
        if not result.surface_report.passed:
            return 2
    elif stage in ("integrate", "validate"):
        for r, numeric, asym in result.comparison:
            diff = abs(numeric - asym)
            rel = diff / abs(asym) if asym != 0 else float("inf")
            print(f"r = {r:7.3f}  numeric = {numeric:+.6f}  "
                  f"asymptotic = {asym:+.6f}  |diff| = {diff:.3e}  rel = {rel:.3e}")
        print(result.artifacts["comparison"])
        if stage == "validate":
            if result.surface_report is not None and not result.surface_report.passed:
                print("surface verification FAILED")
                return 2
            if result.convergence is not None:
                c = result.convergence
                print(f"slope fit: slope = {c.slope:+.4f} "
                      f"(window [{c.slope_window[0]}, {c.slope_window[1]}]) "
                      f"{'pass' if c.passed else 'FAIL'}")
                if not c.passed:
                    return 2
    return 0


def _run_converge(args) -> int:
    if args.comparison:
        report = sc.convergence_report(args.comparison,
                                       slope_window=tuple(args.slope_window))
    elif args.scenario:
        grid = (args.grid, args.grid) if args.grid else None
        result = sc.run_scenario(
            sc.load_scenario(args.scenario), args.out, grid=grid,
            r_values=tuple(args.r_list) if args.r_list else None,
            kappa_values=tuple(args.kappa) if args.kappa else None,
        )
        if result.convergence is None:
            print("scenario produced no convergence data (need >= 4 r values)")
            return 1
        report = sc.convergence_report(
            [(r, abs(n - a)) for r, n, a in result.comparison],
            slope_window=tuple(args.slope_window),
        )
    else:
        print("converge needs --comparison or --scenario")
        return 1
    print(f"slope = {report.slope:+.6f}  intercept = {report.intercept:+.6f}  "
          f"residual = {report.residual:.3e}")
    print(f"window [{report.slope_window[0]}, {report.slope_window[1]}]: "
          f"{'pass' if report.passed else 'FAIL'}")
    return 0 if report.passed else 2


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "converge":
            return _run_converge(args)
        return _run_stage(args, args.command)
    except (ValueError, KeyError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
