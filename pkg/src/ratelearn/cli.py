"""Command-line entry point: ``ratelearn <subcommand> ...``.

Exit status is 0 on success, 1 on usage or validation errors and 2 on
internal errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from . import analysis, learning, rd
from .errors import UsageError
from .losses import LossFunction
from .probability import DiscretizationSpec, FiniteJoint, PiecewiseLinear, RegressionModel, discretize_regression


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage().strip()}")


def _loss_arg(text: str) -> LossFunction:
    if text.startswith("ppower"):
        return LossFunction("ppower", float(text[len("ppower"):] or 2.0))
    return LossFunction(text)


def _resolve_instance(name: str) -> str:
    path = Path(name)
    if path.exists():
        return path.read_text()
    packaged = resources.files("ratelearn").joinpath("data").joinpath(path.name)
    if packaged.is_file():
        return packaged.read_text()
    raise UsageError(f"instance file {name} not found")


def _gaussian_joint(args) -> FiniteJoint:
    model = RegressionModel(PiecewiseLinear.constant(0.0, 1.0, 0.5), args.sigma)
    spec = DiscretizationSpec(x_bins=args.x_bins, y_grid=args.y_grid, y_span=args.span)
    return discretize_regression(model, spec)


def cmd_rd(args) -> int:
    loss = _loss_arg(args.loss)
    if args.gaussian:
        if args.sigma is None:
            raise UsageError("--gaussian needs --sigma")
        if args.rate is not None:
            print(f"D = {rd.gaussian_drf(args.sigma, args.rate):.10g}")
            if args.numeric:
                res = rd.distortion_at_rate(_gaussian_joint(args), loss, args.rate)
                print(f"D (Blahut-Arimoto, {args.y_grid}-point grid) = {float(res.distortion):.10g}"
                      f" at R = {float(res.rate):.10g}")
            return 0
        joint, source = _gaussian_joint(args), rd.GAUSSIAN_TAG
    elif args.joint:
        joint, source = FiniteJoint.from_json(Path(args.joint).read_text()), args.joint
    else:
        raise UsageError("rd needs --joint FILE or --gaussian")
    if args.rate is not None:
        res = rd.distortion_at_rate(joint, loss, args.rate)
        print(f"D = {float(res.distortion):.10g} at R = {float(res.rate):.10g}")
        return 0
    curve = rd.rd_curve(joint, loss, source_id=source, workers=args.workers)
    text = curve.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.plot:
        from .plotting import plot_rd_curve

        plot_rd_curve(curve, args.plot, gaussian_sigma=args.sigma if args.gaussian else None)
    problems = curve.check_invariants()
    for p in problems:
        print(f"warning: {p}", file=sys.stderr)
    return 0


def cmd_simulate(args) -> int:
    from .harness import ExperimentConfig, run_sweep

    config = ExperimentConfig.load(args.config)
    res = run_sweep(config, workers=args.workers, output=args.output, plots=not args.no_plots)
    for a in res.aggregates:
        print(f"R={a['rate']:g} n={a['n']} mean sqrt-risk {a['mean_sqrt_risk']:.6f} "
              f"(se {a['se_sqrt_risk']:.2e}) bound {a['theorem3_bound']:.6f} "
              f"{'ok' if a['dominated'] else 'VIOLATED'} failed={a['failed']}")
    for k, v in res.files.items():
        print(f"{k}: {v}")
    return 0


def cmd_bounds(args) -> int:
    loss = _loss_arg(args.loss)
    sup_drf = args.sup_drf
    if args.curve:
        if args.rate is None:
            raise UsageError("--curve needs --rate")
        curve = rd.RDCurve.from_csv(Path(args.curve).read_text())
        sup_drf = rd.invert_curve(curve, args.rate).value
    if args.rate is None:
        raise UsageError("bounds needs --rate")
    if args.gaussian:
        if args.sigma is None:
            raise UsageError("--gaussian needs --sigma")
        rep = analysis.bound_report(args.rate, loss, sup_drf=sup_drf, lstar=args.lstar, sigma=args.sigma,
                                    measured_ln=args.ln, c_prime=args.c_prime, n=args.n)
    else:
        rep = analysis.bound_report(args.rate, loss, sup_drf=sup_drf, lstar=args.lstar,
                                    measured_ln=args.ln, c_prime=args.c_prime, n=args.n)
    print(json.dumps(rep.to_json(), indent=2) if args.json else rep.to_text())
    return 0


def cmd_verify(args) -> int:
    joint, loss, n, rate, scheme = analysis.load_instance(_resolve_instance(args.instance))
    curve = rd.rd_curve(joint, loss)
    rep = analysis.appendix_chain_verify(joint, scheme, n, rate, curve, loss)
    print(json.dumps(rep.to_json(), indent=2) if args.json else rep.to_text())
    ok = rep.ok(analysis.APPENDIX_TOL)
    if not args.json:
        print("all inequalities hold" if ok else "chain violated")
    return 0 if ok else 1


def cmd_covering(args) -> int:
    cov = learning.covering_number(args.lipschitz, args.epsilon, tuple(args.domain), args.norm,
                                   materialize=args.out is not None)
    print(f"N = {cov.count}")
    print(f"log2 N = {cov.log2_count:.6f}")
    print(f"cells = {cov.cells}, levels = {cov.levels}, max level jump = {cov.max_jump}")
    if args.out:
        Path(args.out).write_text(json.dumps(cov.grid.to_json()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ratelearn", description="Learning from rate-compressed data: curves, codecs, bounds.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    r = sub.add_parser("rd", help="conditional rate-distortion curve as CSV")
    r.add_argument("--joint", help="FiniteJoint JSON file")
    r.add_argument("--gaussian", action="store_true", help="discretized Gaussian regression model")
    r.add_argument("--sigma", type=float)
    r.add_argument("--rate", type=float, help="print D at this rate instead of the curve")
    r.add_argument("--numeric", action="store_true", help="with --gaussian --rate, also solve numerically")
    r.add_argument("--loss", default="squared")
    r.add_argument("--y-grid", type=int, default=512)
    r.add_argument("--span", type=float, default=6.0)
    r.add_argument("--x-bins", type=int, default=1)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--out", help="CSV path (default stdout)")
    r.add_argument("--plot", help="PNG path for a figure of the curve")
    r.set_defaults(func=cmd_rd)

    s = sub.add_parser("simulate", help="run a seeded sweep from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--output")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bounds", help="evaluate the achievability bounds")
    b.add_argument("--gaussian", action="store_true")
    b.add_argument("--sigma", type=float)
    b.add_argument("--rate", type=float)
    b.add_argument("--loss", default="squared")
    b.add_argument("--lstar", type=float)
    b.add_argument("--sup-drf", type=float)
    b.add_argument("--curve", help="RDCurve CSV; the sup-DRF is read off it at --rate")
    b.add_argument("--ln", type=float, help="measured distortion for the finite-sample terms")
    b.add_argument("--c-prime", type=float)
    b.add_argument("--n", type=int)
    b.add_argument("--json", action="store_true")
    b.set_defaults(func=cmd_bounds)

    v = sub.add_parser("verify-appendix", help="exhaustively verify the converse chain")
    v.add_argument("--instance", default="tiny.json")
    v.add_argument("--json", action="store_true")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("covering", help="constructive covering number of a Lipschitz class")
    c.add_argument("--lipschitz", type=float, required=True)
    c.add_argument("--epsilon", type=float, required=True)
    c.add_argument("--norm", choices=("sup", "l2"), default="sup")
    c.add_argument("--domain", type=float, nargs=2, default=(0.0, 1.0))
    c.add_argument("--out", help="write the net as HypothesisGrid JSON")
    c.set_defaults(func=cmd_covering)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        return args.func(args)
    except (UsageError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
