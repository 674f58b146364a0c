"""Command-line surface for batch accounting runs.

Subcommands::

    tradeoff   sigma2, mu          -> trade-off knots CSV
    iid-eps    n, sigma2, delta    -> eps + error ledger
    iid-sigma  n, eps, delta       -> smallest sigma^2
    curve      spec, eps grid      -> (eps, delta_fdp, delta_zcdp) CSV + PNG
    residual   n, sigma2           -> lattice residual bound + components
    overall    allocation, eps|delta -> heterogeneous profile + ledger CSV
    zcdp       rho, delta          -> baseline eps
    simulate   counts CSV, sigma2  -> MSE/MAE report CSV
    report     allocation, delta   -> per-level report CSV + PNG

Global flags: --precision (or ACCOUNTANT_PRECISION), --boole-n, --seed,
--max-ledger.  All runs are deterministic given flags and precision.  Exit
codes: 0 success, 2 validation error, 3 error-ledger tolerance violated.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from mpmath import mpf

from . import census, hp, iid, inid, sim, tradeoff, zcdp
from .census import sci

LEDGER_EXIT_CODE = 3


def _parse_eps_grid(spec: str):
    """Accept 'start:stop:count' or a comma-separated list."""
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid must be start:stop:count, got {spec!r}")
        start, stop = mpf(parts[0]), mpf(parts[1])
        count = int(parts[2])
        if count < 1:
            raise ValueError("grid count must be >= 1")
        if count == 1:
            return [start]
        step = (stop - start) / (count - 1)
        return [start + i * step for i in range(count)]
    return [mpf(tok) for tok in spec.split(",") if tok.strip()]


def _emit(key, value):
    print(f"{key} = {sci(value)}" if not isinstance(value, str) else f"{key} = {value}")


def _write_knots_csv(curve, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("alpha", "beta"))
        for a, b in curve.knots:
            writer.writerow((sci(a), sci(b)))


def _check_ledger(ledger, max_ledger) -> int:
    _emit("ledger_total", ledger.total)
    if max_ledger is not None and ledger.total > mpf(max_ledger):
        print(
            f"error ledger total {sci(ledger.total)} exceeds --max-ledger "
            f"{max_ledger}",
            file=sys.stderr,
        )
        return LEDGER_EXIT_CODE
    return 0


def cmd_tradeoff(args) -> int:
    curve = tradeoff.single_tradeoff(mpf(args.sigma2), args.mu)
    _write_knots_csv(curve, args.out)
    _emit("knots", str(len(curve.knots)))
    _emit("out", str(args.out))
    return 0


def cmd_iid_eps(args) -> int:
    spec = iid.IidCompositionSpec(args.n, mpf(args.sigma2))
    solution = iid.eps_from_delta(spec, mpf(args.delta))
    _emit("eps", solution.eps)
    _emit("bracketed", str(solution.bracketed).lower())
    delta, ledger = iid.delta_eps(spec, solution.eps)
    _emit("delta_at_eps", delta)
    if args.ledger_out:
        census.write_ledger_csv(ledger, args.ledger_out)
    return _check_ledger(ledger, args.max_ledger)


def cmd_iid_sigma(args) -> int:
    sigma2 = iid.sigma_from_budget(args.n, mpf(args.eps), mpf(args.delta))
    _emit("sigma2", sigma2)
    return 0


def cmd_curve(args) -> int:
    if args.alloc:
        loaded = census.load(args.alloc)
        by_name = {lvl.name: lvl for lvl in loaded.levels}
        if args.level not in by_name:
            raise ValueError(
                f"level {args.level!r} not in {sorted(by_name)}"
            )
        lvl = by_name[args.level]
        spec = iid.IidCompositionSpec(lvl.n_queries, lvl.sigma2)
    else:
        spec = iid.IidCompositionSpec(args.n, mpf(args.sigma2))
    rows = census.curve_rows(spec, _parse_eps_grid(args.eps_grid))
    census.write_curve_csv(rows, args.out)
    png = Path(args.out).with_suffix(".png")
    from . import figures

    figures.render_curve(rows, png)
    _emit("rows", str(len(rows)))
    _emit("out", str(args.out))
    _emit("figure", str(png))
    return 0


def cmd_residual(args) -> int:
    bound = iid.residual_bound(args.n, mpf(args.sigma2))
    _emit("residual", bound.r)
    _emit("omega1_unit_intervals", bound.omega1)
    _emit("omega2_endpoint", bound.omega2)
    _emit("omega3_gauss_tail", bound.omega3)
    return 0


def cmd_overall(args) -> int:
    loaded = census.load(args.alloc)
    quad = inid.default_quadrature(args.boole_n)
    if args.eps is not None:
        result = inid.overall_delta(loaded.config, mpf(args.eps), quad)
        _emit("eps", mpf(args.eps))
    else:
        target = mpf(args.delta) if args.delta else loaded.delta_overall
        search = inid.solve_eps(loaded.config, target, quad)
        _emit("eps", search.eps)
        _emit("bracketed", str(search.bracketed).lower())
        result = inid.overall_delta(loaded.config, search.eps, quad)
    _emit("delta_upper", result.delta_upper)
    _emit("delta_two_sided", result.delta_two_sided)
    _emit("quad_too_coarse", str(result.quad_too_coarse).lower())
    if args.ledger_out:
        census.write_ledger_csv(result.ledger, args.ledger_out)
    return _check_ledger(result.ledger, args.max_ledger)


def cmd_zcdp(args) -> int:
    _emit("eps", zcdp.eps_from_rho(mpf(args.rho), mpf(args.delta)))
    return 0


def cmd_simulate(args) -> int:
    if args.counts:
        dataset = sim.read_counts_csv(args.counts, label=args.label)
    else:
        dataset = sim.synthetic_counts(
            args.synthetic, args.synthetic_mean, args.seed, label=args.label or "synthetic"
        )
    rows = [
        sim.run_experiment(dataset, mpf(args.sigma2), args.seed, postprocess=post)
        for post in ((False, True) if args.postprocess else (False,))
    ]
    sim.write_report_csv(rows, args.out)
    for row in rows:
        _emit(f"mse_{row['postproc']}", row["mse"])
        _emit(f"mae_{row['postproc']}", row["mae"])
    _emit("out", str(args.out))
    return 0


def cmd_report(args) -> int:
    loaded = census.load(args.alloc)
    delta = mpf(args.delta) if args.delta else loaded.delta_per_level
    rows = census.level_report(loaded, delta)
    census.write_level_report_csv(rows, args.out)
    png = Path(args.out).with_suffix(".png")
    from . import figures

    figures.render_level_report(rows, png)
    for row in rows:
        print(
            f"{row.level}: eps_zcdp={sci(row.eps_zcdp, 6)} "
            f"eps_fdp={sci(row.eps_fdp, 6)} sigma2_ours={sci(row.sigma2_ours, 6)}"
        )
    _emit("out", str(args.out))
    _emit("figure", str(png))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dgdp",
        description="High-precision f-DP accountant for discrete Gaussian mechanisms",
    )
    parser.add_argument(
        "--precision",
        type=int,
        default=None,
        help="working precision in decimal digits (default: "
        "ACCOUNTANT_PRECISION or 80)",
    )
    parser.add_argument(
        "--boole-n",
        type=int,
        default=inid.DEFAULT_BOOLE_POINTS,
        help="Boole quadrature points for the heterogeneous pipeline",
    )
    parser.add_argument("--seed", type=int, default=0, help="simulation RNG seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tradeoff", help="trade-off curve knots of one mechanism")
    p.add_argument("--sigma2", required=True)
    p.add_argument("--mu", type=int, default=1)
    p.add_argument("--out", default="knots.csv")
    p.set_defaults(func=cmd_tradeoff)

    p = sub.add_parser("iid-eps", help="eps at a delta target, i.i.d. composition")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--sigma2", required=True)
    p.add_argument("--delta", required=True)
    p.add_argument("--ledger-out", default=None)
    p.add_argument("--max-ledger", default=None)
    p.set_defaults(func=cmd_iid_eps)

    p = sub.add_parser("iid-sigma", help="smallest sigma^2 meeting (eps, delta)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--eps", required=True)
    p.add_argument("--delta", required=True)
    p.set_defaults(func=cmd_iid_sigma)

    p = sub.add_parser("curve", help="(eps, delta) curve CSV + figure")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--sigma2", default=None)
    p.add_argument("--alloc", default=None, help="allocation file providing a level")
    p.add_argument("--level", default=None)
    p.add_argument("--eps-grid", required=True, help="start:stop:count or list")
    p.add_argument("--out", default="curve.csv")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("residual", help="lattice residual bound and components")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--sigma2", required=True)
    p.set_defaults(func=cmd_residual)

    p = sub.add_parser("overall", help="heterogeneous overall profile")
    p.add_argument("--alloc", required=True)
    p.add_argument("--eps", default=None)
    p.add_argument("--delta", default=None)
    p.add_argument("--boole-n", type=int, default=argparse.SUPPRESS,
                   help="override the global --boole-n")
    p.add_argument("--ledger-out", default=None)
    p.add_argument("--max-ledger", default=None)
    p.set_defaults(func=cmd_overall)

    p = sub.add_parser("zcdp", help="zCDP (rho, delta) -> eps conversion")
    p.add_argument("--rho", required=True)
    p.add_argument("--delta", required=True)
    p.set_defaults(func=cmd_zcdp)

    p = sub.add_parser("simulate", help="noise-injection MSE/MAE experiment")
    p.add_argument("--counts", default=None, help="CSV with one count per line")
    p.add_argument("--synthetic", type=int, default=None, help="synthetic size")
    p.add_argument("--synthetic-mean", type=float, default=50.0)
    p.add_argument("--sigma2", required=True)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                   help="override the global --seed")
    p.add_argument("--postprocess", action="store_true")
    p.add_argument("--label", default=None)
    p.add_argument("--out", default="sim_report.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="per-level report CSV + figure")
    p.add_argument("--alloc", required=True)
    p.add_argument("--delta", default=None)
    p.add_argument("--out", default="level_report.csv")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    hp.configure_precision(args.precision)
    if args.func is cmd_curve:
        has_spec = args.n is not None and args.sigma2 is not None
        has_level = args.alloc is not None and args.level is not None
        if has_spec == has_level:
            parser.error("curve needs either --n/--sigma2 or --alloc/--level")
    if args.func is cmd_simulate and (args.counts is None) == (args.synthetic is None):
        parser.error("simulate needs exactly one of --counts or --synthetic")
    if args.func is cmd_overall and args.eps is not None and args.delta is not None:
        parser.error("overall takes --eps or --delta, not both")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
