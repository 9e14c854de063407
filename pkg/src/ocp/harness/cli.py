"""Command line front end.

Subcommands: solve (one configured run), table (benchmark table of one
protocol), rate (smoothing-error decay study), sparsity (control support
study).  Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 table with failed cells.
"""

import argparse
import sys

from .config import ConfigError, build_config, load_config_file, parse_subdomains
from .experiments import rate_study, run_single, run_table, sparsity_study

_OVERRIDE_KEYS = ("method", "n", "overlap", "eps0", "eps_min", "gamma",
                  "sigma", "tol", "inner_tol", "kappa", "nu", "mu", "k_tilde",
                  "seed", "threads", "linear_solver", "gmres_tol", "max_outer")


def _add_config_flags(parser):
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--method")
    parser.add_argument("--n", type=int)
    parser.add_argument("--subdomains", metavar="RxC")
    parser.add_argument("--overlap", type=int)
    parser.add_argument("--eps0", type=float)
    parser.add_argument("--eps-min", type=float, dest="eps_min")
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--sigma", type=float)
    parser.add_argument("--tol", type=float)
    parser.add_argument("--inner-tol", type=float, dest="inner_tol")
    parser.add_argument("--kappa", type=float)
    parser.add_argument("--nu", type=float)
    parser.add_argument("--mu", type=float)
    parser.add_argument("--k-tilde", type=int, dest="k_tilde")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--linear-solver", dest="linear_solver")
    parser.add_argument("--gmres-tol", type=float, dest="gmres_tol")
    parser.add_argument("--max-outer", type=int, dest="max_outer")
    parser.add_argument("--out", default="out", help="output directory")


def _float_list(text):
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad numeric list {text!r}") from exc
    if not values:
        raise ConfigError(f"empty numeric list {text!r}")
    return values


def _config_from_args(args):
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {}
    for key in _OVERRIDE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if args.subdomains is not None:
        overrides["s1"], overrides["s2"] = parse_subdomains(args.subdomains)
    return build_config(file_values, overrides)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ocp",
        description="Solvers and experiments for L1-regularized semilinear "
                    "elliptic optimal control")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run one configured solve")
    _add_config_flags(solve)

    table = sub.add_parser("table", help="run one benchmark table")
    table.add_argument("table_id",
                       choices=("mono", "gmres", "raspen", "scaling", "sweep"))
    table.add_argument("--parallel-cells", action="store_true",
                       help="run table cells concurrently (wall times unusable)")
    _add_config_flags(table)

    rate = sub.add_parser("rate", help="smoothing error decay study")
    rate.add_argument("--n", type=int, default=128)
    rate.add_argument("--eps-list", default="1e-1,1e-2,1e-3,1e-4,1e-5,1e-6")
    rate.add_argument("--eps-ref", type=float, default=1e-12)
    rate.add_argument("--nu", type=float, default=1e-6)
    rate.add_argument("--mu", type=float, default=1.0)
    rate.add_argument("--kappa", type=float, default=0.1)
    rate.add_argument("--tol", type=float, default=1e-10)
    rate.add_argument("--out", default="out")

    sparsity = sub.add_parser("sparsity", help="control support study")
    sparsity.add_argument("--n", type=int, default=64)
    sparsity.add_argument("--mu-list", default="1e-5,1e-4,1e-3")
    sparsity.add_argument("--eps-list", default="1,1e-2,1e-3,1e-11")
    sparsity.add_argument("--nu", type=float, default=1e-6)
    sparsity.add_argument("--kappa", type=float, default=0.1)
    sparsity.add_argument("--tol", type=float, default=1e-10)
    sparsity.add_argument("--no-fields", action="store_true",
                          help="skip per-cell control field dumps")
    sparsity.add_argument("--out", default="out")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "solve":
            cfg = _config_from_args(args)
            code, data = run_single(cfg, args.out)
            status = "converged" if data["converged"] else f"FAILED ({data['failure']})"
            print(f"{cfg.method} n={cfg.n}: {status} after "
                  f"{data['outer_iters']} outer iterations; artifacts in {args.out}")
            return code

        if args.command == "table":
            cfg = _config_from_args(args)
            code, rows = run_table(args.table_id, cfg, args.out,
                                   parallel_cells=args.parallel_cells)
            good = sum(row.converged for row in rows)
            print(f"table {args.table_id}: {good}/{len(rows)} cells converged; "
                  f"wrote {args.out}/table_{args.table_id}.csv")
            return code

        if args.command == "rate":
            rows, slope = rate_study(args.n, _float_list(args.eps_list),
                                     args.out, nu=args.nu, mu=args.mu,
                                     kappa=args.kappa, eps_ref=args.eps_ref,
                                     tol=args.tol)
            print(f"rate study n={args.n}: fitted slope {slope:.4f} over "
                  f"{len(rows)} eps values; wrote {args.out}/rate.csv")
            return 0

        rows = sparsity_study(_float_list(args.mu_list),
                              _float_list(args.eps_list), args.n, args.out,
                              nu=args.nu, kappa=args.kappa, tol=args.tol,
                              dump_fields=not args.no_fields)
        print(f"sparsity study n={args.n}: {len(rows)} cells; "
              f"wrote {args.out}/sparsity.csv")
        return 0
    except ValueError as exc:
        # ConfigError and bad study parameters: usage problems, not solver ones
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
