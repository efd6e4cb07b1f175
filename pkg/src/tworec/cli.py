"""Command line entry point: ``tworec <verb> ...``.

Exit codes: 0 success, 1 validation error, 2 runtime error, 3 oracle-scale error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .decompose import InfeasibleMatrixError, birkhoff_decompose
from .integrators import read_matrix_csv
from .market import MarketValidationError, validate_market, write_market_csv
from .metrics import OracleScaleError
from .realization import monte_carlo, write_event_logs
from .synth import RateDistribution, SynthConfig, SynthConfigError, example_distribution, sample_market

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_ORACLE = 0, 1, 2, 3


def _add_market_args(p: argparse.ArgumentParser, required: bool = False) -> None:
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--market", help="pair CSV: proposer_id,receiver_id,lambda_p,alpha,lambda_r,beta")
    g.add_argument("--synth", help="synth spec JSON (distribution, I, J, c, seed, dataset, pair_mode, noise)")
    p.add_argument("--capacities", help="capacities CSV: proposer_id,capacity")
    p.add_argument("--default-capacity", type=int, default=None)


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file; flags override it")
    _add_market_args(p)
    p.add_argument("--integrator", choices=["one_sided", "da", "ecda"])
    p.add_argument("--sort", choices=["like", "date"])
    p.add_argument("--exposure", choices=["headcount", "like", "date"])
    p.add_argument("--q", type=float, help="uniform receiver capacity")
    p.add_argument("--q-file", help="per-receiver capacities CSV: receiver_id,q")
    p.add_argument("--mc-days", type=int, help="Monte Carlo days (0 disables)")
    p.add_argument("--login", choices=["user", "pair"])
    p.add_argument("--oracle", action="store_const", const=True, default=None, help="also compute exact effective dates")
    p.add_argument("--decompose", action="store_const", const=True, default=None)
    p.add_argument("--events", action="store_const", const=True, default=None, help="write the Monte Carlo event log")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help=f"output root (default ${harness.OUTPUT_ROOT_ENV} or ./runs)")


RUN_KEYS = (
    "market", "capacities", "default_capacity", "synth", "integrator", "sort", "exposure", "q", "q_file",
    "mc_days", "login", "oracle", "decompose", "events", "seed", "out",
)


def _config_from_args(args) -> harness.RunConfig:
    file_values = harness.read_config_file(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k in RUN_KEYS if getattr(args, k, None) is not None}
    if "market" in overrides:
        file_values.pop("synth", None)
    if "synth" in overrides:
        file_values.pop("market", None)
    return harness.make_config(file_values, **overrides)


def _load_market_args(args):
    cap = args.default_capacity if args.default_capacity is not None else 25
    cfg = harness.RunConfig(market=args.market, synth=args.synth, capacities=args.capacities, default_capacity=cap)
    if (args.market is None) == (args.synth is None):
        raise harness.ConfigError("one of --market / --synth is required")
    return harness.load_market(cfg)


def cmd_validate(args) -> int:
    try:
        market = validate_market(_load_market_args(args))
    except MarketValidationError as exc:
        for v in exc.violations:
            print(v, file=sys.stderr)
        return EXIT_INVALID
    print(f"ok: {market.n_proposers} proposers, {market.n_receivers} receivers, {market.n_pairs} pairs")
    return EXIT_OK


def cmd_run(args) -> int:
    path = harness.run(_config_from_args(args))
    print(path)
    return EXIT_OK


def _parse_grid(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def cmd_sweep(args) -> int:
    base = _config_from_args(args)
    grids = {}
    for item in args.grid_for or []:
        name, _, values = item.partition("=")
        grids[name.strip()] = _parse_grid(values)
    spec = harness.SweepSpec(
        base=base,
        grid=_parse_grid(args.grid) if args.grid else [],
        integrators=[s.strip() for s in args.integrators.split(",")],
        grids=grids,
    )
    root = Path(base.out) if base.out else harness.default_output_root()
    directory = Path(args.dir) if args.dir else root / f"sweep-{harness.run_id(base)}"
    rows = harness.sweep(spec, directory, jobs=args.jobs)
    failed = sum(r["status"] != "ok" for r in rows)
    print(directory / "frontier.csv")
    if failed:
        print(f"{failed} sweep point(s) failed; see the error column", file=sys.stderr)
    return EXIT_OK


def cmd_synth(args) -> int:
    dist = example_distribution() if args.dist == "example" else RateDistribution.load(args.dist)
    cfg = SynthConfig(
        n_proposers=args.I, n_receivers=args.J, capacity=args.c, seed=args.seed,
        n_datasets=args.datasets, pair_mode=args.pair_mode, noise=args.noise,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k in range(cfg.n_datasets):
        market = sample_market(dist, cfg, k)
        write_market_csv(market, out / f"pairs_{k:02d}.csv", out / f"capacities_{k:02d}.csv")
        spec = {
            "distribution": "example" if args.dist == "example" else str(Path(args.dist).resolve()),
            "I": cfg.n_proposers, "J": cfg.n_receivers, "c": cfg.capacity, "seed": cfg.seed,
            "dataset": k, "pair_mode": cfg.pair_mode, "noise": cfg.noise,
        }
        (out / f"synth_{k:02d}.json").write_text(json.dumps(spec, indent=1) + "\n")
    print(out)
    return EXIT_OK


def cmd_realize(args) -> int:
    market = _load_market_args(args)
    M = read_matrix_csv(args.matrix, market)
    result = monte_carlo(M, market, args.days, args.seed, login=args.login, keep_logs=args.events)
    rep, logs = result if args.events else (result, None)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    harness.write_rows(out / "realized.csv", [rep.as_row()])
    if logs is not None:
        write_event_logs(logs, out / "events.csv")
    print(out / "realized.csv")
    return EXIT_OK


def cmd_decompose(args) -> int:
    market = _load_market_args(args)
    M = read_matrix_csv(args.matrix, market)
    dec = birkhoff_decompose(M, market)
    dec.write(args.out)
    print(f"{dec.count} components -> {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    market = _load_market_args(args)
    M = read_matrix_csv(args.matrix, market)
    harness.distribution_report(M, market, args.out, bins=args.bins)
    print(args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tworec", description="Two-sided recommendation integrators and evaluation.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("validate", help="check a market file")
    _add_market_args(p, required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run one integrator configuration")
    _add_run_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="capacity sweep -> frontier.csv")
    _add_run_args(p)
    p.add_argument("--integrators", default="one_sided,da,ecda:date", help="comma list, e.g. one_sided,da,ecda:date,ecda:like")
    p.add_argument("--grid", help="comma list of capacities applied to every integrator")
    p.add_argument("--grid-for", action="append", metavar="NAME=Q1,Q2,...", help="per-integrator grid")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--dir", help="sweep output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="draw synthetic markets to pair CSVs")
    p.add_argument("--dist", default="example", help="RateDistribution JSON or 'example'")
    p.add_argument("--I", type=int, default=1000)
    p.add_argument("--J", type=int, default=1000)
    p.add_argument("--c", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--datasets", type=int, default=1)
    p.add_argument("--pair-mode", choices=["user", "noise"], default="noise")
    p.add_argument("--noise", type=float, default=SynthConfig.noise)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    for verb, helptext in (("realize", "Monte Carlo realized metrics"), ("decompose", "deterministic menus"), ("report", "per-receiver distributions")):
        p = sub.add_parser(verb, help=helptext)
        _add_market_args(p, required=True)
        p.add_argument("--matrix", required=True, help="matrix CSV: proposer_id,receiver_id,m")
        p.add_argument("--out", required=True)
        if verb == "realize":
            p.add_argument("--days", type=int, default=1000)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--login", choices=["user", "pair"], default="user")
            p.add_argument("--events", action="store_true")
            p.set_defaults(func=cmd_realize)
        elif verb == "decompose":
            p.set_defaults(func=cmd_decompose)
        else:
            p.add_argument("--bins", type=int, default=50)
            p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MarketValidationError, SynthConfigError, harness.ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OracleScaleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except (InfeasibleMatrixError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
