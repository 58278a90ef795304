"""Command-line entry points.

Exit codes: 0 success, 1 configuration error, 2 divergence, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .algorithms import DivergenceError
from .compressors import dithering, identity, rand_k, verify_unbiased
from .config import ConfigError, parse_config_file
from .data import LibsvmParseError
from .harness import SweepError, build_problem, reproduce_exp1, reproduce_exp2, run, sweep
from .rng import RngStream

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_IO = 3


def _load_config(path: str, args):
    cfg = parse_config_file(path)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["out"] = args.out
    return cfg.replace(**overrides) if overrides else cfg


def _cmd_run(args) -> int:
    cfg = _load_config(args.config, args)
    records = run(cfg)
    last = records[-1]
    print(f"rounds={last.round} epochs={last.epoch:g} f_gap={last.f_gap:.6e} "
          f"dist_sq={last.dist_sq:.6e} bits_up={last.bits_up:.4g}")
    if cfg.out:
        print(f"wrote {cfg.out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config, args)
    multipliers = [float(tok) for tok in args.multipliers.split(",")]
    best, entries = sweep(cfg, multipliers, seeds=args.seeds)
    for e in entries:
        status = f"diverged@{e.diverged_at}" if e.diverged_at is not None else f"{e.final_f_gap:.6e}"
        print(f"multiplier={e.multiplier:g} final_f_gap={status}")
    print(f"best multiplier: {best:g}")
    return EXIT_OK


def _cmd_constants(args) -> int:
    cfg = _load_config(args.config, args)
    problem = build_problem(cfg)
    c = problem.constants
    print(f"M = {problem.M}")
    print(f"N = {sum(problem.n_m)}")
    print(f"d = {problem.d}")
    print(f"n_m = {list(problem.n_m)}")
    print(f"lambda = {problem.lam:.6g}")
    print(f"L = {c.L:.6g}")
    print(f"L_max = {c.L_max:.6g}")
    print(f"L_tilde = {c.L_tilde:.6g}")
    print(f"mu = {c.mu:.6g}")
    print(f"mu_tilde = {c.mu_tilde:.6g}")
    return EXIT_OK


def _cmd_certify(args) -> int:
    d = args.d
    if args.kind == "identity":
        comp = identity()
    elif args.kind == "rand_k":
        if args.k is None:
            raise ConfigError("--k is required for rand_k")
        comp = rand_k(args.k, d)
    elif args.kind == "dithering":
        if args.levels is None:
            raise ConfigError("--levels is required for dithering")
        comp = dithering(args.levels, d)
    else:
        raise ConfigError(f"unknown compressor kind {args.kind!r}")
    gen = RngStream(args.seed).child("certify").generator()
    report = verify_unbiased(comp, d, args.trials, gen, exhaustive=args.exhaustive)
    print(f"kind = {comp.kind}")
    print(f"omega = {comp.omega:.6g}")
    print(f"max_bias = {report.max_bias:.6e} (bound {report.bias_bound:.6e})")
    print(f"empirical_omega = {report.empirical_omega:.6g} (bound {report.omega_bound:.6g})")
    print(f"ok = {report.ok}")
    return EXIT_OK if report.ok else EXIT_CONFIG


def _cmd_reproduce(args) -> int:
    data_path = Path(args.data_dir) / "mushrooms"
    if not data_path.exists():
        print(f"dataset file not found: {data_path}", file=sys.stderr)
        return EXIT_IO
    out_dir = Path(args.out) if args.out else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    fn = reproduce_exp1 if args.which == "exp1" else reproduce_exp2
    results = fn(data_path, out_dir=out_dir, full=args.full, seeds=args.seeds)
    for name, info in results.items():
        print(f"{name}: best_multiplier={info['best_multiplier']:g} "
              f"final_f_gap={info['final_f_gap']:.6e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rrsim")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configured run")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out")
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="stepsize-multiplier sweep")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--multipliers", default="0.25,0.5,1,2,4")
    p_sweep.add_argument("--seeds", type=int, default=1)
    p_sweep.add_argument("--seed", type=int)
    p_sweep.add_argument("--out")
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_const = sub.add_parser("constants", help="print curvature constants")
    p_const.add_argument("config")
    p_const.add_argument("--seed", type=int)
    p_const.set_defaults(fn=_cmd_constants)

    p_cert = sub.add_parser("certify-compressor", help="unbiasedness certificate")
    p_cert.add_argument("--kind", required=True)
    p_cert.add_argument("--d", type=int, required=True)
    p_cert.add_argument("--k", type=int)
    p_cert.add_argument("--levels", type=int)
    p_cert.add_argument("--trials", type=int, default=20000)
    p_cert.add_argument("--exhaustive", action="store_true")
    p_cert.add_argument("--seed", type=int, default=0)
    p_cert.set_defaults(fn=_cmd_certify)

    p_rep = sub.add_parser("reproduce", help="desk-scale reproduction protocols")
    p_rep.add_argument("which", choices=["exp1", "exp2"])
    p_rep.add_argument("--data-dir", default="data")
    p_rep.add_argument("--out")
    p_rep.add_argument("--full", action="store_true")
    p_rep.add_argument("--seeds", type=int, default=3)
    p_rep.set_defaults(fn=_cmd_reproduce)

    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (FileNotFoundError, OSError, LibsvmParseError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, SweepError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    raise SystemExit(cli_main())
