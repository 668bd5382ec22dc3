"""Command line: ``twentyq simulate|bounds|sweep|selftest``."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, build_experiment, load_config, with_overrides


def _load(args):
    exp = load_config(args.config)
    overrides = {}
    if getattr(args, "trials", None) is not None:
        overrides["run.trials"] = args.trials
    if getattr(args, "seed", None) is not None:
        overrides["run.seed"] = args.seed
    if overrides:
        raw = with_overrides(exp.raw, overrides)
        if exp.sweep:
            raw["sweep"] = exp.sweep
        exp = build_experiment(raw, source=exp.source)
    return exp


def cmd_simulate(args) -> int:
    from .figures import plot_trials
    from .harness import resolve_output_dir, simulate

    exp = _load(args)
    res = simulate(exp, args.out, workers=args.workers)
    if args.plot:
        res.paths["plot"] = plot_trials(res.rows, exp.procedure.delta, resolve_output_dir(exp, args.out) / "trials.png")
    a = res.aggregate
    print(f"trials={a['trials']} excess_prob={a['excess_prob']:.6g} "
          f"[{a['excess_ci_lo']:.4g}, {a['excess_ci_hi']:.4g}] mean_tau={a['mean_tau_total']:.6g} "
          f"bound_eps={a['bound_eps']:.6g} bound_N={a['bound_N']:.6g}")
    for p in res.paths.values():
        print(f"wrote {p}")
    return 0


def cmd_bounds(args) -> int:
    from .figures import write_bounds
    from .harness import resolve_output_dir

    exp = _load(args)
    for p in write_bounds(exp, resolve_output_dir(exp, args.out), args.figure, args.plot):
        print(f"wrote {p}")
    return 0


def cmd_sweep(args) -> int:
    from .harness import sweep

    exp = _load(args)
    try:
        path = sweep(exp, args.out, resume=args.resume, workers=args.workers)
    except KeyboardInterrupt:
        print("interrupted; completed cells kept, rerun with --resume", file=sys.stderr)
        return 130
    print(f"wrote {path}")
    return 0


def cmd_selftest(args) -> int:
    from .acceptance import run_all

    results = run_all(only=args.only)
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twentyq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, workers=True):
        p.add_argument("--config", required=True, help="experiment TOML file")
        p.add_argument("--out", default=None, help="output directory (overrides config and environment)")
        if workers:
            p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("simulate", help="run a Monte Carlo campaign")
    common(p)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--plot", action="store_true", help="also render trials.png")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bounds", help="evaluate the achievability bounds")
    common(p, workers=False)
    p.add_argument("--figure", type=int, choices=(3, 4, 5), default=None)
    p.add_argument("--plot", action="store_true", help="also render the figure as PNG")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("sweep", help="run every cell of the [sweep] grid")
    common(p)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("selftest", help="run the acceptance suite")
    p.add_argument("--only", type=int, nargs="*", default=None, help="criterion numbers to run")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
