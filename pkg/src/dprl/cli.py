"""Command-line entry point: ``dprl run|quick|validate|plot|export-riverswim``."""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .harness import (
    ConfigError,
    ExperimentConfig,
    emit_plot,
    emit_sweep_plots,
    full_scale_config,
    load_config,
    quick_config,
    read_csv,
    run_experiment,
    summarize,
    write_results,
)
from .mdp import build_riverswim, load_mdp, optimal_values, save_mdp

USAGE_ERROR = 2


def _json_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _add_run_flags(p, with_overrides):
    p.add_argument("--seed", type=int, help="base seed (overrides base_seed)")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    if not with_overrides:
        return
    p.add_argument("--full-scale", action="store_true",
                   help="start from K=20000 with 20 seeds instead of the desk preset")
    p.add_argument("--algorithm", nargs="+")
    p.add_argument("--privatizer", nargs="+")
    p.add_argument("--epsilon", nargs="+", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("-K", "--episodes", dest="K", type=int)
    p.add_argument("--num-seeds", type=int)
    p.add_argument("--bonus-scale", type=_json_value,
                   help='number or JSON mapping, e.g. \'{"po": 0.01, "vi": 0.04}\'')
    p.add_argument("--eta", type=_json_value)
    p.add_argument("--debug-dump", action="store_true", default=None,
                   help="write per-episode counts and bonuses under <out>/debug")
    p.add_argument("--no-plot", dest="plot", action="store_false", default=None)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (value parsed as JSON when possible)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dprl", description="Differentially private regret benchmarks on tabular MDPs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the sweep described by a JSON config file")
    p.add_argument("config", nargs="?", help="JSON config; omit to use the built-in preset")
    _add_run_flags(p, with_overrides=True)

    p = sub.add_parser("quick", help="small built-in smoke sweep")
    _add_run_flags(p, with_overrides=False)

    p = sub.add_parser("validate", help="check an MDP JSON file")
    p.add_argument("mdp")

    p = sub.add_parser("plot", help="plot result CSVs into one SVG")
    p.add_argument("csv", nargs="+")
    p.add_argument("-o", "--output", default="regret.svg")
    p.add_argument("--title")

    p = sub.add_parser("export-riverswim", help="write the default RiverSwim MDP as JSON")
    p.add_argument("path")
    return parser


def _overrides(args):
    out = {}
    for key in ("algorithm", "privatizer", "epsilon", "delta", "K", "num_seeds", "bonus_scale",
                "eta", "debug_dump", "plot"):
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    for item in getattr(args, "set", []):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(key, "--set expects KEY=VALUE")
        out[key] = _json_value(value)
    if args.seed is not None:
        out["base_seed"] = args.seed
    if args.out is not None:
        out["output_dir"] = args.out
    return out


def _sweep(cfg, jobs):
    if jobs < 1:
        raise ConfigError("jobs", f"must be >= 1, got {jobs}")
    results = run_experiment(cfg, jobs=jobs)
    out = cfg.resolved_output_dir()
    paths = write_results(results, cfg, out)
    if cfg.plot:
        paths += emit_sweep_plots(results, out)
    for line in summarize(results):
        print(line)
    print(f"wrote {len(paths)} files to {out}")
    return 0


def cmd_run(args):
    overrides = _overrides(args)
    if args.config:
        base = load_config(args.config)
        if args.full_scale:
            overrides = {"K": 20_000, "num_seeds": 20, **overrides}
        cfg = base.with_overrides(**overrides)
    elif args.full_scale:
        cfg = full_scale_config(**overrides)
    else:
        cfg = ExperimentConfig().with_overrides(**overrides)
    return _sweep(cfg, args.jobs)


def cmd_quick(args):
    return _sweep(quick_config(**_overrides(args)), args.jobs)


def cmd_validate(args):
    mdp = load_mdp(args.mdp)
    v_star = optimal_values(mdp)[0][0, mdp.initial_state]
    print(f"ok: S={mdp.n_states} A={mdp.n_actions} H={mdp.horizon} "
          f"initial_state={mdp.initial_state} V*={v_star:.6f}")
    return 0


def cmd_plot(args):
    results = [read_csv(path) for path in args.csv]
    emit_plot(results, args.output, title=args.title)
    print(f"wrote {args.output}")
    return 0


def cmd_export(args):
    save_mdp(build_riverswim(), args.path)
    print(f"wrote {args.path}")
    return 0


COMMANDS = {"run": cmd_run, "quick": cmd_quick, "validate": cmd_validate, "plot": cmd_plot,
            "export-riverswim": cmd_export}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"dprl: error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (ValueError, OSError) as exc:
        print(f"dprl: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
