"""Command line: run <config>, preset <name>, verify."""

import argparse
import json
import sys

from .experiment import (ConfigError, load_config, parse_config, preset_names, preset_text,
                         run_experiment, with_horizon)
from .verify import MUTATIONS, SUITES, verify

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_IO = 0, 1, 2, 3


def build_parser():
    ap = argparse.ArgumentParser(prog="unhinged-dynamics",
                                 description="Simulate and verify unhinged-loss feature dynamics.")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_preset = sub.add_parser("preset", help="run a bundled preset")
    p_preset.add_argument("name", help=", ".join(preset_names()))
    for p in (p_run, p_preset):
        p.add_argument("--out", help="output directory (default: output_dir from the config)")
        p.add_argument("--svg", action="store_true", help="also write SVG line charts")
        p.add_argument("--jobs", type=int, default=1, help="parallel sweep members")
        p.add_argument("--horizon", type=int, help="override the number of steps")

    p_ver = sub.add_parser("verify", help="run invariant suites")
    p_ver.add_argument("--suite", choices=sorted(SUITES))
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--mutate", choices=MUTATIONS, help=argparse.SUPPRESS)
    return ap


def _experiment(args, cfg):
    if args.horizon is not None:
        if args.horizon < 0:
            raise ConfigError("horizon must be >= 0")
        cfg = with_horizon(cfg, args.horizon)
    summary = run_experiment(cfg, args.out, svg=args.svg, jobs=max(1, args.jobs))
    for r in summary["runs"]:
        print(f"{r['csv']}: norm {r.get('norm_classification')}, "
              f"final dist {r.get('final_dist_to_limit')}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _experiment(args, load_config(args.config))
        if args.command == "preset":
            return _experiment(args, parse_config(preset_text(args.name)))
        report = verify(args.suite, args.seed, args.mutate)
        print(json.dumps(report, indent=2))
        return EXIT_OK if report["passed"] else EXIT_VERIFY
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        # a missing config file is an I/O failure, not a config error
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
