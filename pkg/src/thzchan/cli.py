"""Command line entry point: ``thzchan <verb> [options]``.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

import argparse
import logging
import sys
from pathlib import Path

from .config import load_scenario
from .exceptions import ConfigError
from .harness import FIGURES, check_budget, reproduce_figure, run_montecarlo

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _common(parser):
    parser.add_argument("--scenario", type=Path, help="scenario file (default: bundled desk-scale defaults)")
    parser.add_argument("--seed", type=int, help="override the scenario seed")
    parser.add_argument("--ensemble", type=int, help="override the number of drops")
    parser.add_argument("--out", type=Path, default=Path("run"), help="output directory (default: ./run)")
    parser.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="override one scenario key; repeatable")
    parser.add_argument("--paper-scale", action="store_true",
                        help="lift the desk-scale memory guard (large arrays/ensembles)")
    parser.add_argument("--workers", type=int, default=1, help="worker processes for drops (default 1)")


def build_parser():
    parser = argparse.ArgumentParser(prog="thzchan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    verbs = parser.add_subparsers(dest="verb", required=True)

    gen = verbs.add_parser("generate", help="draw drops and write their transfer-function tensors")
    _common(gen)
    st = verbs.add_parser("stats", help="run the Monte Carlo ensemble and write statistics")
    _common(st)
    st.add_argument("--only", action="append", default=None, metavar="STAT",
                    help="restrict to one statistic (acf, fcf, ccf, psd, interval); repeatable")
    st.add_argument("--write-ctf", action="store_true", help="also store the raw tensors")
    fig = verbs.add_parser("figure", help="emit the CSVs of one figure recipe")
    fig.add_argument("name", help=", ".join(FIGURES))
    _common(fig)
    val = verbs.add_parser("validate-config", help="parse and validate a scenario, print its hash")
    _common(val)
    return parser


def _scenario(args):
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.ensemble is not None:
        overrides.append(f"ensemble={args.ensemble}")
    return load_scenario(args.scenario, overrides, output_dir=args.out)


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        scenario = _scenario(args)
        if args.verb == "validate-config":
            check_budget(scenario, scenario["stats"], scenario["write_ctf"], args.paper_scale)
            print(f"ok {scenario.config_hash()}")
            return EXIT_OK
        if args.verb == "generate":
            manifest = run_montecarlo(scenario, stats=(), write_ctf=True, workers=args.workers,
                                      paper_scale=args.paper_scale)
            print(f"{len(manifest.completed)} drops written to {args.out}")
        elif args.verb == "stats":
            stats = tuple(args.only) if args.only else None
            if stats:
                bad = [s for s in stats if s not in ("acf", "fcf", "ccf", "psd", "interval")]
                if bad:
                    raise ConfigError(f"unknown statistic {bad[0]!r}", field="stats")
            manifest = run_montecarlo(scenario, stats=stats, write_ctf=args.write_ctf or None,
                                      workers=args.workers, paper_scale=args.paper_scale)
            for path in manifest.stats_files:
                print(args.out / path)
        else:
            for path in reproduce_figure(args.name, scenario, workers=args.workers, paper_scale=args.paper_scale):
                print(path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        logging.getLogger(__name__).debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
