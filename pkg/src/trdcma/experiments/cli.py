"""``trdcma`` command line.

Exit codes: 0 success, 2 configuration error, 3 acceptance threshold
violated by the run's results.
"""
from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigurationError
from .config import ExperimentConfig
from .scenarios import RUNNERS

EXIT_OK, EXIT_CONFIG, EXIT_THRESHOLD = 0, 2, 3

COMMANDS = {
    "mai": "mai_traces",
    "sir": "sir_sweep",
    "bep": "bep_sweep",
    "e2e": "end_to_end",
    "calibrate": "calibrate",
}

log = logging.getLogger("trdcma")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trdcma", description="Time-reversal DCMA link simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, scenario in COMMANDS.items():
        p = sub.add_parser(name, help=f"run the {scenario} scenario")
        p.add_argument("--config", required=True, help="YAML config file")
        p.add_argument("--seed", type=int, required=True, help="master seed")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    scenario = COMMANDS[args.command]
    try:
        cfg = ExperimentConfig.load(args.config)
        if cfg.scenario not in (None, scenario):
            raise ConfigurationError(f"config is for scenario {cfg.scenario!r}, not {scenario!r}")
        cfg = cfg.with_overrides(scenario=scenario, master_seed=args.seed)
        result = RUNNERS[scenario](cfg, args.out)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for key, value in sorted(result.summary.items()):
        log.info("%s: %s", key, value)
    print(f"{scenario}: wrote {len(result.files)} files to {result.out_dir}")
    if not result.passed:
        print(f"{scenario}: acceptance threshold violated: {result.summary}", file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
