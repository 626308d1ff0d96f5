"""Command-line entry point: ``swomp-sim``.

Exit codes: 0 on success, 1 for an invalid configuration, 2 for a runtime or
numerical failure (including an unwritable output path).
"""
import argparse
import logging
import sys

from .config import ALGORITHMS, load_config, parse_float_list, parse_int_list
from .exceptions import InvalidConfigurationError, SwompError
from .harness import run_sweep

logger = logging.getLogger("swomp")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def build_parser():
    p = argparse.ArgumentParser(
        prog="swomp-sim",
        description="Monte-Carlo sweep of wideband mmWave channel estimators; writes a CSV.")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--out", help="output CSV path (default: stdout)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--snr", help="SNR grid in dB: 'a,b,c' or 'start:stop:step'")
    p.add_argument("--frames", help="training frame counts M: 'a,b' or 'start:stop:step'")
    p.add_argument("--trials", type=int, help="Monte-Carlo trials per point")
    p.add_argument("--algo", choices=ALGORITHMS + ("all",), help="algorithm to run")
    p.add_argument("--grid", choices=("on", "off"), help="on-grid or off-grid angles")
    p.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    return p


def config_from_args(args):
    overrides = dict(seed=args.seed, trials=args.trials, grid_mode=args.grid, threads=args.threads)
    if args.snr is not None:
        overrides["snr_grid_dB"] = parse_float_list(args.snr)
    if args.frames is not None:
        overrides["M"] = parse_int_list(args.frames)
    if args.algo is not None:
        overrides["algorithms"] = ALGORITHMS if args.algo == "all" else (args.algo,)
    return load_config(args.config, **overrides)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except (InvalidConfigurationError, ValueError) as exc:
        logger.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        logger.error("cannot read configuration: %s", exc)
        return EXIT_CONFIG
    try:
        result = run_sweep(cfg, out=args.out)
    except (OSError, SwompError, ArithmeticError) as exc:
        logger.error("run failed: %s", exc)
        return EXIT_RUNTIME
    if args.out is None:
        sys.stdout.write(result.to_csv())
    else:
        logger.info("wrote %d rows to %s", len(result.rows), args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
