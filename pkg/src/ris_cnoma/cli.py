"""Command line entry point: ``ris-cnoma sweep|converge --config FILE``."""
import argparse
import logging
import sys

from .experiment import ConfigError, load_config, run_convergence, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


def build_parser():
    ap = argparse.ArgumentParser(prog="ris-cnoma", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="power sweep over all realizations and schemes")
    sw.add_argument("--config", required=True)
    sw.add_argument("--out")
    sw.add_argument("--seed", type=int, help="base seed (overrides the config)")
    sw.add_argument("--realizations", type=int)
    sw.add_argument("--schemes", help="comma-separated subset of the schemes")

    cv = sub.add_parser("converge", help="convergence traces at one transmit power")
    cv.add_argument("--config", required=True)
    cv.add_argument("--power-dbm", type=float, default=30.0)
    cv.add_argument("--out")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "sweep":
            over = {}
            if args.seed is not None:
                over["base_seed"] = args.seed
            if args.realizations is not None:
                over["realizations"] = args.realizations
            if args.schemes:
                over["schemes"] = [s.strip() for s in args.schemes.split(",") if s.strip()]
            if over:
                from dataclasses import asdict
                from .experiment import config_from_dict
                cfg = config_from_dict({**asdict(cfg), **over})
            res = run_sweep(cfg, args.out)
        else:
            res = run_convergence(cfg, args.power_dbm, args.out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"io error: {err}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {len(res.rows)} rows to {res.out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
