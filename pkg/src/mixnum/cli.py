"""Command-line runner.

Exit codes: 0 success, 1 a check failed (or the model could not be built),
2 configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError
from .experiments import ExperimentSpec, run_ber_sweep, run_export_matrix, run_papr, run_verify
from .ini import IllConditionedError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON experiment configuration")
    common.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads for Monte Carlo batches")
    arm = common.add_mutually_exclusive_group()
    arm.add_argument("--preeq", dest="preeq", action="store_const", const="on",
                     help="simulate only the pre-equalized arm")
    arm.add_argument("--no-preeq", dest="preeq", action="store_const", const="off",
                     help="simulate only the plain arm")
    arm.add_argument("--both", dest="preeq", action="store_const", const="both",
                     help="simulate both arms (default)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mixnum", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify", parents=[common], help="check the INI model against the chain")
    sub.add_parser("ber", parents=[common], help="Monte Carlo BER sweep")
    sub.add_parser("papr", parents=[common], help="PAPR CCDF, pre-equalized vs plain")
    sub.add_parser("export-matrix", parents=[common], help="write W and its inverse")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = ExperimentSpec.load(args.config).with_overrides(
            seed=args.seed, out=args.out, threads=args.threads, preeq=args.preeq
        )
        # with_overrides bypasses from_dict's checks; re-run them
        spec = ExperimentSpec.from_dict(spec.to_dict())
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(spec.out)
    try:
        if args.command == "verify":
            report = run_verify(spec)
            text = report.render()
            out.mkdir(parents=True, exist_ok=True)
            (out / "verify_report.txt").write_text(text)
            print(text, end="")
            return EXIT_OK if report.passed else EXIT_FAIL
        if args.command == "ber":
            path = run_ber_sweep(spec)
            print(f"wrote {path}")
        elif args.command == "papr":
            for order, (path, delta) in run_papr(spec).items():
                print(f"wrote {path}  ({order}-QAM, PAPR shift at CCDF=1e-2: {delta:+.3f} dB)")
        elif args.command == "export-matrix":
            for name, paths in run_export_matrix(spec).items():
                print(f"wrote {name}: " + ", ".join(str(p) for p in paths))
    except IllConditionedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except KeyboardInterrupt:
        print("interrupted; completed rows are on disk", file=sys.stderr)
        return 130
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
