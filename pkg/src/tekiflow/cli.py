"""Command-line experiment runner.

Exit codes: 0 success, 1 runtime or verification failure, 2 configuration
error.
"""

from __future__ import annotations

import argparse
import sys
import traceback

from .config import ConfigError, load_config
from .runner import check_experiment, reproduce, run_experiment


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tekiflow",
        description="Derivative-free ensemble inversion experiments with bound diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configured experiment")
    p_run.add_argument("config", help="path to a JSON experiment configuration")

    p_rep = sub.add_parser("reproduce", help="re-create the curves of one figure")
    p_rep.add_argument(
        "figure", choices=["spread", "loss", "loss-gap", "estimate", "adaptive"]
    )
    p_rep.add_argument("--scale", choices=["desk", "paper"], default="desk")
    p_rep.add_argument("--output", default="out", help="output directory root")
    p_rep.add_argument(
        "--workers", type=int, default=1, help="process-pool size for the independent runs"
    )

    p_check = sub.add_parser("check", help="run the invariant suite on a configuration")
    p_check.add_argument("config", help="path to a JSON experiment configuration")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = _load(args.config)
            result = run_experiment(config, write=True)
            for name, path in sorted(result.paths.items()):
                print(f"wrote {name}: {path}")
            if not result.report.passed:
                n = len(result.report.failures())
                print(f"bound checks FAILED at {n} checkpoint entries", file=sys.stderr)
                return 1
            print("all bound checks passed")
            return 0
        if args.command == "reproduce":
            curves = reproduce(args.figure, args.scale, args.output, workers=args.workers)
            for name, path in sorted(curves.items()):
                print(f"wrote {name}: {path}")
            return 0
        if args.command == "check":
            config = _load(args.config)
            verdict, passed = check_experiment(config)
            for check in verdict["checks"]:
                status = "pass" if check["passed"] else "FAIL"
                print(f"{status}  {check['name']}  ({check['value']:.3e})")
            print("verdict:", "pass" if passed else "FAIL")
            return 0 if passed else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1
    return 0


def _load(path):
    return load_config(path)


if __name__ == "__main__":
    sys.exit(main())
