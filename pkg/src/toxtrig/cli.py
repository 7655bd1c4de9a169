"""Command-line entry point.

    toxtrig --config pipeline.yaml --stage all
    toxtrig --config pipeline.yaml --stage score --force
    toxtrig --config pipeline.yaml --stage train --seed 7 --out runs/seed7

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 external-service error.
"""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .config import load_config
from .errors import ConfigError, DataError, ExternalServiceError
from .pipeline import STAGES, run_stage

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_EXTERNAL = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this CLI reserves 2 for data errors."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="toxtrig",
        description="Detect and explain toxicity triggers in threaded comment corpora.",
    )
    parser.add_argument("--config", required=True, help="pipeline configuration YAML")
    parser.add_argument(
        "--stage",
        required=True,
        choices=STAGES + ("all",),
        help="pipeline stage to run ('all' runs every stage in order)",
    )
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument(
        "--force", action="store_true", help="re-run even when inputs are unchanged"
    )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, seed_override=args.seed, out_override=args.out)
        stages = STAGES if args.stage == "all" else (args.stage,)
        for stage in stages:
            result = run_stage(stage, config, force=args.force)
            state = "up to date" if result.skipped else "wrote " + ", ".join(result.outputs)
            print(f"[toxtrig] stage {stage}: {state}")
    except ConfigError as exc:
        print(f"toxtrig: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ExternalServiceError as exc:
        print(f"toxtrig: external service error: {exc}", file=sys.stderr)
        return EXIT_EXTERNAL
    except (DataError, OSError) as exc:
        print(f"toxtrig: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
