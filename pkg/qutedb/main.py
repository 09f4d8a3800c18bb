"""
qutedb - Command Line Entry Point

Parses the global flags, loads settings and the device model, configures
logging and dispatches to the query and bench commands.
"""

import argparse
import logging
import sys
from typing import Optional, Sequence

from . import __version__
from .commands import bench, query
from .config import LOG_LEVEL, load_device, load_settings
from .errors import QuteError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qutedb",
        description="Hybrid quantum-classical SQL engine on a noise-aware statevector simulator",
    )
    parser.add_argument("--version", action="version", version=f"qutedb {__version__}")
    parser.add_argument("--config", help="settings file (JSON or YAML)")
    parser.add_argument("--seed", type=int, help="query and sampling seed")
    parser.add_argument("--shots", type=int, help="default shot budget per quantum node")
    parser.add_argument("--device", help="device model file (JSON)")
    parser.add_argument("--output", choices=["table", "csv"], help="result format")
    parser.add_argument("--realization", choices=["auto", "quantum", "classical"],
                        help="force every eligible node to one realization")
    parser.add_argument("--noiseless", action="store_true", help="sample without fault injection")
    parser.add_argument("--data-dir", help="catalog directory")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")

    subparsers = parser.add_subparsers(dest="command")
    query.register(subparsers)
    bench.register(subparsers)
    return parser


def configure_logging(level: str) -> None:
    """Root logger to stderr so stdout carries only results"""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.WARNING),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or LOG_LEVEL)
    try:
        config = load_settings(
            args.config,
            seed=args.seed,
            default_shots=args.shots,
            output=args.output,
            realization=args.realization,
            data_dir=args.data_dir,
            device_path=args.device,
            noise=False if args.noiseless else None,
        )
        device = load_device(config.device_path)
        handler = getattr(args, "handler", query.default_handler)
        return handler(args, config, device)
    except QuteError as e:
        sys.stderr.write(f"error: {e}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
