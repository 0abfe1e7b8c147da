from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

if __package__ in (None, ""):
    sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.configuration import load_config_file, load_run_config
from src.engine import COMMANDS, LaboratoryEngine
from src.errors import LaboratoryError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_NAME = "lab_config.json"


def bundled_path(file_name: str) -> Path:
    if getattr(sys, "frozen", False) and hasattr(sys, "_MEIPASS"):
        return Path(sys._MEIPASS) / file_name
    return Path(__file__).resolve().parent.parent / file_name


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shell-lab",
        description="Groundstates and best constants of -Lap u = V_{R,alpha}(|x|) u^p on the unit ball.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, default=None, help=f"JSON config (default: bundled {DEFAULT_CONFIG_NAME})")
    parser.add_argument("--out", type=Path, default=None, help="output file; printed to stdout when omitted")
    parser.add_argument("--format", choices=("csv", "json"), default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    parser.add_argument("-N", type=int, default=None, help="override problem.N")
    parser.add_argument("-p", type=float, default=None, help="override problem.p")
    parser.add_argument("-R", type=float, default=None, help="override problem.R")
    parser.add_argument("--alpha", type=float, default=None, help="override problem.alpha")
    parser.add_argument("--sobolev-S", dest="S", type=float, default=None, help="Sobolev constant used for R0")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")

    try:
        raw = load_config_file(args.config or bundled_path(DEFAULT_CONFIG_NAME))
        overrides = {
            "N": args.N,
            "p": args.p,
            "R": args.R,
            "alpha": args.alpha,
            "S": args.S,
            "seed": args.seed,
            "threads": args.threads,
            "out": args.out,
            "format": args.format,
        }
        config = load_run_config(raw, overrides, command=args.command)
        engine = LaboratoryEngine(config)
        output = engine.run()
    except LaboratoryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if config.output.path is None:
        sys.stdout.write(engine.render(output, config.output.format))
    else:
        for path in engine.export(output, config.output.path, config.output.format):
            logger.info("wrote %s", path)
    return 0 if output.ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
