# app/main.py
import argparse
import logging
import sys
from typing import List, Optional

from app.commands import coherence, fit, quantize, spectrum, wavefunction
from app.services.errors import RhombusError


# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


def die(msg: str, code: int = 1) -> int:
    """Report an error and hand back the exit code."""
    logger.error(msg)
    print(f"ERROR: {msg}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rhombus", description="Rhombus qubit circuit engine")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in (quantize, spectrum, wavefunction, coherence, fit):
        module.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    try:
        return args.func(args)
    except RhombusError as e:
        return die(str(e), e.exit_code)
    except OSError as e:
        return die(f"I/O error: {e}", 4)


if __name__ == "__main__":
    sys.exit(main())
