# app/commands/common.py
import argparse
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import pandas as pd

from app.services.config import RunConfig, config_hash, load_config
from app.services.errors import RhombusError
from app.services.exporters import (build_metadata, ensure_directory,
                                    write_csv, write_json)
from app.services.run_ledger import RunLedger


# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


def add_common_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="run configuration (JSON)")
    parser.add_argument("--flux", type=float, help="external flux in flux quanta")
    parser.add_argument("--alpha", type=float, help="junction-4 asymmetry ratio")
    parser.add_argument("--nmax", type=int, help="charge cutoff per mode")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--workers", type=int, help="worker threads (default: logical cores)")
    parser.add_argument("--seed", type=int, help="seed for fit restarts and synthetic data")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--no-ledger", action="store_true", help="do not record the run in the ledger")


@dataclass
class RunContext:
    """Everything a command needs once its configuration has been validated."""

    command: str
    config: RunConfig
    config_hash: str
    output_dir: Path
    ledger: RunLedger
    written: List[Path] = field(default_factory=list)

    def metadata(self, **extra) -> Dict[str, Any]:
        solver = self.config.solver
        return build_metadata(self.command, self.config_hash, solver.n_max, solver.gauge.value, **extra)

    def wants(self, fmt: str) -> bool:
        return fmt in self.config.output.formats

    def csv(self, name: str, frame: pd.DataFrame, **extra) -> Optional[Path]:
        if not self.wants("csv"):
            return None
        return self._record(write_csv(frame, self.output_dir / name, self.metadata(**extra)), "csv")

    def json(self, name: str, payload: Dict[str, Any], **extra) -> Optional[Path]:
        if not self.wants("json"):
            return None
        return self._record(write_json(payload, self.output_dir / name, self.metadata(**extra)), "json")

    def _record(self, path: Path, kind: str) -> Path:
        self.written.append(path)
        self.ledger.add_artifact(str(path), kind)
        return path


def run_command(command: str, args: argparse.Namespace, body: Callable[[RunContext], Any]) -> int:
    """Validate, open a ledger entry, run `body`, close the entry. Errors propagate to the caller."""
    overrides = {
        "flux": getattr(args, "flux", None),
        "alpha": getattr(args, "alpha", None),
        "nmax": getattr(args, "nmax", None),
        "out": getattr(args, "out", None),
        "workers": getattr(args, "workers", None),
        "seed": getattr(args, "seed", None),
        "dataset": getattr(args, "dataset", None),
    }
    config = load_config(getattr(args, "config", None), overrides)
    digest = config_hash(config)
    output_dir = ensure_directory(config.output.directory)
    ledger = RunLedger(enabled=not getattr(args, "no_ledger", False))
    ledger.start(command, digest, str(output_dir), config.solver.n_max, config.solver.gauge.value)
    context = RunContext(command, config, digest, output_dir, ledger)
    logger.info(f"Running {command} (config {digest[:12]}) into {output_dir}")
    try:
        body(context)
    except RhombusError as e:
        ledger.finish(e.exit_code, str(e))
        raise
    except OSError as e:
        ledger.finish(4, str(e))
        raise
    ledger.finish(0)
    logger.info(f"{command} finished: {len(context.written)} files written")
    return 0
