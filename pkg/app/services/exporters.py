# app/services/exporters.py
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from app import __version__
from app.services.errors import OutputError


# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


def build_metadata(command: str, config_hash: str, n_max: Optional[int] = None, gauge: Optional[str] = None,
                   **extra) -> Dict[str, Any]:
    """Header block shared by every result file. Carries no timestamps."""
    metadata = {"tool": "rhombus", "version": __version__, "command": command, "config_hash": config_hash}
    if n_max is not None:
        metadata["n_max"] = n_max
    if gauge is not None:
        metadata["gauge"] = gauge
    metadata.update(extra)
    return metadata


def ensure_directory(directory) -> Path:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"cannot create output directory {directory}: {e.strerror}")
    return directory


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    raise TypeError(f"cannot serialize {type(value).__name__}")


def write_csv(frame: pd.DataFrame, path, metadata: Dict[str, Any]) -> Path:
    """`# key: value` header lines followed by the table."""
    path = Path(path)
    header = "".join(f"# {key}: {metadata[key]}\n" for key in sorted(metadata))
    try:
        with path.open("w", newline="") as handle:
            handle.write(header)
            frame.to_csv(handle, index=False, float_format="%.12g")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e.strerror}")
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def write_json(payload: Dict[str, Any], path, metadata: Dict[str, Any]) -> Path:
    path = Path(path)
    document = {"metadata": metadata, **payload}
    try:
        path.write_text(json.dumps(document, indent=2, sort_keys=True, default=_jsonable) + "\n")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e.strerror}")
    logger.info(f"Wrote {path}")
    return path


def read_csv(path) -> pd.DataFrame:
    """Read back a table written by `write_csv`."""
    return pd.read_csv(path, comment="#")
