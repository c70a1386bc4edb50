"""
Artifact files: JSON exports, CSV tables and text reports, each stamped with
the config hash and seed that produced it
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

from ftcbench.core.errors import ConfigError
from ftcbench.modules.simulator import LOG_COLUMNS, SimLog

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
STAMP_PREFIX = "# ftcbench"


def _stamp(config_hash: str, seed: int) -> str:
    return f"{STAMP_PREFIX} config_hash={config_hash} seed={seed}"


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_json(path: PathLike, document: Dict[str, Any], config_hash: str, seed: int) -> Path:
    """Sorted-key JSON with config_hash and seed at the top level"""
    path = _prepare(path)
    stamped = dict(document, config_hash=config_hash, seed=seed)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(stamped, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.debug("wrote %s", path)
    return path


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]],
              config_hash: str, seed: int) -> Path:
    path = _prepare(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(_stamp(config_hash, seed) + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    logger.debug("wrote %s", path)
    return path


def _parse_stamp(line: str) -> Dict[str, str]:
    meta = {}
    for token in line[len(STAMP_PREFIX):].split():
        key, _, value = token.partition("=")
        meta[key] = value
    return meta


def read_csv(path: PathLike) -> Tuple[Dict[str, str], List[str], List[List[str]]]:
    """(stamp fields, header, rows); the stamp line is optional"""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            lines = f.read().splitlines()
    except FileNotFoundError as e:
        raise ConfigError(f"file not found: {path}") from e
    meta: Dict[str, str] = {}
    if lines and lines[0].startswith(STAMP_PREFIX):
        meta = _parse_stamp(lines[0])
        lines = lines[1:]
    if not lines:
        raise ConfigError(f"{path}: no header row")
    reader = csv.reader(lines)
    header = next(reader)
    return meta, header, [row for row in reader if row]


def write_text(path: PathLike, text: str, config_hash: str, seed: int) -> Path:
    path = _prepare(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write(_stamp(config_hash, seed) + "\n")
        f.write(text.rstrip("\n") + "\n")
    return path


def write_simlog(path: PathLike, log: SimLog, config_hash: str, seed: int) -> Path:
    return write_csv(path, LOG_COLUMNS, log.rows(), config_hash, seed)


def read_simlog(path: PathLike, name: str = "", variant: str = "") -> SimLog:
    _, header, rows = read_csv(path)
    return SimLog.from_rows(header, rows, name=name or Path(path).stem, variant=variant)
