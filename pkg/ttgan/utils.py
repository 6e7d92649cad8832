# This utils file handles the helpers shared by every command: env config, logging setup and writing run outputs to disk.

import csv
import json
import logging
import os
from pathlib import Path
from typing import Any, Iterable, Sequence

# Default location for run outputs, relative to the working dir unless overridden
DEFAULT_OUTPUT_DIR = "runs"

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'

LOG_LEVEL_ENV_VAR = "TTGAN_LOG_LEVEL"
OUTPUT_DIR_ENV_VAR = "TTGAN_OUTPUT_DIR"
WORKERS_ENV_VAR = "TTGAN_WORKERS"


def configure_logging(level: str | None = None) -> None:
    """ Configure the root logger once, level comes from the argument, then TTGAN_LOG_LEVEL, then INFO. """

    name = (level or os.getenv(LOG_LEVEL_ENV_VAR) or "INFO").upper()
    numeric = logging.getLevelName(name)
    if not isinstance(numeric, int):
        raise ValueError(f"Unknown log level {name!r} (set {LOG_LEVEL_ENV_VAR} to DEBUG, INFO, WARNING or ERROR)")

    logging.basicConfig(level=numeric, format=LOG_FORMAT)
    # basicConfig is a no-op once handlers exist, the level still has to follow the latest call
    logging.getLogger().setLevel(numeric)


def get_int_env(name: str, default: int) -> int:
    value = os.getenv(name)
    if value is None or value.strip() == "":
        return default

    try:
        return int(value)
    except ValueError as exc:
        raise ValueError(f"Environment variable {name} must be an integer") from exc


def get_output_dir(default: str | os.PathLike | None = None) -> Path:
    """ Output dir precedence: explicit value, TTGAN_OUTPUT_DIR, then the DEFAULT_OUTPUT_DIR next to the working dir. """

    if default is not None:
        return Path(default)
    return Path(os.getenv(OUTPUT_DIR_ENV_VAR, DEFAULT_OUTPUT_DIR))


def get_workers(default: int = 1) -> int:
    workers = get_int_env(WORKERS_ENV_VAR, default)
    if workers < 1:
        raise ValueError(f"Environment variable {WORKERS_ENV_VAR} must be >= 1, got {workers}")
    return workers


def format_cell(value: Any) -> str:
    # None means "term not present in this mode", keep the cell empty so plotting tools read it as missing
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_tsv(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """ Write a tab separated file with a header row, creating the parent dir if needed. """

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    with open(path, "w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file, delimiter="\t", lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])

    logging.info(f"Wrote {path}")
    return path


def read_tsv(path: str | os.PathLike) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as file:
        return list(csv.DictReader(file, delimiter="\t"))


def write_json(path: str | os.PathLike, payload: Any) -> Path:
    """ sort_keys + fixed indent so the same payload always serializes to the same bytes """

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")
    logging.info(f"Wrote {path}")
    return path


def read_json(path: str | os.PathLike) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))
