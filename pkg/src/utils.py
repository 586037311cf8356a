"""Shared utilities for the relay-based synchronization simulator."""

import csv
import json
import logging
from collections.abc import Iterable, Iterator, Sequence
from logging.config import dictConfig
from pathlib import Path
from typing import Any

from config import LOG_LEVELS

logger = logging.getLogger(__name__)


def setup_logging(log_level: str) -> None:
    """Configure logging for the specified log level.

    Args:
        log_level: Log level key (debug, info, warn, error)

    """
    dictConfig(
        {
            "version": 1,
            "formatters": {
                "default": {
                    "format": "[%(asctime)s] %(levelname)s in %(module)s: %(message)s",
                }
            },
            "handlers": {
                "console": {
                    "class": "logging.StreamHandler",
                    "formatter": "default",
                    "level": "DEBUG",
                    "stream": "ext://sys.stdout",
                }
            },
            "loggers": {
                "": {"level": LOG_LEVELS[log_level], "handlers": ["console"]},
            },
            "disable_existing_loggers": False,
        }
    )


def dump_json_line(record: dict[str, Any]) -> str:
    """Canonical one-line JSON rendering (sorted keys, no spaces)."""
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def write_jsonl(path: Path, records: Iterable[dict[str, Any]]) -> int:
    """Write records as JSON lines; returns the number of lines written."""
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(dump_json_line(record) + "\n")
            count += 1
    logger.debug("Wrote %d records to %s", count, path)
    return count


def read_jsonl(path: Path) -> Iterator[dict[str, Any]]:
    """Yield the records of a JSON lines file, skipping blank lines."""
    with path.open("r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                yield json.loads(line)


def write_json(path: Path, data: object) -> None:
    """Write pretty, key-sorted JSON."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def write_csv(
    path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]
) -> None:
    """Write a CSV file with a header row, even when there are no rows."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def seconds(ms: int) -> str:
    """Render milliseconds as seconds for log messages."""
    return f"{ms / 1000:.3f}s"
