"""Versioned line-delimited artifact files.

Every on-disk artifact starts with a single JSON header line carrying a
``format`` tag, a ``version`` number, and format-specific metadata, followed
by one JSON record per line. Readers refuse unknown formats and versions so
that stale or mismatched artifacts fail loudly instead of being half-read.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Iterator


class ArtifactError(ValueError):
    """Raised when an artifact file has the wrong format or version."""


def write_jsonl(path: str | Path, format_name: str, meta: dict[str, Any],
                rows: Iterable[dict[str, Any]], version: int = 1) -> None:
    header = {"format": format_name, "version": version}
    header.update(meta)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def read_header(path: str | Path, format_name: str, version: int = 1) -> dict[str, Any]:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    if not first:
        raise ArtifactError(f"{path}: empty artifact file")
    try:
        header = json.loads(first)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: unreadable header: {exc}") from exc
    if not isinstance(header, dict) or header.get("format") != format_name:
        raise ArtifactError(
            f"{path}: expected format {format_name!r}, got {header.get('format')!r}"
        )
    if header.get("version") != version:
        raise ArtifactError(
            f"{path}: unsupported {format_name} version {header.get('version')!r}"
        )
    return header


def read_jsonl(path: str | Path, format_name: str,
               version: int = 1) -> tuple[dict[str, Any], Iterator[dict[str, Any]]]:
    header = read_header(path, format_name, version)

    def rows() -> Iterator[dict[str, Any]]:
        with open(path, "r", encoding="utf-8") as fh:
            fh.readline()  # header
            for line in fh:
                line = line.strip()
                if line:
                    yield json.loads(line)

    return header, rows()
