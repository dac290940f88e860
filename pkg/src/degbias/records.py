"""CSV emission with a provenance comment line, and the per-run manifest."""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
    return path


def header_line(config_hash: str, **extra) -> str:
    parts = [f"degbias {__version__}", f"config_hash={config_hash}"]
    parts += [f"{k}={v}" for k, v in extra.items()]
    return "# " + " ".join(parts)


def write_csv(path, rows, config_hash: str, fieldnames=None, **extra) -> Path:
    """Write dict rows; the first line is a ``#`` comment with version and config hash."""
    rows = list(rows)
    if fieldnames is None:
        fieldnames = []
        for row in rows:
            fieldnames += [k for k in row if k not in fieldnames]
    buf = io.StringIO()
    buf.write(header_line(config_hash, **extra) + "\n")
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(v) for k, v in row.items()})
    return atomic_write_text(path, buf.getvalue())


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


class MalformedCSV(ValueError):
    pass


def read_csv(path):
    """Return ``(header_comment, rows)``; numeric-looking cells become floats."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise MalformedCSV(f"cannot read {path}: {exc}") from exc
    comment = ""
    if lines and lines[0].startswith("#"):
        comment, lines = lines[0], lines[1:]
    if not lines:
        raise MalformedCSV(f"{path} has no header row")
    reader = csv.DictReader(lines)
    rows = []
    for lineno, row in enumerate(reader, 2):
        if None in row or any(v is None for v in row.values()):
            raise MalformedCSV(f"{path}:{lineno}: wrong number of fields")
        rows.append({k: _parse(v) for k, v in row.items()})
    return comment, rows


def _parse(v: str):
    try:
        return float(v)
    except ValueError:
        return v


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str = __version__
    artifacts: dict = field(default_factory=dict)   # seed or stage -> list of paths
    timings: dict = field(default_factory=dict)     # stage -> seconds

    def add(self, key, path) -> None:
        self.artifacts.setdefault(str(key), []).append(str(path))

    def missing(self) -> list:
        return [p for paths in self.artifacts.values() for p in paths if not Path(p).exists()]

    def save(self, path) -> Path:
        return atomic_write_text(path, json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))
