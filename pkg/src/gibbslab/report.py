"""Audit rows, deterministic CSV emission, and run manifests."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field

__all__ = ["AuditRow", "AuditReport", "write_csv", "manifest", "file_sha256"]


@dataclass
class AuditRow:
    """One audited inequality: lhs <= rhs + slack."""

    name: str
    lhs: float
    rhs: float
    slack: float
    anchor: str
    note: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.lhs <= self.rhs + self.slack)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "pass": self.passed,
            "anchor": self.anchor,
            "note": self.note,
        }


@dataclass
class AuditReport:
    rows: list = field(default_factory=list)

    def add(self, name: str, lhs: float, rhs: float, slack: float,
            anchor: str, note: str = "") -> AuditRow:
        row = AuditRow(name, float(lhs), float(rhs), float(slack), anchor, note)
        self.rows.append(row)
        return row

    def add_row(self, row: AuditRow) -> AuditRow:
        self.rows.append(row)
        return row

    def extend(self, rows) -> None:
        self.rows.extend(rows)

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def failures(self) -> list:
        return [r for r in self.rows if not r.passed]

    def to_json(self) -> str:
        return json.dumps({
            "all_passed": self.all_passed,
            "n_rows": len(self.rows),
            "rows": [r.as_dict() for r in self.rows],
        }, indent=2, sort_keys=True)


def write_csv(path, header, rows) -> None:
    """Deterministic CSV: repr-formatted floats, no locale, no timestamps."""
    def fmt(x):
        if isinstance(x, float):
            return repr(x)
        return str(x)

    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(x) for x in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest(config_dict: dict, outputs: dict, started: float) -> dict:
    """Machine-readable record of a run: config hash, output hashes, wall
    time. Timestamps live here so CSV bodies stay byte-stable."""
    cfg_bytes = json.dumps(config_dict, sort_keys=True).encode()
    return {
        "config_sha256": hashlib.sha256(cfg_bytes).hexdigest(),
        "outputs": outputs,
        "started_unix": started,
        "elapsed_seconds": time.time() - started,
    }
