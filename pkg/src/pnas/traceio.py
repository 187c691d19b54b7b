"""Trace and summary persistence.

Traces are JSON-lines: one event dict per line, keys sorted, compact
separators, flushed per line. Serialization is canonical, so two runs
with the same configuration produce byte-identical files, and a crash
loses at most the line being written.
"""

from __future__ import annotations

import csv
import json
from typing import Iterable, Sequence


class TraceWriter:
    """Append-only JSON-lines writer; the single serialization point of a run."""

    def __init__(self, path: str) -> None:
        self.path = path
        self._fh = open(path, "w", encoding="utf-8", newline="\n")

    def emit(self, event: dict) -> None:
        self._fh.write(json.dumps(event, sort_keys=True, separators=(",", ":")) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "TraceWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_trace(path: str) -> list[dict]:
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                events.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: not valid JSON: {exc}") from None
    return events


def eval_accuracies(events: Iterable[dict]) -> list[float]:
    """Successful accuracies from eval events, in file order."""
    return [
        ev["value"]
        for ev in events
        if ev.get("event") == "eval" and ev.get("value") is not None and "error" not in ev
    ]


def write_summary_csv(path: str, rows: Sequence[dict], field_order: Sequence[str] | None = None) -> None:
    """Dict rows to CSV; column order is the first row's key order unless given."""
    if not rows:
        raise ValueError("summary needs at least one row")
    if field_order is not None:
        fields = list(field_order)
    else:
        fields = []  # rows may grow columns (top-M points appear once M models exist)
        for row in rows:
            fields.extend(key for key in row if key not in fields)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _plain(row.get(key)) for key in fields})


def _plain(value):
    if isinstance(value, float):
        return repr(value)  # shortest round-trip form
    return value


def write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
