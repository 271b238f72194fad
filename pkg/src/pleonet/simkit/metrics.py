"""Append-only metrics collection with CSV and JSON-lines export."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from collections import defaultdict


def _cell(v):
    # repr keeps floats round-trippable and identical across runs
    return repr(v) if isinstance(v, float) else v


class MetricsSink:
    """Counters keyed by (metric, entity), CSV tables and JSON-lines streams.

    Nothing touches the disk until :meth:`flush`, which writes every file
    through a temporary name and renames it into place.
    """

    def __init__(self):
        self.counters: dict = defaultdict(float)
        self.tables: dict[str, tuple[list[str], list[list]]] = {}
        self.streams: dict[str, list[dict]] = {}
        self._closed = False

    def _check(self):
        if self._closed:
            raise RuntimeError("metrics sink already flushed")

    def incr(self, metric: str, entity: str = "", by: float = 1) -> None:
        self._check()
        self.counters[(metric, entity)] += by

    def counter(self, metric: str, entity: str = "") -> float:
        return self.counters.get((metric, entity), 0)

    def table(self, name: str, header: list[str]) -> None:
        self._check()
        if name in self.tables and self.tables[name][0] != list(header):
            raise ValueError(f"table {name!r} redeclared with a different header")
        self.tables.setdefault(name, (list(header), []))

    def row(self, name: str, values: list) -> None:
        self._check()
        header, rows = self.tables[name]
        if len(values) != len(header):
            raise ValueError(f"table {name!r} expects {len(header)} columns")
        rows.append([_cell(v) for v in values])

    def emit(self, stream: str, record: dict) -> None:
        self._check()
        self.streams.setdefault(stream, []).append(record)

    def render(self) -> dict[str, str]:
        """File name -> exact file content."""
        out = {}
        for name, (header, rows) in self.tables.items():
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
            out[f"{name}.csv"] = buf.getvalue()
        for name, recs in self.streams.items():
            out[f"{name}.jsonl"] = "".join(json.dumps(r) + "\n" for r in recs)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "entity", "value"])
        for (m, e), v in sorted(self.counters.items()):
            w.writerow([m, e, _cell(v)])
        out["counters.csv"] = buf.getvalue()
        return out

    def flush(self, out_dir: str, extra: dict[str, str] | None = None) -> list[str]:
        files = self.render()
        files.update(extra or {})
        os.makedirs(out_dir, exist_ok=True)
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.")
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, os.path.join(out_dir, name))
        self._closed = True
        return sorted(files)
