"""Deterministic report files: CSV tables, a versioned JSON summary and
two-column plot data.

Everything that depends only on the configuration and the seeds goes into
the deterministic files; wall-clock data lives in ``metadata.json``.  Each
file is written under a ``.partial`` name and renamed once complete, so an
interrupted run leaves its incomplete outputs visibly flagged.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = ["SCHEMA_VERSION", "Certificate", "Result", "emit_report", "load_summaries", "to_jsonable"]

SCHEMA_VERSION = 1


@dataclass
class Certificate:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)


@dataclass
class Result:
    command: str
    tables: dict = field(default_factory=dict)        # name -> (header, rows)
    plots: dict = field(default_factory=dict)         # name -> rows of (x, y)
    certificates: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.certificates)


def to_jsonable(x):
    """Plain JSON types; non-finite floats become ``None`` so output stays strict JSON."""
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [to_jsonable(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if x is None or isinstance(x, str):
        return x
    return str(x)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write(path: str, text: str):
    tmp = path + ".partial"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def emit_report(results, out_dir: str, metadata: dict | None = None) -> int:
    """Write every table, plot file and ``summary.json``; return 0 iff all certificates pass."""
    os.makedirs(out_dir, exist_ok=True)
    tables_meta = {}
    plots_meta = {}
    entries = []
    for res in results:
        for name, (header, rows) in res.tables.items():
            fname = f"{name}.csv"
            _write(os.path.join(out_dir, fname), _csv_text(header, rows))
            tables_meta[name] = {"file": fname, "columns": list(header), "rows": len(rows)}
        for name, rows in res.plots.items():
            fname = f"{name}.dat"
            text = "".join(f"{_fmt(float(x))} {_fmt(float(y))}\n" for x, y in rows)
            _write(os.path.join(out_dir, fname), text)
            plots_meta[name] = {"file": fname, "rows": len(rows)}
        entries.append({
            "command": res.command,
            "passed": res.passed,
            "certificates": [{"name": c.name, "passed": bool(c.passed), "details": c.details}
                             for c in res.certificates],
            "failures": [c.name for c in res.certificates if not c.passed],
            "summary": res.summary,
        })
    passed = all(e["passed"] for e in entries)
    summary = {"schema_version": SCHEMA_VERSION, "passed": passed, "results": entries,
               "tables": tables_meta, "plots": plots_meta}
    _write(os.path.join(out_dir, "summary.json"),
           json.dumps(to_jsonable(summary), indent=2, sort_keys=True) + "\n")
    if metadata is not None:
        _write(os.path.join(out_dir, "metadata.json"),
               json.dumps(to_jsonable(metadata), indent=2, sort_keys=True) + "\n")
    return 0 if passed else 1


def load_summaries(root: str, skip: str | None = None) -> list:
    """Every ``summary.json`` below ``root`` (sorted by path), excluding ``skip``."""
    found = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        if "summary.json" in filenames:
            path = os.path.join(dirpath, "summary.json")
            if skip is not None and os.path.abspath(path) == os.path.abspath(skip):
                continue
            with open(path, encoding="utf-8") as fh:
                found.append((os.path.relpath(path, root), json.load(fh)))
    found.sort(key=lambda item: item[0])
    return found
