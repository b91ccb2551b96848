"""Serialization of per-passage metrics.

Two formats, both deterministic for identical runs:

* ``csv`` with the frozen columns ``config_hash, N, delta, pid, passage,
  rmrs, aborted`` (one row per completed passage);
* ``json_lines``: a ``summary`` line followed by one ``passage`` line per
  passage record, readable back with :func:`load_report`.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from ..treelock import choose_delta
from ..words import decode, encode
from .experiment import ExperimentConfig, MetricsReport

CSV_COLUMNS = ("config_hash", "N", "delta", "pid", "passage", "rmrs", "aborted")
FORMATS = ("csv", "json_lines")


def _shape(config: ExperimentConfig) -> tuple[int, int | str]:
    if config.object == "tree_lock":
        return config.size, config.delta or choose_delta(config.size)
    return config.size, ""


def render_report(reports, fmt: str) -> str:
    if isinstance(reports, MetricsReport):
        reports = [reports]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rep in reports:
            n, delta = _shape(rep.config)
            h = rep.config.config_hash()
            for p in rep.completed:
                w.writerow([h, n, delta, p["pid"], p["passage"], p["rmrs"], int(bool(p["aborted"]))])
        return buf.getvalue()
    if fmt == "json_lines":
        lines = []
        for rep in reports:
            lines.append({"kind": "summary", "config": rep.config.to_dict(), **rep.summary()})
            for p in rep.passages:
                lines.append({"kind": "passage", "config_hash": rep.config.config_hash(), **p})
        return "".join(json.dumps(encode(x), sort_keys=True) + "\n" for x in lines)
    raise ValueError(f"unknown report format {fmt!r}; expected one of {FORMATS}")


def emit_report(reports, fmt: str, path) -> Path:
    """Write ``reports`` to ``path``; I/O errors propagate."""
    path = Path(path)
    path.write_text(render_report(reports, fmt))
    return path


def load_report(path) -> list[dict]:
    """Read a json_lines report back: a list of ``{"summary", "passages"}`` dicts."""
    runs: list[dict] = []
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            rec = decode(json.loads(line))
            kind = rec.pop("kind")
            if kind == "summary":
                runs.append({"summary": rec, "passages": []})
            elif kind == "passage":
                if not runs:
                    raise ValueError("passage record before any summary")
                runs[-1]["passages"].append(rec)
            else:
                raise ValueError(f"unknown record kind {kind!r}")
    return runs
