"""Report serialization: versioned JSON, CSV rows and a plain-text table."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .checks import CheckReport

REPORT_VERSION = 1
FORMATS = ("json", "csv", "text")
CSV_FIELDS = ("id", "kind", "status", "residual", "tolerance", "estimate", "stderr", "samples")


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in sorted(x.items(), key=lambda kv: str(kv[0]))}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return repr(x)  # JSON has no inf/nan
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    return x


def _ordered(reports) -> list[CheckReport]:
    return sorted(reports, key=lambda r: r.id)


def report_dict(r: CheckReport, timings: bool = False) -> dict:
    d = {
        "id": r.id, "kind": r.kind, "status": r.status, "residual": r.residual, "tolerance": r.tolerance,
        "estimate": r.estimate, "stderr": r.stderr, "samples": r.samples, "diagnostics": r.diagnostics,
    }
    if timings:
        d["wall_time"] = r.wall_time
    return _plain(d)


def render_json(reports, timings: bool = False, meta: dict | None = None) -> str:
    doc = {"report_version": REPORT_VERSION, "checks": [report_dict(r, timings) for r in _ordered(reports)]}
    if meta:
        doc["scenario"] = _plain(meta)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def render_csv(reports, timings: bool = False) -> str:
    fields = CSV_FIELDS + (("wall_time",) if timings else ())
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in _ordered(reports):
        w.writerow({k: ("" if v is None else v) for k, v in report_dict(r, timings).items()})
    return buf.getvalue()


def _num(x) -> str:
    return "-" if x is None else f"{x:.3e}"


def render_text(reports, timings: bool = False) -> str:
    lines = []
    for r in _ordered(reports):
        if r.status == "estimated":
            value = f"estimate {r.estimate:.6g} +- {_num(r.stderr)}"
        elif r.status == "skipped":
            value = f"skipped: {r.diagnostics.get('reason', '')}"
        elif r.residual is None:
            value = f"error: {r.diagnostics.get('error', '')}"
        else:
            value = f"residual {_num(r.residual)} (tol {_num(r.tolerance)})"
        line = f"{r.status.upper():9s} {r.id:28s} {r.kind:22s} {value}"
        if timings:
            line += f"  [{r.wall_time:.2f}s]"
        lines.append(line)
    counts = {s: sum(r.status == s for r in reports) for s in ("pass", "fail", "skipped", "estimated")}
    lines.append(", ".join(f"{v} {k}" for k, v in counts.items()))
    return "\n".join(lines) + "\n"


def render(reports, fmt: str = "json", timings: bool = False, meta: dict | None = None) -> str:
    if fmt == "json":
        return render_json(reports, timings, meta)
    if fmt == "csv":
        return render_csv(reports, timings)
    if fmt == "text":
        return render_text(reports, timings)
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def emit_report(reports, fmt: str = "json", path=None, timings: bool = False, meta: dict | None = None) -> str:
    """Render ``reports`` and write them to ``path`` if given; returns the text."""
    text = render(reports, fmt, timings, meta)
    if path is not None:
        Path(path).write_text(text)
    return text
