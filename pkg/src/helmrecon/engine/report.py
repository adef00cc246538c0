"""Rendering of run reports and benchmark tables."""
from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from typing import Any

from .newton import REPORT_COLUMNS, RunReport

TEXT_COLUMNS: tuple[str, ...] = (
    "k", "N", "Modes", "M", "MP", "T_f", "N_it", "T_l", "T_t", "l2_error", "condition", "flagged",
)
BENCHMARK_COLUMNS: tuple[str, ...] = ("k", "N", "N_bdry", "T_interior", "T_bdry", "T_solve")


def _fmt(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        if value != 0 and (abs(value) < 1e-3 or abs(value) >= 1e5):
            return f"{value:.3e}"
        return f"{value:.4g}"
    return str(value)


def _table(columns: Sequence[str], rows: Sequence[Mapping[str, Any]]) -> str:
    cells = [[_fmt(row.get(c)) for c in columns] for row in rows]
    widths = [max([len(c)] + [len(r[i]) for r in cells]) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in cells)
    return "\n".join(lines)


def report_dict(report: RunReport) -> dict[str, Any]:
    payload = report.to_json()
    payload["summary"] = summary(report)
    return payload


def summary(report: RunReport) -> dict[str, Any]:
    """Headline numbers: final error, flagged frequencies, total solves and time."""
    records = report.records
    if not records:
        return {"frequencies": 0}
    errors = [r.l2_error for r in records if r.l2_error is not None]
    return {
        "frequencies": len(records),
        "k_final": records[-1].k,
        "final_error": errors[-1] if errors else None,
        "flagged": [r.k for r in records if r.flagged],
        "solves": sum(r.solves for r in records),
        "total_time": records[-1].t_total,
    }


def report_text(report: RunReport) -> str:
    """Per-frequency table followed by a one-line summary."""
    if not report.records:
        return "empty report"
    return _table(TEXT_COLUMNS, report.rows()) + "\n" + summarize_text(report)


def summarize_text(report: RunReport) -> str:
    info = summary(report)
    if not info["frequencies"]:
        return "empty report"
    error = _fmt(info["final_error"])
    flagged = ", ".join(_fmt(k) for k in info["flagged"]) or "none"
    return (
        f"{info['frequencies']} frequencies up to k={_fmt(info['k_final'])}; "
        f"final error {error}; flagged: {flagged}; "
        f"{info['solves']} solves in {info['total_time']:.1f}s"
    )


def report_rows(report: RunReport) -> list[list[Any]]:
    """CSV rows in :data:`REPORT_COLUMNS` order, header first."""
    rows: list[list[Any]] = [list(REPORT_COLUMNS)]
    for row in report.rows():
        rows.append(["" if row[c] is None else row[c] for c in REPORT_COLUMNS])
    return rows


def benchmark_text(rows: Sequence[Mapping[str, Any]]) -> str:
    return _table(BENCHMARK_COLUMNS, rows)


def checks_text(results: Sequence[Any]) -> str:
    """Table of validation checks with a PASS/FAIL verdict line."""
    rows = [
        {
            "check": r.name,
            "value": r.value,
            "threshold": r.threshold,
            "result": "PASS" if r.passed else "FAIL",
            "detail": r.detail,
        }
        for r in results
    ]
    table = _table(("check", "value", "threshold", "result", "detail"), rows)
    failed = [r.name for r in results if not r.passed]
    verdict = "all checks passed" if not failed else f"FAILED: {', '.join(failed)}"
    return table + "\n" + verdict
