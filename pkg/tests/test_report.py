"""Tests for report rendering."""

from __future__ import annotations

from helmrecon.engine.newton import REPORT_COLUMNS, FrequencyRecord, RunReport
from helmrecon.engine.report import (
    benchmark_text,
    checks_text,
    report_dict,
    report_rows,
    report_text,
    summary,
)
from helmrecon.engine.validation import CheckResult


def _record(k: float, *, error: float | None = 0.25, flagged: bool = False) -> FrequencyRecord:
    return FrequencyRecord(
        k=k, n_unknowns=81, modes=3, n_directions=2, n_measurements=8, t_factor=0.01,
        lsqr_iterations=4, t_lsqr=0.02, t_total=k, l2_error=error, condition=12.5,
        resonance_shift=0.0, newton_iterations=2, residual=1e-4, flagged=flagged,
        solves=20, work_estimate=1234,
    )


def test_summary_collects_headline_numbers() -> None:
    report = RunReport((_record(1.0), _record(1.5, error=0.1, flagged=True)))
    info = summary(report)
    assert info["frequencies"] == 2
    assert info["k_final"] == 1.5
    assert info["final_error"] == 0.1
    assert info["flagged"] == [1.5]
    assert info["solves"] == 40
    assert info["total_time"] == 1.5
    assert summary(RunReport()) == {"frequencies": 0}


def test_report_text_table() -> None:
    text = report_text(RunReport((_record(1.0, error=None),)))
    header, rule, row, footer = text.splitlines()
    assert header.split()[:3] == ["k", "N", "Modes"]
    assert set(rule.replace(" ", "")) == {"-"}
    assert row.split()[-3:] == ["-", "12.5", "no"]
    assert "flagged: none" in footer
    assert "final error -" in footer
    assert report_text(RunReport()) == "empty report"


def test_report_rows_for_csv() -> None:
    rows = report_rows(RunReport((_record(2.0, error=None),)))
    assert rows[0] == list(REPORT_COLUMNS)
    row = dict(zip(rows[0], rows[1]))
    assert row["l2_error"] == ""
    assert row["work_estimate"] == 1234


def test_report_dict_has_summary() -> None:
    payload = report_dict(RunReport((_record(1.0),)))
    assert payload["columns"] == list(REPORT_COLUMNS)
    assert payload["summary"]["k_final"] == 1.0
    assert len(payload["rows"]) == 1


def test_benchmark_and_checks_text() -> None:
    bench = benchmark_text([
        {"k": 4.0, "N": 289, "N_bdry": 64, "T_interior": 0.5, "T_bdry": 2e-4, "T_solve": 0.1}
    ])
    assert "2.000e-04" in bench
    results = [
        CheckResult("lsqr", True, 1e-12, 1e-8),
        CheckResult("adjoint", False, 1e-3, 1e-10, "fault injected"),
    ]
    text = checks_text(results)
    assert "PASS" in text and "FAIL" in text
    assert text.splitlines()[-1] == "FAILED: adjoint"
    assert checks_text(results[:1]).endswith("all checks passed")
