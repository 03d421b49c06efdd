"""Experiment reports: assembly, JSON persistence, table rendering.

One report can hold a single strategy's cells or a whole strategy x scope
matrix; the cell key is (train, test, strategy, scope). Rendering follows
the familiar layouts: "table1" (strategy rows, within/cross transfer
columns, deltas against the no-debias baseline), "fig3" (per-class bias
correlations), "fig2" (genre histograms per dataset and class). Text tables
round to two decimals; the CSV carries full precision and is byte-stable
across re-runs.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field

from .errors import IncompleteMatrixError, LayoutError, ValidationError

STRATEGY_ORDER = ("none", "LDA", "mLDA", "K", "KLDA", "mKLDA")
SCOPE_ORDER = ("global", "classwise")
BASELINE = "none"
DELTA_FLAG_PP = 0.1


@dataclass(frozen=True)
class Cell:
    train: str
    test: str
    strategy: str
    scope: str
    class_auc: dict[str, float]
    mean_auc: float

    def key(self) -> tuple[str, str, str, str]:
        return (self.train, self.test, self.strategy, self.scope)


@dataclass(frozen=True)
class CorrelationEntry:
    domain: str
    strategy: str
    scope: str
    space: str  # "original" | "kernelized"
    class_corr: dict[str, float]
    mean_abs_corr: float


@dataclass(frozen=True)
class ExperimentReport:
    datasets: tuple[str, str]
    classes: tuple[str, ...]
    cells: tuple[Cell, ...]
    correlations: tuple[CorrelationEntry, ...]
    genre_histogram: dict[str, dict[str, dict[str, int]]]
    seeds: dict[str, int]
    config: dict
    fingerprint: str = field(default="")

    def cell(self, train: str, test: str, strategy: str, scope: str) -> Cell:
        for cell in self.cells:
            if cell.key() == (train, test, strategy, scope):
                return cell
        raise IncompleteMatrixError(
            f"no cell for train={train}, test={test}, strategy={strategy}, scope={scope}"
        )

    def strategies(self) -> tuple[tuple[str, str], ...]:
        seen: dict[tuple[str, str], None] = {}
        for cell in self.cells:
            seen.setdefault((cell.strategy, cell.scope), None)
        return tuple(seen)

    def to_dict(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "datasets": list(self.datasets),
            "classes": list(self.classes),
            "cells": [
                {
                    "train": c.train,
                    "test": c.test,
                    "strategy": c.strategy,
                    "scope": c.scope,
                    "class_auc": c.class_auc,
                    "mean_auc": c.mean_auc,
                }
                for c in self.cells
            ],
            "correlations": [
                {
                    "domain": e.domain,
                    "strategy": e.strategy,
                    "scope": e.scope,
                    "space": e.space,
                    "class_corr": e.class_corr,
                    "mean_abs_corr": e.mean_abs_corr,
                }
                for e in self.correlations
            ],
            "genre_histogram": self.genre_histogram,
            "seeds": self.seeds,
            "config": self.config,
        }

    @staticmethod
    def from_dict(obj: dict) -> "ExperimentReport":
        return ExperimentReport(
            datasets=tuple(obj["datasets"]),
            classes=tuple(obj["classes"]),
            cells=tuple(
                Cell(
                    c["train"],
                    c["test"],
                    c["strategy"],
                    c["scope"],
                    dict(c["class_auc"]),
                    float(c["mean_auc"]),
                )
                for c in obj["cells"]
            ),
            correlations=tuple(
                CorrelationEntry(
                    e["domain"],
                    e["strategy"],
                    e["scope"],
                    e["space"],
                    dict(e["class_corr"]),
                    float(e["mean_abs_corr"]),
                )
                for e in obj["correlations"]
            ),
            genre_histogram=obj["genre_histogram"],
            seeds=dict(obj["seeds"]),
            config=obj["config"],
            fingerprint=obj.get("fingerprint", ""),
        )


def config_fingerprint(config: dict, seeds: dict) -> str:
    """Stable digest of the resolved config and derived seeds."""
    canonical = json.dumps({"config": config, "seeds": seeds}, sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_report(
    datasets: tuple[str, str],
    classes: tuple[str, ...],
    cells: list[Cell],
    correlations: list[CorrelationEntry],
    genre_histogram: dict[str, dict[str, dict[str, int]]],
    seeds: dict[str, int],
    config: dict,
    expected_cells: list[tuple[str, str, str, str]] | None = None,
) -> ExperimentReport:
    """Assemble and validate a report; means are recomputed from per-class AUCs."""
    recomputed = []
    for cell in cells:
        missing = [c for c in classes if c not in cell.class_auc]
        if missing:
            raise IncompleteMatrixError(
                f"cell {cell.key()} is missing classes {missing}"
            )
        bad = {c: v for c, v in cell.class_auc.items() if not 0.0 <= v <= 1.0}
        if bad:
            raise ValidationError(f"cell {cell.key()} has AUCs outside [0, 1]: {bad}")
        mean = sum(cell.class_auc[c] for c in classes) / len(classes)
        recomputed.append(
            Cell(cell.train, cell.test, cell.strategy, cell.scope, dict(cell.class_auc), mean)
        )
    have = {c.key() for c in recomputed}
    if expected_cells is not None:
        lost = [k for k in expected_cells if k not in have]
        if lost:
            raise IncompleteMatrixError(f"declared cells missing from results: {lost}")
    if len(have) != len(recomputed):
        raise ValidationError("duplicate cell keys in report")
    return ExperimentReport(
        datasets=datasets,
        classes=tuple(classes),
        cells=tuple(recomputed),
        correlations=tuple(correlations),
        genre_histogram=genre_histogram,
        seeds=dict(seeds),
        config=config,
        fingerprint=config_fingerprint(config, seeds),
    )


def merge_reports(reports: list[ExperimentReport]) -> ExperimentReport:
    """Combine per-strategy reports (shared datasets/classes) into one."""
    if not reports:
        raise ValidationError("nothing to merge")
    head = reports[0]
    cells: list[Cell] = []
    correlations: list[CorrelationEntry] = []
    seen: set[tuple[str, str, str, str]] = set()
    for report in reports:
        if report.datasets != head.datasets or report.classes != head.classes:
            raise ValidationError("reports disagree on datasets or classes")
        for cell in report.cells:
            if cell.key() in seen:
                continue
            seen.add(cell.key())
            cells.append(cell)
        correlations.extend(report.correlations)
    return ExperimentReport(
        datasets=head.datasets,
        classes=head.classes,
        cells=tuple(cells),
        correlations=tuple(correlations),
        genre_histogram=head.genre_histogram,
        seeds=head.seeds,
        config=head.config,
        fingerprint=head.fingerprint,
    )


def save_report(report: ExperimentReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(report.to_dict(), handle, sort_keys=True)
        handle.write("\n")


def load_report(path: str) -> ExperimentReport:
    with open(path, "r", encoding="utf-8") as handle:
        return ExperimentReport.from_dict(json.load(handle))


@dataclass(frozen=True)
class RenderedTable:
    text: str
    csv: str


def format_value_with_delta(value: float, baseline: float | None) -> str:
    """Percentage with two decimals, plus a parenthesised delta vs baseline.

    A delta rounding to zero renders as "(0.0)"; magnitudes above 0.1
    percentage points are flagged with a trailing asterisk.
    """
    text = f"{value * 100:.2f}"
    if baseline is None:
        return text
    delta_pp = (value - baseline) * 100.0
    if abs(round(delta_pp, 2)) < 0.005:
        rendered = "(0.0)"
    else:
        rendered = f"({delta_pp:+.2f})"
    if abs(delta_pp) > DELTA_FLAG_PP:
        rendered += "*"
    return f"{text} {rendered}"


def _table_text(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, val in enumerate(row):
            widths[i] = max(widths[i], len(val))
    def fmt(row):
        return "  ".join(val.ljust(widths[i]) for i, val in enumerate(row)).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines) + "\n"


def _csv_text(headers: list[str], rows: list[list]) -> str:
    out = io.StringIO()
    out.write(",".join(headers) + "\n")
    for row in rows:
        out.write(",".join(_csv_field(v) for v in row) + "\n")
    return out.getvalue()


def _csv_field(value) -> str:
    if isinstance(value, float):
        return repr(value)
    text = str(value)
    if any(ch in text for ch in ",\"\n"):
        text = '"' + text.replace('"', '""') + '"'
    return text


def render_table(report: ExperimentReport, layout: str) -> RenderedTable:
    if layout == "table1":
        return _render_table1(report)
    if layout == "fig3":
        return _render_fig3(report)
    if layout == "fig2":
        return _render_fig2(report)
    raise LayoutError(f"unknown layout {layout!r} (expected table1, fig3 or fig2)")


def _transfer_columns(report: ExperimentReport) -> list[tuple[str, str, bool]]:
    """(train, test, is_cross) in within-first order."""
    a, b = report.datasets
    return [(a, a, False), (b, b, False), (b, a, True), (a, b, True)]


def _render_table1(report: ExperimentReport) -> RenderedTable:
    combos = report.strategies()
    strategies = [s for s in STRATEGY_ORDER if any(c[0] == s for c in combos)]
    if not strategies:
        raise LayoutError("report holds no cells to render")
    scopes = [s for s in SCOPE_ORDER if any(c[1] == s and c[0] != BASELINE for c in combos)]
    if not scopes:
        scopes = ["global"]
    # Deltas are defined against the no-debias baseline; a report without
    # baseline cells (a single-strategy run) renders plain values instead.
    baseline_cells: dict[tuple[str, str], float] | None = None
    if BASELINE in strategies:
        baseline_cells = {}
        for train, test, _ in _transfer_columns(report):
            baseline_cells[(train, test)] = report.cell(train, test, BASELINE, "global").mean_auc

    columns = _transfer_columns(report)
    headers = ["strategy"] + [
        f"{scope}:{train}-{test}" for scope in scopes for train, test, _ in columns
    ]
    text_rows: list[list[str]] = []
    csv_rows: list[list] = []
    for strategy in strategies:
        row = [strategy]
        for scope in scopes:
            # The baseline and plain-kernel rows are scope-free; render their
            # single set of numbers in every scope group, as the source table does.
            actual_scope = "global" if strategy in ("none", "K") else scope
            for train, test, is_cross in columns:
                try:
                    cell = report.cell(train, test, strategy, actual_scope)
                except IncompleteMatrixError:
                    row.append("-")
                    continue
                base = None
                if strategy != BASELINE and is_cross and baseline_cells is not None:
                    base = baseline_cells[(train, test)]
                row.append(format_value_with_delta(cell.mean_auc, base))
                if strategy != BASELINE and baseline_cells is not None:
                    delta = cell.mean_auc - baseline_cells[(train, test)]
                    flagged = int(abs(delta * 100.0) > DELTA_FLAG_PP)
                elif strategy == BASELINE:
                    delta, flagged = 0.0, 0
                else:  # no baseline in the report: no delta to record
                    delta, flagged = "", 0
                csv_rows.append(
                    [strategy, actual_scope, train, test, cell.mean_auc, delta, flagged]
                )
        text_rows.append(row)
    # Per-class AUCs ride along in the CSV for machine consumers.
    class_rows: list[list] = []
    for cell in report.cells:
        for cls in report.classes:
            class_rows.append(
                [cell.strategy, cell.scope, cell.train, cell.test, cls, cell.class_auc[cls]]
            )
    csv = _csv_text(
        ["strategy", "scope", "train", "test", "mean_auc", "delta", "flagged"], csv_rows
    )
    csv += _csv_text(["strategy", "scope", "train", "test", "class", "auc"], class_rows)
    return RenderedTable(_table_text(headers, text_rows), csv)


def _render_fig3(report: ExperimentReport) -> RenderedTable:
    if not report.correlations:
        raise LayoutError("report holds no correlation entries")
    entries = list(report.correlations)
    headers = ["class"] + [
        f"{e.domain}:{e.strategy}/{e.scope}/{e.space}" for e in entries
    ]
    rows = []
    for cls in report.classes:
        rows.append([cls] + [f"{e.class_corr.get(cls, float('nan')):+.2f}" for e in entries])
    rows.append(["mean|c|"] + [f"({e.mean_abs_corr:.2f})" for e in entries])
    csv_rows = []
    for e in entries:
        for cls in report.classes:
            if cls in e.class_corr:
                csv_rows.append(
                    [e.domain, e.strategy, e.scope, e.space, cls, e.class_corr[cls]]
                )
        csv_rows.append([e.domain, e.strategy, e.scope, e.space, "MEAN_ABS", e.mean_abs_corr])
    return RenderedTable(
        _table_text(headers, rows),
        _csv_text(["domain", "strategy", "scope", "space", "class", "correlation"], csv_rows),
    )


def _render_fig2(report: ExperimentReport) -> RenderedTable:
    if not report.genre_histogram:
        raise LayoutError("report holds no genre histogram")
    genres: dict[str, None] = {}
    for per_class in report.genre_histogram.values():
        for counts in per_class.values():
            for genre in counts:
                genres.setdefault(genre, None)
    genre_list = list(genres)
    headers = ["dataset", "class"] + genre_list
    rows = []
    csv_rows = []
    for dataset in report.genre_histogram:
        for cls in report.genre_histogram[dataset]:
            counts = report.genre_histogram[dataset][cls]
            rows.append([dataset, cls] + [str(counts.get(g, 0)) for g in genre_list])
            for genre in genre_list:
                csv_rows.append([dataset, cls, genre, counts.get(genre, 0)])
    return RenderedTable(
        _table_text(headers, rows),
        _csv_text(["dataset", "class", "genre", "count"], csv_rows),
    )
