"""Rendering of report bundles into CSV, JSON, or Markdown tables.

Bias sweep vectors are rendered the same way everywhere: integer
percents in descending-eps order, bracketed like `[100, 75, 50, 0, 0]`.
Rate cells are rendered to 1 decimal and correlation cells to 2.
Emission is a pure function of the bundle, so re-emitting writes
identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .runner import ReportBundle

FORMATS = ("csv", "json", "md")


def render_eps_vector(values) -> str:
    """`[v, v, v, v, v]` with integer percents, largest eps first."""
    return "[" + ", ".join(str(int(round(v))) for v in values) + "]"


def _rows_overall(bundle: ReportBundle) -> tuple[list[str], list[list[str]]]:
    overall = bundle.data["overall"]
    metrics = sorted({metric for cells in overall.values() for metric in cells})
    header = ["method"] + metrics
    rows = []
    for method in sorted(overall):
        row = [method]
        for metric in metrics:
            entry = overall[method].get(metric)
            row.append("" if entry is None else f"{entry['value']:.1f}")
        rows.append(row)
    return header, rows


def _rows_per_dataset(bundle: ReportBundle) -> tuple[list[str], list[list[str]]]:
    per_dataset = bundle.data["per_dataset"]
    metrics = sorted(
        {
            metric
            for cells in per_dataset.values()
            for method_cells in cells.values()
            for metric in method_cells
        }
    )
    header = ["dataset", "method"] + metrics
    rows = []
    for ds in sorted(per_dataset):
        for method in sorted(per_dataset[ds]):
            row = [ds, method]
            for metric in metrics:
                entry = per_dataset[ds][method].get(metric)
                row.append("" if entry is None else f"{entry['value']:.1f}")
            rows.append(row)
    return header, rows


def _rows_bias(bundle: ReportBundle) -> tuple[list[str], list[list[str]]]:
    header = ["metric", "dataset", "method", "kind", "group", "vector"]
    rows = []
    for entry in bundle.data["bias"]:
        key = [entry["metric"], entry["dataset"], entry["method"]]
        rows.append(key + ["ab", "", render_eps_vector(entry["ab"])])
        for group in sorted(entry["db"]):
            rows.append(key + ["db", group, render_eps_vector(entry["db"][group])])
    return header, rows


def _rows_focus(bundle: ReportBundle) -> tuple[list[str], list[list[str]]]:
    header = ["dataset", "method", "demographic", "mean_r"]
    rows = []
    focus = bundle.data["focus"]
    for ds in sorted(focus):
        for method in sorted(focus[ds]):
            for group in sorted(focus[ds][method]):
                value = focus[ds][method][group]["value"]
                rows.append([ds, method, group, f"{value:.2f}"])
    return header, rows


def _rows_focus_distribution(bundle: ReportBundle) -> tuple[list[str], list[list[str]]]:
    header = ["dataset", "method", "group_by", "group", "region", "images"]
    rows = []
    dist = bundle.data["focus_distribution"]
    for ds in sorted(dist):
        for method in sorted(dist[ds]):
            for group_by in sorted(dist[ds][method]):
                tree = dist[ds][method][group_by]
                for group in sorted(tree):
                    for region in sorted(tree[group]):
                        rows.append(
                            [ds, method, group_by, group, region, str(tree[group][region])]
                        )
    return header, rows


_TABLES = {
    "overall": _rows_overall,
    "per_dataset": _rows_per_dataset,
    "bias": _rows_bias,
    "focus": _rows_focus,
    "focus_distribution": _rows_focus_distribution,
}


def _to_csv(header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _to_md(header: list[str], rows: list[list[str]]) -> str:
    lines = [
        "| " + " | ".join(header) + " |",
        "| " + " | ".join("---" for _ in header) + " |",
    ]
    for row in rows:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def _to_json(header: list[str], rows: list[list[str]]) -> str:
    records = [dict(zip(header, row)) for row in rows]
    return json.dumps(records, sort_keys=True, indent=2) + "\n"


def emit_tables(bundle: ReportBundle, fmt: str, out_dir: str | Path) -> list[Path]:
    """Write every table in one format; returns the written paths."""
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, build in _TABLES.items():
        header, rows = build(bundle)
        if not rows:
            continue
        if fmt == "csv":
            text = _to_csv(header, rows)
        elif fmt == "md":
            text = _to_md(header, rows)
        else:
            text = _to_json(header, rows)
        path = out_dir / f"{name}.{fmt}"
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written
