"""Comparison tables, per-round series and the machine-readable summary."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

from .config import config_to_dict
from .simulator import BG_NAMES, SERIES_METRICS, ExperimentSummary

LOSS_MARKER = "*"
WORLDS = ("merged", "individual")


class ReportError(OSError):
    pass


def fmt(value: float) -> str:
    """One decimal, as in the printed tables; never '-0.0'."""
    text = f"{value:.1f}"
    return "0.0" if text == "-0.0" else text


def pair_cell(merged: float, individual: float) -> str:
    """``mKEP/Ind`` cell; the merged value carries the loss marker when it is lower."""
    mark = LOSS_MARKER if merged < individual else ""
    return f"{fmt(merged)}{mark}/{fmt(individual)}"


def _describe(summary: ExperimentSummary) -> Dict[str, str]:
    regs = summary.config.registries
    return {
        "experiment": summary.name,
        "arrival_rate": " ".join(f"R{r.index + 1}=U({r.arrival_low},{r.arrival_high})" for r in regs),
        "dp": "/".join(dict.fromkeys(f"{r.dropout_probability:g}" for r in regs)),
        "bounds": " ".join(f"b{r.index + 1}={r.cycle_bound}" for r in regs) + f" mKEP={summary.config.global_bound}",
    }


def comparison_row(summary: ExperimentSummary) -> Dict[str, str]:
    row = _describe(summary)
    m, i = summary.means["merged"], summary.means["individual"]
    for r in summary.config.registries:
        k = r.index
        row[f"R{k + 1} transplants"] = pair_cell(m[k]["transplants"], i[k]["transplants"])
        row[f"R{k + 1} score"] = pair_cell(m[k]["score"], i[k]["score"])
    row["gain transplants"] = fmt(summary.gains["transplants"])
    row["gain score"] = fmt(summary.gains["score"])
    return row


def blood_group_row(summary: ExperimentSummary) -> Dict[str, str]:
    row = _describe(summary)
    m, i = summary.means["merged"], summary.means["individual"]
    for r in summary.config.registries:
        k = r.index
        for bg in BG_NAMES:
            key = f"matched_{bg}"
            row[f"R{k + 1} {bg}"] = pair_cell(m[k][key], i[k][key])
    return row


def series_rows(summary: ExperimentSummary) -> List[Dict[str, object]]:
    rows = []
    for r in range(summary.config.rounds):
        for world in WORLDS:
            for k, metrics in summary.series[world].items():
                row = {"experiment": summary.name, "round": r + 1, "world": world, "registry": k + 1}
                for name in SERIES_METRICS:
                    row[name] = metrics[name][r]
                rows.append(row)
    return rows


def summary_document(summaries: Sequence[ExperimentSummary]) -> dict:
    experiments = []
    for s in summaries:
        experiments.append(
            {
                "name": s.name,
                "config": config_to_dict(s.config),
                "replications": s.replications,
                "seeds": list(s.seeds),
                "means": {w: {str(k + 1): v for k, v in regs.items()} for w, regs in s.means.items()},
                "relative_gain": dict(s.gains),
                "registry_gain": {str(k + 1): v for k, v in s.registry_gains.items()},
                "replication_gain": list(s.replication_gains),
                "nonnegative_gain_share": (
                    sum(1 for g in s.replication_gains if g["transplants"] >= 0) / len(s.replication_gains)
                ),
                "series": {
                    w: {str(k + 1): v for k, v in regs.items()} for w, regs in s.series.items()
                },
                "tables": {"comparison": comparison_row(s), "blood_groups": blood_group_row(s)},
            }
        )
    return {"experiments": experiments}


def _csv_text(rows: List[Dict[str, object]]) -> str:
    buf = io.StringIO()
    if rows:
        fields: List[str] = []
        for row in rows:
            fields.extend(f for f in row if f not in fields)
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return buf.getvalue()


def render_text(rows: List[Dict[str, str]], title: str) -> str:
    """Plain aligned table for the terminal."""
    if not rows:
        return f"{title}\n(empty)\n"
    fields = list(rows[0])
    widths = {f: max(len(f), *(len(str(r.get(f, ""))) for r in rows)) for f in fields}
    lines = [title, "  ".join(f.ljust(widths[f]) for f in fields)]
    lines.append("  ".join("-" * widths[f] for f in fields))
    for r in rows:
        lines.append("  ".join(str(r.get(f, "")).ljust(widths[f]) for f in fields))
    return "\n".join(lines) + "\n"


def emit_report(summaries: Sequence[ExperimentSummary], out_dir, formats: Iterable[str] = ("csv", "json")) -> List[Path]:
    """Write the report files under ``out_dir``; returns their paths."""
    out = Path(out_dir)
    formats = list(formats)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written: List[Path] = []
        if "csv" in formats:
            files = {
                "comparison.csv": [comparison_row(s) for s in summaries],
                "blood_groups.csv": [blood_group_row(s) for s in summaries],
                "timeseries.csv": [row for s in summaries for row in series_rows(s)],
            }
            for name, rows in files.items():
                path = out / name
                path.write_text(_csv_text(rows))
                written.append(path)
        if "json" in formats:
            path = out / "summary.json"
            path.write_text(json.dumps(summary_document(summaries), indent=2, sort_keys=True) + "\n")
            written.append(path)
    except OSError as exc:
        raise ReportError(f"cannot write report to {out}: {exc}") from exc
    return written
