"""Serialization of marginal reports: CSV tables, JSON sidecars, gnuplot scripts."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .config import ExperimentConfig
from .stats import MarginalReport

__all__ = ["CSV_HEADER", "fmt", "report_csv", "write_csv", "read_csv", "write_json_report",
           "write_sidecar", "sidecar_path", "write_summary", "write_gnuplot_script"]

CSV_HEADER = ("t", "mean_est", "mean_err", "mean_std", "var_est", "var_err", "var_std", "kl")


def fmt(x: float) -> str:
    """17 significant digits: round-trips every double."""
    return format(float(x), ".17g")


def report_csv(report: MarginalReport) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_HEADER) + "\n")
    for row in report.rows():
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_csv(report: MarginalReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(report_csv(report))
    return path


def read_csv(path) -> dict[str, list[float]]:
    """Columns of a report or summary CSV as float lists keyed by header name."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        cols = {h: [] for h in header}
        for row in reader:
            for h, v in zip(header, row):
                try:
                    cols[h].append(float(v))
                except ValueError:
                    cols[h].append(v)
    return cols


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def _metadata(config: ExperimentConfig, report: MarginalReport) -> dict:
    meta = dict(report.metadata)
    return {
        "flowsde_version": meta.pop("flowsde_version", None),
        "seed": config.seed,
        "kl_direction": report.kl_direction,
        "run": meta,
        "columns": list(CSV_HEADER),
        "config": config.to_dict(),
    }


def write_sidecar(config: ExperimentConfig, report: MarginalReport, path) -> Path:
    out = sidecar_path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(_metadata(config, report), indent=2, sort_keys=True) + "\n")
    return out


def write_json_report(config: ExperimentConfig, report: MarginalReport, path) -> Path:
    """Single JSON file holding the metadata and the rows (floats kept exact)."""
    doc = _metadata(config, report)
    doc["rows"] = [dict(zip(CSV_HEADER, row)) for row in report.rows()]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def write_summary(header, rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")
    return path


_GNUPLOT = """\
# generated by flowsde; usage: gnuplot {script}
set datafile separator ","
set terminal pngcairo size 1500,420
set output "{png}"
set multiplot layout 1,3 title "{title}"
set xrange [1:0]
set xlabel "t"
set key autotitle columnhead
unset key
set title "mean error"
plot "{csv}" using 1:3:4 with yerrorlines lc rgb "#1f77b4"
set title "variance error"
plot "{csv}" using 1:6:7 with yerrorlines lc rgb "#d62728"
set title "KL to true marginal"
set logscale y
plot "{csv}" using 1:8 with lines lc rgb "#2ca02c"
unset multiplot
"""


def write_gnuplot_script(csv_path, title: str = "") -> Path:
    csv_path = Path(csv_path)
    script = csv_path.with_suffix(".gp")
    script.write_text(_GNUPLOT.format(script=script.name, png=csv_path.with_suffix(".gp.png").name,
                                      csv=csv_path.name, title=title))
    return script
