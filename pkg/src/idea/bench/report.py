"""CSV reports, plot-data files and rendered figures for benchmark runs."""

from __future__ import annotations

import csv
import json
import os
import platform
from pathlib import Path

CSV_FIELDS = ("case", "nodes", "batch", "model", "updateRate", "throughput",
              "p50RefreshMs", "p95RefreshMs", "ingested", "stored", "skipped",
              "freshnessLag", "updates", "runs", "static", "elapsed")

# spec fields that can vary across a sweep, in the order they are tried
SWEEP_FIELDS = (("batch_size", "batch"), ("update_rate", "updateRate"),
                ("node_count", "nodes"), ("model", "model"), ("case_id", "case"))


def hardware():
    return {
        "machine": platform.machine(),
        "processor": platform.processor() or "unknown",
        "cpus": os.cpu_count(),
        "python": platform.python_version(),
        "system": platform.system(),
    }


def report_row(r):
    s = r.spec
    return {
        "case": s.case_id,
        "nodes": s.node_count,
        "batch": s.batch_size,
        "model": s.model.value,
        "updateRate": s.update_rate,
        "throughput": round(r.throughput, 3),
        "p50RefreshMs": round(r.p50_refresh_ms, 3),
        "p95RefreshMs": round(r.p95_refresh_ms, 3),
        "ingested": r.ingested,
        "stored": r.stored,
        "skipped": r.skipped,
        "freshnessLag": "" if r.freshness_lag_count is None else r.freshness_lag_count,
        "updates": r.updates,
        "runs": r.runs,
        "static": int(r.static),
        "elapsed": round(r.elapsed, 3),
    }


def _open_for_write(path):
    try:
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as e:
        raise IOError(f"cannot write {path}: {e.strerror or e}") from e


def emit_csv(reports, path):
    """One header line, one row per report; hardware metadata goes in
    ``#`` comment lines after the rows."""
    if not reports:
        raise ValueError("no reports")
    with _open_for_write(path) as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for r in reports:
            w.writerow(report_row(r))
        for k, v in hardware().items():
            fh.write(f"# {k}={v}\n")
    return Path(path)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def swept_variable(reports):
    """The first spec field whose value differs between reports."""
    for attr, label in SWEEP_FIELDS:
        if len({getattr(r.spec, attr) for r in reports}) > 1:
            return attr, label
    return "batch_size", "batch"


def plot_series(reports):
    """``(label, {series_name: [(x, throughput, p50_ms), ...]})``: one series per
    combination of the fields that are not swept."""
    attr, label = swept_variable(reports)
    series = {}
    for r in reports:
        row = report_row(r)
        name = " ".join(f"{lab}={row[lab]}" for a, lab in SWEEP_FIELDS if a != attr)
        x = row[label]
        series.setdefault(name, []).append((x, r.throughput, r.p50_refresh_ms))
    for pts in series.values():
        if all(isinstance(p[0], (int, float)) for p in pts):
            pts.sort(key=lambda p: p[0])
    return label, series


def emit_plot_data(reports, path):
    """JSON file with the swept variable and one entry per series."""
    if not reports:
        raise ValueError("no reports")
    label, series = plot_series(reports)
    doc = {"x": label, "series": [
        {"name": name, "points": [{"x": x, "throughput": t, "p50RefreshMs": p}
                                  for x, t, p in pts]}
        for name, pts in series.items()]}
    with _open_for_write(path) as fh:
        json.dump(doc, fh, indent=2)
    return Path(path)


def render_plots(reports, stem):
    """Throughput and refresh-period figures next to ``stem`` (PNG)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    label, series = plot_series(reports)
    out = []
    for metric, idx, ylabel in (("throughput", 1, "records / second"),
                                ("refresh", 2, "median refresh period (ms)")):
        fig, ax = plt.subplots(figsize=(6, 4))
        for name, pts in series.items():
            xs = [str(p[0]) for p in pts]
            ys = [p[idx] for p in pts]
            if len(series) == 1:
                ax.bar(xs, ys)
            else:
                ax.plot(xs, ys, marker="o", label=name)
        if len(series) > 1:
            ax.legend(fontsize="small")
        ax.set_xlabel(label)
        ax.set_ylabel(ylabel)
        ax.set_title(f"{metric} by {label}")
        fig.tight_layout()
        path = Path(f"{stem}_{metric}.png")
        try:
            fig.savefig(path)
        except OSError as e:
            raise IOError(f"cannot write {path}: {e}") from e
        finally:
            plt.close(fig)
        out.append(path)
    return out


__all__ = ["CSV_FIELDS", "emit_csv", "emit_plot_data", "hardware", "plot_series",
           "read_csv", "render_plots", "report_row", "swept_variable"]
