"""Report emission for study results.

Three formats over the same rows: machine CSV (full-precision floats),
structured text (JSON), and a human aligned table. Scaling conventions are
carried in column names and the table header: coverages in percent,
interval width x100, mean error and MSE x10^3. Timing columns are optional
so identical study configs can emit byte-identical reports.
"""

from __future__ import annotations

import csv
import io
import json

COLUMNS = [
    "sample_size",
    "estimator",
    "coverage_pct",
    "mean_width_x100",
    "bias_eliminated_coverage_pct",
    "mean_error_x1000",
    "mse_x1000",
    "mc_se_coverage_pct",
    "failures",
    "replicates",
]
TIMING_COLUMNS = ["mean_time_s"]

FORMATS = ("csv", "structured-text", "aligned-table")


def metric_rows(result, include_timing: bool = True):
    """Flatten a StudyResult into scaled report rows (list of dicts)."""
    rows = []
    for (n, label), m in result.rows():
        row = {
            "sample_size": n,
            "estimator": label,
            "coverage_pct": m.coverage * 100.0,
            "mean_width_x100": m.mean_width * 100.0,
            "bias_eliminated_coverage_pct": m.bias_eliminated_coverage * 100.0,
            "mean_error_x1000": m.mean_error * 1000.0,
            "mse_x1000": m.mse * 1000.0,
            "mc_se_coverage_pct": m.mc_se_coverage * 100.0,
            "failures": m.failures,
            "replicates": m.n_used + m.failures,
        }
        if include_timing:
            row["mean_time_s"] = m.mean_time_s
        rows.append(row)
    return rows


def _columns(include_timing):
    return COLUMNS + TIMING_COLUMNS if include_timing else list(COLUMNS)


def emit_csv(rows, include_timing: bool = True) -> str:
    """CSV with repr-formatted floats (shortest round-trip representation)."""
    cols = _columns(include_timing)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        out = []
        for c in cols:
            v = row[c]
            out.append(repr(v) if isinstance(v, float) else str(v))
        w.writerow(out)
    return buf.getvalue()


def parse_metrics_csv(path: str):
    """Read back an emitted CSV; numeric fields come back as int/float."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for k, v in rec.items():
                if k in ("sample_size", "failures", "replicates"):
                    row[k] = int(v)
                elif k == "estimator":
                    row[k] = v
                else:
                    row[k] = float(v)
            rows.append(row)
    return rows


def emit_structured_text(rows, config_summary=None, include_timing: bool = True) -> str:
    doc = {
        "columns": _columns(include_timing),
        "scaling": {
            "coverage_pct": "coverage * 100",
            "mean_width_x100": "mean interval width * 100",
            "bias_eliminated_coverage_pct": "bias-eliminated coverage * 100",
            "mean_error_x1000": "mean(point - truth) * 1000",
            "mse_x1000": "mean squared error * 1000",
            "mc_se_coverage_pct": "Monte Carlo SE of coverage * 100",
        },
        "rows": rows,
    }
    if config_summary:
        doc["study"] = config_summary
    return json.dumps(doc, indent=2) + "\n"


_TABLE_HEADINGS = {
    "sample_size": "n",
    "estimator": "estimator",
    "coverage_pct": "cover%",
    "mean_width_x100": "width*100",
    "bias_eliminated_coverage_pct": "be-cover%",
    "mean_error_x1000": "ME*1e3",
    "mse_x1000": "MSE*1e3",
    "mc_se_coverage_pct": "mcSE%",
    "failures": "fail",
    "replicates": "reps",
    "mean_time_s": "sec",
}


def emit_aligned_table(rows, config_summary=None, include_timing: bool = True) -> str:
    """Fixed-width table for terminals. Values rounded for display only."""
    cols = _columns(include_timing)
    header = [_TABLE_HEADINGS[c] for c in cols]
    body = []
    for row in rows:
        line = []
        for c in cols:
            v = row[c]
            if c in ("sample_size", "failures", "replicates"):
                line.append(str(v))
            elif c == "estimator":
                line.append(v)
            elif c == "mean_time_s":
                line.append(f"{v:.4f}")
            elif c in ("mean_error_x1000", "mse_x1000"):
                line.append(f"{v:+.2f}" if c == "mean_error_x1000" else f"{v:.2f}")
            else:
                line.append(f"{v:.1f}")
        body.append(line)
    widths = [max(len(header[i]), *(len(b[i]) for b in body)) for i in range(len(cols))]
    out = []
    if config_summary:
        out.append(f"# study: {config_summary.get('name', '?')}  "
                   f"true ATE = {config_summary.get('true_ate'):+.6f}")
        out.append(f"# replicates per cell: {config_summary.get('replicates')}  "
                   f"bootstrap: {config_summary.get('bootstrap_iterations')} "
                   f"at level {config_summary.get('level')}")
    out.append("# coverages in percent; width x100; ME and MSE x10^3")
    out.append("  ".join(h.rjust(widths[i]) for i, h in enumerate(header)))
    out.append("  ".join("-" * widths[i] for i in range(len(cols))))
    for b in body:
        out.append("  ".join(b[i].rjust(widths[i]) for i in range(len(cols))))
    return "\n".join(out) + "\n"


def emit_report(result, fmt: str = "csv", path: str | None = None,
                include_timing: bool = True) -> str:
    """Render a StudyResult in one of FORMATS; optionally write to path."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown report format {fmt!r}; expected one of {FORMATS}")
    rows = metric_rows(result, include_timing=include_timing)
    summary = result.config_summary
    if fmt == "csv":
        text = emit_csv(rows, include_timing=include_timing)
    elif fmt == "structured-text":
        text = emit_structured_text(rows, summary, include_timing=include_timing)
    else:
        text = emit_aligned_table(rows, summary, include_timing=include_timing)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

_FIGURE_SPECS = [
    ("coverage_pct", "coverage.png", "interval coverage (%)", 95.0),
    ("mean_width_x100", "width.png", "mean interval width (x100)", None),
    ("mean_error_x1000", "error.png", "mean error (x10^3)", 0.0),
    ("mse_x1000", "mse.png", "MSE (x10^3)", None),
]


def render_figures(rows, outdir: str, dpi: int = 130):
    """Render one PNG per headline metric: metric vs sample size, one line
    per estimator. Returns the list of file paths written."""
    import os

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    estimators = []
    for row in rows:
        if row["estimator"] not in estimators:
            estimators.append(row["estimator"])
    sizes = sorted({row["sample_size"] for row in rows})
    written = []
    for metric, fname, ylabel, refline in _FIGURE_SPECS:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for lab in estimators:
            xs, ys = [], []
            for n in sizes:
                for row in rows:
                    if row["estimator"] == lab and row["sample_size"] == n:
                        xs.append(n)
                        ys.append(row[metric])
            ax.plot(xs, ys, marker="o", label=lab)
        if refline is not None:
            ax.axhline(refline, color="gray", lw=0.8, ls="--")
        ax.set_xlabel("sample size")
        ax.set_ylabel(ylabel)
        ax.set_xticks(sizes)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(outdir, fname)
        fig.savefig(path, dpi=dpi)
        plt.close(fig)
        written.append(path)
    return written
