"""Plain-text and SVG renderings of an evaluation report."""

from __future__ import annotations

import csv
import io
from pathlib import Path

from .eval.cv import EvalReport
from .eval.effects import effect_table_csv

SVG_SIZE = 320
SVG_MARGIN = 30
FOLD_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def metrics_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["fold", *EvalReport.METRICS])
    for f in report.folds:
        w.writerow([f.index, *("" if getattr(f, m) is None else repr(getattr(f, m))
                               for m in EvalReport.METRICS)])
    summary = report.summary()
    for stat in ("mean", "sd"):
        w.writerow([stat, *("" if summary[m][stat] is None else repr(summary[m][stat])
                            for m in EvalReport.METRICS)])
    return buf.getvalue()


def confusion_grid(cm) -> str:
    """2x2 grid, rows actual, columns predicted."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["actual\\predicted", "healthy", "tinnitus"])
    w.writerow(["healthy", cm.tn, cm.fp])
    w.writerow(["tinnitus", cm.fn, cm.tp])
    return buf.getvalue()


def roc_svg(report: EvalReport) -> str:
    """One polyline per fold in unit ROC space, plus the chance diagonal."""
    inner = SVG_SIZE - 2 * SVG_MARGIN

    def xy(fpr, tpr):
        return f"{SVG_MARGIN + fpr * inner:.3f},{SVG_MARGIN + (1 - tpr) * inner:.3f}"

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" '
             f'viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">',
             f'<rect x="{SVG_MARGIN}" y="{SVG_MARGIN}" width="{inner}" height="{inner}" '
             'fill="none" stroke="#000"/>',
             f'<line x1="{SVG_MARGIN}" y1="{SVG_MARGIN + inner}" x2="{SVG_MARGIN + inner}" '
             f'y2="{SVG_MARGIN}" stroke="#999" stroke-dasharray="4 4"/>',
             f'<text x="{SVG_SIZE / 2}" y="{SVG_SIZE - 8}" text-anchor="middle" '
             'font-size="11">FPR</text>',
             f'<text x="10" y="{SVG_SIZE / 2}" font-size="11" '
             f'transform="rotate(-90 10 {SVG_SIZE / 2})" text-anchor="middle">TPR</text>']
    for f in report.folds:
        if not f.roc:
            continue
        colour = FOLD_COLOURS[f.index % len(FOLD_COLOURS)]
        pts = " ".join(xy(fpr, tpr) for fpr, tpr in f.roc)
        parts.append(f'<polyline data-fold="{f.index}" fill="none" stroke="{colour}" '
                     f'stroke-width="1.5" points="{pts}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def report_render(report: EvalReport, out_dir: str | Path) -> list[Path]:
    """Write metrics, confusion grids, the ROC plot and the effect table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = report.learner
    written = []

    def emit(fname: str, text: str):
        path = out_dir / fname
        path.write_text(text)
        written.append(path)

    emit(f"metrics_{name}.csv", metrics_csv(report))
    for f in report.folds:
        emit(f"confusion_{name}_fold{f.index}.csv", confusion_grid(f.confusion))
    emit(f"roc_{name}.svg", roc_svg(report))
    if report.effects:
        emit(f"effects_{name}.csv", effect_table_csv(report.effects))
    return written
