"""
Report emission: CSV tables, JSON summaries and a dependency-free SVG chart.

Formatting only; every number written here comes from `pipeline`,
`evaluation` or `stats`. Output is byte-stable for identical inputs.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

from railfuse.evaluation import ConfusionCounts, compute_metrics, overall
from railfuse.pipeline import VARIANTS, ExperimentResult
from railfuse.stats import mean_std
from railfuse.vit import save_checkpoint

METRIC_COLUMNS = ("TP", "FP", "FN", "TN", "P", "R", "F1", "ACC", "TNR")
VARIANT_TITLES = {"image_only": "Image only", "fused": "Image + audio"}


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _write_rows(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def metric_row(counts: ConfusionCounts, mode: str) -> list[str]:
    m = compute_metrics(counts, mode)
    return [str(counts.tp), str(counts.fp), str(counts.fn), str(counts.tn)] + [
        _fmt(v) for v in (m.precision, m.recall, m.f1, m.accuracy, m.tnr)
    ]


def per_class_rows(result: ExperimentResult, fold: int = 0) -> list[list[str]]:
    names = result.config.scene.classes
    rows = []
    for variant in VARIANTS:
        for k, name in enumerate(names):
            for tc in result.folds[fold].counts:
                rows.append([variant, name, f"{tc.iou:g}"] + metric_row(tc.variant(variant)[k], "per_class"))
    return rows


def overall_rows(result: ExperimentResult, fold: int = 0) -> list[list[str]]:
    rows = []
    for variant in VARIANTS:
        for tc in result.folds[fold].counts:
            rows.append([variant, f"{tc.iou:g}"] + metric_row(overall(tc.variant(variant)), "overall"))
    return rows


def fold_table(result: ExperimentResult) -> tuple[list[str], list[list[str]]]:
    """Per-split accuracies with Mean and StD rows (population std)."""
    cols = [(v, t) for v in VARIANTS for t in result.thresholds]
    header = ["fold"] + [f"{v}@{t:g}" for v, t in cols]
    series = {c: result.fold_accuracies(*c) for c in cols}
    rows = [[str(i + 1)] + [_fmt(series[c][i]) for c in cols] for i in range(len(result.folds))]
    stats = {c: mean_std(series[c]) for c in cols}
    rows.append(["Mean"] + [_fmt(stats[c][0]) for c in cols])
    rows.append(["StD"] + [_fmt(stats[c][1]) for c in cols])
    return header, rows


def ttest_payload(result: ExperimentResult) -> dict:
    out = {}
    for t in result.thresholds:
        if t not in result.ttests:
            continue
        r = result.ttests[t]
        fused = mean_std(result.fold_accuracies("fused", t))
        image = mean_std(result.fold_accuracies("image_only", t))
        out[f"{t:g}"] = {
            "t": r.t,
            "p": r.p,
            "df": r.df,
            "means": {"fused": fused[0], "image_only": image[0]},
            "stds": {"fused": fused[1], "image_only": image[1]},
        }
    return out


def svg_line_chart(
    xs: Sequence[float],
    series: dict[str, Sequence[float]],
    title: str,
    x_label: str,
    y_label: str,
    width: int = 480,
    height: int = 320,
) -> str:
    if not xs or any(len(s) != len(xs) for s in series.values()):
        raise ValueError("every series needs one value per x")
    left, right, top, bottom = 56, 16, 32, 44
    pw, ph = width - left - right, height - top - bottom
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x0, x1 = x0 - 0.05, x1 + 0.05
    ys = [v for s in series.values() for v in s]
    y0 = max(0.0, min(ys) - 0.05)
    y1 = min(1.0, max(ys) + 0.05)
    if y1 <= y0:
        y1 = y0 + 0.1

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + (1.0 - (y - y0) / (y1 - y0)) * ph

    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for x in xs:
        parts.append(
            f'<text x="{px(x):.1f}" y="{top + ph + 16}" text-anchor="middle" font-family="sans-serif" font-size="11">{x:g}</text>'
        )
    for i in range(5):
        y = y0 + (y1 - y0) * i / 4
        parts.append(
            f'<text x="{left - 6}" y="{py(y) + 4:.1f}" text-anchor="end" font-family="sans-serif" font-size="11">{y:.2f}</text>'
        )
    parts.append(
        f'<text x="{left + pw / 2:.1f}" y="{height - 8}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(x_label)}</text>'
    )
    parts.append(
        f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 14 {top + ph / 2:.1f})">{escape(y_label)}</text>'
    )
    for i, (name, values) in enumerate(series.items()):
        colour = colours[i % len(colours)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, values))
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="2" points="{pts}"/>')
        for x, y in zip(xs, values):
            parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{colour}"/>')
        ly = top + 14 + 16 * i
        parts.append(f'<line x1="{left + pw - 120}" y1="{ly}" x2="{left + pw - 100}" y2="{ly}" stroke="{colour}" stroke-width="2"/>')
        parts.append(
            f'<text x="{left + pw - 94}" y="{ly + 4}" font-family="sans-serif" font-size="11">{escape(name)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_report(result: ExperimentResult, out_dir: str | Path, save_model: bool = True) -> Path:
    """Write the full report directory for an experiment."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.config.save(out / "config.json")

    head = ["variant", "class", "iou", *METRIC_COLUMNS]
    _write_rows(out / "per_class.csv", head, per_class_rows(result))
    _write_rows(out / "overall.csv", ["variant", "iou", *METRIC_COLUMNS], overall_rows(result))

    curve = result.curve()
    xs = list(result.thresholds)
    _write_rows(
        out / "accuracy_vs_iou.csv",
        ["iou", *VARIANTS],
        [[f"{t:g}"] + [_fmt(curve[v][i]) for v in VARIANTS] for i, t in enumerate(xs)],
    )
    (out / "accuracy_vs_iou.svg").write_text(
        svg_line_chart(xs, {VARIANT_TITLES[v]: curve[v] for v in VARIANTS}, "Overall accuracy vs IoU threshold", "IoU threshold", "Accuracy"),
        encoding="utf-8",
    )
    for f in result.folds:
        f.report.write_csv(out / f"train_fold{f.fold + 1:02d}.csv")

    if len(result.folds) >= 2:
        header, rows = fold_table(result)
        _write_rows(out / "folds.csv", header, rows)
        _write_json(out / "ttest.json", ttest_payload(result))

    _write_json(
        out / "summary.json",
        {
            "folds": len(result.folds),
            "iou_thresholds": xs,
            "mean_accuracy": {v: dict(zip((f"{t:g}" for t in xs), curve[v])) for v in VARIANTS},
            "stop_epochs": [f.report.stop_epoch for f in result.folds],
        },
    )
    if save_model:
        save_checkpoint(result.folds[0].model, out / "checkpoint")
    return out
