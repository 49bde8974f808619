import csv
import json
import re

import pytest

from railfuse.report import svg_line_chart, write_report


def read_tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def report_dir(small_run, tmp_path_factory):
    _, result = small_run
    return write_report(result, tmp_path_factory.mktemp("report"))


def test_report_files(report_dir):
    names = set(read_tree(report_dir))
    expected = {
        "config.json", "per_class.csv", "overall.csv", "accuracy_vs_iou.csv", "accuracy_vs_iou.svg",
        "folds.csv", "ttest.json", "summary.json", "train_fold01.csv", "train_fold02.csv",
    }
    assert expected <= names
    assert any(n.startswith("checkpoint/") for n in names)


def test_report_is_byte_identical(small_run, report_dir, tmp_path):
    _, result = small_run
    assert read_tree(write_report(result, tmp_path)) == read_tree(report_dir)


def test_per_class_table(report_dir):
    with open(report_dir / "per_class.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 3 * 3
    assert {r["class"] for r in rows} == {"Rupture", "Surface defect", "Nothing"}
    for r in rows:
        assert 0.0 <= float(r["ACC"]) <= 1.0


def test_fold_table_summary_rows(small_run, report_dir):
    _, result = small_run
    with open(report_dir / "folds.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["fold"] for r in rows] == ["1", "2", "Mean", "StD"]
    col = "fused@0.7"
    vals = [float(r[col]) for r in rows[:2]]
    assert float(rows[2][col]) == pytest.approx(sum(vals) / 2, abs=1e-6)
    assert float(rows[3][col]) == pytest.approx(abs(vals[0] - vals[1]) / 2, abs=1e-6)
    assert vals == pytest.approx(result.fold_accuracies("fused", 0.7), abs=1e-6)


def test_ttest_payload(report_dir):
    payload = json.loads((report_dir / "ttest.json").read_text())
    assert set(payload) == {"0.3", "0.5", "0.7"}
    for entry in payload.values():
        assert entry["df"] == 2 and 0.0 <= entry["p"] <= 1.0


def test_svg_has_one_polyline_per_variant(report_dir):
    svg = (report_dir / "accuracy_vs_iou.svg").read_text()
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert len(re.findall(r"<polyline", svg)) == 2


def test_svg_rejects_mismatched_series():
    with pytest.raises(ValueError):
        svg_line_chart([0.3, 0.5], {"a": [0.1]}, "t", "x", "y")


def test_single_fold_report_skips_fold_table(small_run, tmp_path):
    import dataclasses

    scenes, result = small_run
    from railfuse.pipeline import run_experiment

    single = run_experiment(scenes, dataclasses.replace(result.config, folds=1))
    out = write_report(single, tmp_path, save_model=False)
    assert not (out / "folds.csv").exists() and not (out / "checkpoint").exists()
    assert json.loads((out / "summary.json").read_text())["folds"] == 1
