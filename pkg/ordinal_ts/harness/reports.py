"""
Machine-readable experiment outputs.

Layout of an output directory:

    summary.json                   full report (spec, per-repeat results, aggregates)
    config.json                    resolved experiment config and label domain
    repeats.csv                    one row per (repeat, window)
    confusion_r{r}_w{w}.csv        rows true class, columns predicted, ordinal order
    centroid_distances_r{r}.csv    squared distances between present-class centroids
    class_distances_r{r}.csv       mean squared distances between class groups over S
    traces_r{r}.jsonl              per-sample classification traces (rank-based methods)

Nothing time-dependent is written, so identical inputs give identical bytes.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Union

import pandas as pd

from .experiment import ExperimentReport

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.10g"


def _matrix_frame(matrix, labels: List[str]) -> pd.DataFrame:
    frame = pd.DataFrame(matrix, index=labels, columns=labels)
    frame.index.name = "class"
    return frame


def repeats_frame(report: ExperimentReport) -> pd.DataFrame:
    """Flat per-repeat, per-window table."""
    rows = []
    for r in report.repeats:
        for w in r.windows:
            rows.append({
                "repeat": r.repeat,
                "seed": r.seed,
                "missing": ";".join(r.missing),
                "window": w.window,
                "missing_accuracy": w.missing_accuracy,
                "overall_accuracy": w.overall_accuracy,
                "n_train": r.n_train,
                "n_test": r.n_test,
                "final_loss": r.final_loss,
                "test_decisions": r.test_decisions,
                "type_one_rate": r.type_one_rate,
                "power": r.power,
                "order_preservation": r.order_preservation,
                "reference_overall_accuracy": r.reference_overall_accuracy,
                "reference_missing_accuracy": r.reference_missing_accuracy,
            })
    return pd.DataFrame(rows)


def resolved_config(report: ExperimentReport) -> Dict[str, Any]:
    return {
        "experiment": json.loads(report.spec.model_dump_json()),
        "classes": report.classes,
        "ordinals": report.ordinals,
    }


def write_csv_reports(report: ExperimentReport, out_dir: Path) -> List[Path]:
    """Write every CSV derived from ``report``; returns the written paths."""
    written = []
    path = out_dir / "repeats.csv"
    repeats_frame(report).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    written.append(path)

    for r in report.repeats:
        for w in r.windows:
            path = out_dir / f"confusion_r{r.repeat}_w{w.window}.csv"
            _matrix_frame(w.confusion, report.classes).to_csv(path)
            written.append(path)
        path = out_dir / f"centroid_distances_r{r.repeat}.csv"
        _matrix_frame(r.centroid_distances, r.centroid_classes).to_csv(path, float_format=CSV_FLOAT_FORMAT)
        written.append(path)
        path = out_dir / f"class_distances_r{r.repeat}.csv"
        _matrix_frame(r.class_distances, report.classes).to_csv(path, float_format=CSV_FLOAT_FORMAT)
        written.append(path)
    return written


def emit_reports(report: ExperimentReport, out_dir: Union[str, Path]) -> List[Path]:
    """
    Write the summary, resolved config, CSV tables and traces.

    Args:
        report: Finished experiment report
        out_dir: Output directory, created if needed

    Returns:
        Paths written
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []

        path = out_dir / "summary.json"
        path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
        written.append(path)

        path = out_dir / "config.json"
        path.write_text(json.dumps(resolved_config(report), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(path)

        written.extend(write_csv_reports(report, out_dir))

        for r in report.repeats:
            if not r.traces:
                continue
            path = out_dir / f"traces_r{r.repeat}.jsonl"
            with open(path, "w", encoding="utf-8") as f:
                for record in r.traces:
                    f.write(json.dumps(record, sort_keys=True) + "\n")
            written.append(path)
    except OSError as e:
        raise ValueError(f"Cannot write reports to {out_dir}: {e}") from e

    logger.info(f"Wrote {len(written)} report files to {out_dir}")
    return written


def load_report(path: Union[str, Path]) -> ExperimentReport:
    """Read a summary.json (or a directory containing one)."""
    path = Path(path)
    if path.is_dir():
        path = path / "summary.json"
    if not path.exists():
        raise ValueError(f"No experiment summary at {path}")
    return ExperimentReport.model_validate_json(path.read_text(encoding="utf-8"))
