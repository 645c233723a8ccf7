"""
Ingest delimited time-step tables into labeled segments.
"""

import argparse
import glob
import logging
import os
import time
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from dotenv import load_dotenv
from rich.console import Console
from rich.table import Table

from ...core.labels import LabelSpace, UnknownClassError, parse_class_spec
from ...core.models import Segment
from ..utils.models import IngestionResult, StreamSpec
from .segmenter import SegmentingConfig, create_segmenter, find_runs

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)


def _parse_float(cell: str) -> float:
    try:
        return float(cell)
    except ValueError:
        return np.nan


def _parse_column(column: pd.Series) -> np.ndarray:
    """Exact string-to-float64 conversion; unparseable cells become NaN."""
    raw = column.to_numpy(dtype=object)
    try:
        return raw.astype(np.float64)
    except ValueError:
        return np.array([_parse_float(cell) for cell in raw], dtype=np.float64)


def read_stream(path: Union[str, Path], spec: StreamSpec, space: LabelSpace) -> Tuple[np.ndarray, List[str], List[str]]:
    """
    Load and validate one CSV stream.

    Feature cells are parsed with Python float semantics, so values written
    with 17 significant digits come back bit-for-bit.

    Returns:
        (rows x channels values, per-row labels, feature column names)
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    if spec.label_column not in frame.columns:
        raise ValueError(f"{path}: label column {spec.label_column!r} not found in header {list(frame.columns)}")

    features = list(spec.feature_columns) or [c for c in frame.columns if c != spec.label_column]
    absent = [c for c in features if c not in frame.columns]
    if absent:
        raise ValueError(f"{path}: feature columns {absent} not found in header")
    if not features:
        raise ValueError(f"{path}: no feature columns")

    numeric = np.empty((len(frame), len(features)), dtype=np.float64)
    for col, name in enumerate(features):
        numeric[:, col] = _parse_column(frame[name])
    bad = ~np.isfinite(numeric)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise ValueError(
            f"{path}: non-numeric value {frame[features[col]].iloc[row]!r} in column {features[col]!r} at row {row}"
        )

    labels = frame[spec.label_column].astype(str).tolist()
    for row, label in enumerate(labels):
        if label not in space:
            raise UnknownClassError(f"{path}: label {label!r} at row {row} is not in the label domain {list(space.domain)}")

    return numeric, labels, features


def ingest_csv(path: Union[str, Path], spec: StreamSpec, space: LabelSpace) -> List[Segment]:
    """
    Read a CSV stream and window each label-constant run.

    Windows never span a label change; runs shorter than the window yield
    nothing. ``source_index`` is the window's first row.

    Args:
        path: CSV file with a header row
        spec: Column names and window geometry
        space: Label space every label must belong to

    Returns:
        Labeled segments in row order
    """
    values, labels, _ = read_stream(path, spec, space)
    segmenter = create_segmenter(SegmentingConfig(window_length=spec.window_length, stride=spec.effective_stride))
    return segmenter.segment(values, labels)


class CsvIngestionPipeline:
    """Pipeline for turning a folder of CSV streams into segments."""

    def __init__(self, spec: StreamSpec, space: LabelSpace, source: Union[str, Path] = "data"):
        """
        Initialize ingestion pipeline.

        Args:
            spec: Stream specification shared by every file
            space: Label space
            source: A CSV file or a folder of CSV files
        """
        self.spec = spec
        self.space = space
        self.source = Path(source)
        self.segmenter = create_segmenter(
            SegmentingConfig(window_length=spec.window_length, stride=spec.effective_stride)
        )

    def find_files(self) -> List[str]:
        if self.source.is_file():
            return [str(self.source)]
        return sorted(glob.glob(os.path.join(str(self.source), "**", "*.csv"), recursive=True))

    def ingest_file(self, path: str) -> Tuple[List[Segment], IngestionResult]:
        """Ingest one file, recording failures in the result instead of raising."""
        start = time.perf_counter()
        try:
            values, labels, _ = read_stream(path, self.spec, self.space)
            segments = self.segmenter.segment(values, labels)
        except ValueError as e:
            logger.error(f"Failed to process {path}: {e}")
            return [], IngestionResult(
                source=path,
                rows=0,
                runs=0,
                segments_created=0,
                rows_discarded=0,
                processing_time_ms=(time.perf_counter() - start) * 1000,
                errors=[str(e)],
            )

        covered = np.zeros(len(labels), dtype=bool)
        for segment in segments:
            covered[segment.source_index:segment.source_index + segment.window_length] = True
        result = IngestionResult(
            source=path,
            rows=len(labels),
            runs=len(find_runs(labels)),
            segments_created=len(segments),
            rows_discarded=int((~covered).sum()),
            processing_time_ms=(time.perf_counter() - start) * 1000,
        )
        logger.info(f"{path}: {result.segments_created} segments from {result.runs} runs")
        return segments, result

    def ingest(
        self,
        progress_callback: Optional[Callable[[int, int], None]] = None,
    ) -> Tuple[List[Segment], List[IngestionResult]]:
        """
        Ingest every file under the source.

        Returns:
            (all segments, per-file results)
        """
        files = self.find_files()
        if not files:
            logger.warning(f"No CSV files found in {self.source}")
            return [], []

        segments: List[Segment] = []
        results: List[IngestionResult] = []
        for i, path in enumerate(files):
            file_segments, result = self.ingest_file(path)
            segments.extend(file_segments)
            results.append(result)
            if progress_callback:
                progress_callback(i + 1, len(files))
        return segments, results


def build_space(classes: str, missing: Sequence[str] = ()) -> LabelSpace:
    names, ordinals = parse_class_spec(classes)
    return LabelSpace.from_names(names, ordinals=ordinals, missing=missing)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Summarize how a CSV file or folder segments under a stream spec."""
    parser = argparse.ArgumentParser(description="Segment labeled CSV time series")
    parser.add_argument("source", help="CSV file or folder of CSV files")
    parser.add_argument("--classes", required=True, help="Ordered classes, e.g. 'low,mid,high' or 'a:1,b:3'")
    parser.add_argument("--label-column", default="label", help="Label column name")
    parser.add_argument("--features", default="", help="Comma-separated feature columns (default: all others)")
    parser.add_argument("--window", type=int, default=10, help="Window length")
    parser.add_argument("--stride", type=int, default=None, help="Window stride (default: window length)")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )
    console = Console()

    try:
        spec = StreamSpec(
            label_column=args.label_column,
            feature_columns=[c for c in args.features.split(",") if c],
            window_length=args.window,
            stride=args.stride,
        )
        pipeline = CsvIngestionPipeline(spec, build_space(args.classes), args.source)
        segments, results = pipeline.ingest(
            lambda current, total: console.print(f"[dim]Progress: {current}/{total} files[/dim]")
        )
    except ValueError as e:
        console.print(f"[red]Ingestion failed: {e}[/red]")
        return 1

    table = Table(title="Ingestion summary")
    for column in ("File", "Rows", "Runs", "Segments", "Discarded rows", "Status"):
        table.add_column(column)
    for r in results:
        status = "[green]ok[/green]" if not r.errors else f"[red]{r.errors[0]}[/red]"
        table.add_row(r.source, str(r.rows), str(r.runs), str(r.segments_created), str(r.rows_discarded), status)
    console.print(table)
    console.print(f"Total segments: {len(segments)}")
    return 1 if any(r.errors for r in results) else 0


if __name__ == "__main__":
    raise SystemExit(main())
