#!/usr/bin/env python3
"""Command-line interface for ordinal time-series classification with missing classes."""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from ..config.settings import Settings, load_settings
from ..core.encoder import EncoderConfig, EncoderKind, embed_batch, init_model
from ..core.labels import LabelDistanceKind, LabelSpace, parse_class_spec
from ..core.models import Segment
from ..core.persistence import load_model, save_model
from ..core.retrieval import EmbeddingStore, build_label_rank_matrix, classify, window_correct
from ..core.stats import RankStatKind, TestConfig
from ..core.trainer import LossKind, TrainConfig, grad_check, train
from ..data.ingestion.ingest import ingest_csv
from ..data.scaling import ChannelScaler
from ..data.synthetic import export_csv, generate, synthetic_space
from ..data.utils.models import StreamSpec, SyntheticConfig
from ..harness.experiment import ExperimentReport, ExperimentSpec, run_experiment
from ..harness.reports import emit_reports, load_report, write_csv_reports

console = Console()
logger = logging.getLogger(__name__)

GRAD_CHECK_TOLERANCE = 1e-4


def write_config(path: Path, payload: Dict[str, Any]) -> Path:
    """Write a resolved run config as sorted JSON."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def space_from_args(classes: str, missing: str, label_distance: str) -> LabelSpace:
    names, ordinals = parse_class_spec(classes)
    return LabelSpace.from_names(
        names,
        ordinals=ordinals,
        missing=[m.strip() for m in missing.split(",") if m.strip()],
        label_distance=LabelDistanceKind(label_distance),
    )


def stream_from_args(args: argparse.Namespace, settings: Settings) -> StreamSpec:
    return StreamSpec(
        label_column=args.label_column,
        feature_columns=[c for c in args.features.split(",") if c],
        window_length=args.window or settings.window_length,
        stride=args.stride,
    )


def cmd_generate(args: argparse.Namespace, settings: Settings) -> int:
    cfg = SyntheticConfig(
        n_classes=args.n_classes,
        n_channels=args.channels,
        segment_length=args.length or settings.window_length,
        segments_per_class=args.per_class,
        class_separation=args.separation,
        ar_coefficient=args.ar,
        noise_std=args.noise,
        run_length=args.run_length,
        seed=args.seed,
    )
    segments = generate(cfg)
    out = export_csv(segments, args.out)
    write_config(out.with_suffix(".config.json"), {
        "synthetic": cfg.model_dump(),
        "space": synthetic_space(cfg).to_dict(),
    })
    console.print(f"[green]✓[/green] Wrote {len(segments)} segments to {out}")
    console.print(f"[dim]Classes: {','.join(cfg.class_names)}[/dim]")
    return 0


def cmd_train(args: argparse.Namespace, settings: Settings) -> int:
    space = space_from_args(args.classes, args.missing, args.label_distance or settings.label_distance)
    stream = stream_from_args(args, settings)
    segments = ingest_csv(args.data, stream, space)
    training = [s for s in segments if not space.is_missing(s.label)]
    skipped = len(segments) - len(training)
    if skipped:
        console.print(f"[yellow]Held out {skipped} segments of missing classes {list(space.missing_ordered)}[/yellow]")
    if not training:
        raise ValueError("No training segments left after removing missing classes")

    standardize = settings.standardize if args.standardize is None else args.standardize
    scaler = ChannelScaler.fit(training) if standardize else None
    if scaler is not None:
        training = scaler.transform(training)

    encoder_cfg = EncoderConfig.from_settings(
        settings,
        kind=args.encoder,
        n_channels=training[0].n_channels,
        hidden_dim=args.hidden,
        embed_dim=args.embed,
        window_length=stream.window_length,
        seed=args.seed,
    )
    train_cfg = TrainConfig.from_settings(
        settings,
        loss_kind=args.loss,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        seed=args.seed,
    )

    out_dir = Path(args.out or Path(settings.output_dir) / "train")
    model, report = train(
        init_model(encoder_cfg),
        training,
        train_cfg,
        space,
        log_path=out_dir / "train_log.jsonl",
        progress_callback=lambda epoch, total: console.print(f"[dim]Epoch {epoch}/{total}[/dim]"),
    )
    save_model(model, out_dir / "model.bin")
    features = embed_batch(model, training)
    np.savez(out_dir / "store.npz", embeddings=features, labels=np.array([s.label for s in training]))
    write_config(out_dir / "config.json", {
        "encoder": json.loads(encoder_cfg.model_dump_json()),
        "train": json.loads(train_cfg.model_dump_json()),
        "stream": stream.model_dump(),
        "space": space.to_dict(),
        "scaler": scaler.to_dict() if scaler is not None else None,
        "data": str(args.data),
    })

    console.print(Panel(
        f"[cyan]Segments:[/cyan] {len(training)}\n"
        f"[cyan]Loss:[/cyan] {report.mean_losses[0]:.4f} → {report.mean_losses[-1]:.4f}\n"
        f"[cyan]Model:[/cyan] {out_dir / 'model.bin'}",
        title=f"Trained {encoder_cfg.kind.value} ({train_cfg.loss_kind.value})",
        border_style="green",
    ))
    return 0


def load_run(model_dir: Path) -> Tuple[Dict[str, Any], LabelSpace]:
    config_path = model_dir / "config.json"
    if not config_path.exists():
        raise ValueError(f"{model_dir} has no config.json; is it a training output directory?")
    config = json.loads(config_path.read_text(encoding="utf-8"))
    s = config["space"]
    space = LabelSpace.from_names(
        s["classes"],
        ordinals=s["ordinals"],
        missing=s["missing"],
        label_distance=s["label_distance"],
        custom_table=s.get("custom_table"),
    )
    return config, space


def cmd_predict(args: argparse.Namespace, settings: Settings) -> int:
    model_dir = Path(args.model)
    config, space = load_run(model_dir)
    model = load_model(model_dir / "model.bin")
    with np.load(model_dir / "store.npz", allow_pickle=False) as stored:
        store = EmbeddingStore.from_embeddings(stored["embeddings"], stored["labels"].tolist(), space)

    stream = StreamSpec(**config["stream"])
    segments = ingest_csv(args.data, stream, space)
    if not segments:
        raise ValueError(f"{args.data} produced no segments")
    if config.get("scaler"):
        segments = ChannelScaler.from_dict(config["scaler"]).transform(segments)

    stat = RankStatKind(args.stat or settings.rank_stat)
    test_cfg = TestConfig.from_settings(settings, alpha=args.alpha)
    k = args.k or settings.knn_k
    L = build_label_rank_matrix(space)

    traces = []
    for segment, f in zip(segments, embed_batch(model, segments)):
        trace = classify(store, L, f, space, stat, test_cfg, k)
        trace.source_index = segment.source_index
        trace.true_label = segment.label
        traces.append(trace)
    corrected = window_correct([t.label for t in traces], args.window_size, space)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        for trace, label in zip(traces, corrected):
            record = trace.to_record()
            record["corrected_label"] = label
            f.write(json.dumps(record, sort_keys=True) + "\n")
    write_config(out.with_suffix(".config.json"), {
        "model": str(model_dir),
        "data": str(args.data),
        "stat": stat.value,
        "alpha": test_cfg.alpha,
        "k": k,
        "window_size": args.window_size,
    })

    truth = [s.label for s in segments]
    accuracy = float(np.mean([t == p for t, p in zip(truth, corrected)]))
    console.print(f"[green]✓[/green] {len(traces)} predictions written to {out}")
    console.print(f"[cyan]Accuracy against stream labels:[/cyan] {accuracy:.3f}")
    return 0


def cmd_gradcheck(args: argparse.Namespace, settings: Settings) -> int:
    data_cfg = SyntheticConfig(
        n_classes=args.n_classes,
        n_channels=args.channels,
        segment_length=args.length,
        segments_per_class=args.per_class,
        seed=args.seed,
    )
    space = synthetic_space(data_cfg)
    encoder_cfg = EncoderConfig(
        kind=args.encoder,
        n_channels=args.channels,
        hidden_dim=args.hidden,
        embed_dim=args.embed,
        window_length=args.length,
        seed=args.seed,
    )
    train_cfg = TrainConfig.from_settings(settings, loss_kind=args.loss, seed=args.seed)
    error = grad_check(init_model(encoder_cfg), generate(data_cfg), train_cfg, space)

    ok = error < GRAD_CHECK_TOLERANCE
    colour = "green" if ok else "red"
    console.print(f"[{colour}]Max relative gradient error: {error:.3e}[/{colour}]")
    return 0 if ok else 1


def load_experiment_config(path: Path) -> Dict[str, Any]:
    """YAML or JSON experiment document."""
    try:
        document = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ValueError(f"Cannot parse {path}: {e}") from e
    if not isinstance(document, dict) or "experiment" not in document:
        raise ValueError(f"{path} must be a mapping with an 'experiment' section")
    return document


def dataset_from_config(section: Dict[str, Any], base_dir: Path) -> Tuple[List[Segment], LabelSpace]:
    """Build the dataset described by the 'dataset' section."""
    if "synthetic" in section:
        cfg = SyntheticConfig(**(section["synthetic"] or {}))
        return generate(cfg), synthetic_space(cfg)
    if "csv" in section:
        names, ordinals = parse_class_spec(section["classes"])
        space = LabelSpace.from_names(names, ordinals=ordinals)
        stream = StreamSpec(**(section.get("stream") or {}))
        return ingest_csv(base_dir / section["csv"], stream, space), space
    raise ValueError("dataset section needs either 'synthetic' or 'csv'")


def render_report(report: ExperimentReport) -> None:
    spec = report.spec
    table = Table(title=f"{spec.method.value} / {spec.protocol.value} / {spec.n_missing} missing")
    for column in ("Window", "Missing acc.", "95% CI", "Overall acc.", "95% CI"):
        table.add_column(column, justify="right")
    for a in report.aggregates:
        table.add_row(
            str(a.window),
            f"{a.missing_mean:.3f}",
            f"[{a.missing_ci[0]:.3f}, {a.missing_ci[1]:.3f}]",
            f"{a.overall_mean:.3f}",
            f"[{a.overall_ci[0]:.3f}, {a.overall_ci[1]:.3f}]",
        )
    console.print(table)

    repeats = Table(title="Repeats")
    for column in ("Repeat", "Seed", "Missing", "Order pres.", "Type-I", "Power"):
        repeats.add_column(column)
    for r in report.repeats:
        repeats.add_row(
            str(r.repeat),
            str(r.seed),
            ",".join(r.missing),
            f"{r.order_preservation:.3f}",
            "-" if r.type_one_rate is None else f"{r.type_one_rate:.3f}",
            "-" if r.power is None else f"{r.power:.3f}",
        )
    console.print(repeats)


def cmd_experiment(args: argparse.Namespace, settings: Settings) -> int:
    config_path = Path(args.config)
    document = load_experiment_config(config_path)
    overrides = {k: v for k, v in {"method": args.method, "n_repeats": args.repeats}.items() if v is not None}
    spec = ExperimentSpec(**{**document["experiment"], **overrides})
    dataset, space = dataset_from_config(document.get("dataset") or {"synthetic": {}}, config_path.parent)

    report = run_experiment(
        spec,
        dataset,
        space,
        settings,
        progress_callback=lambda done, total: console.print(f"[dim]Repeat {done}/{total} finished[/dim]"),
    )
    out_dir = Path(args.out or Path(settings.output_dir) / "experiment")
    written = emit_reports(report, out_dir)
    render_report(report)
    console.print(f"[green]✓[/green] {len(written)} files written to {out_dir}")
    return 0


def cmd_report(args: argparse.Namespace, settings: Settings) -> int:
    report = load_report(args.dir)
    render_report(report)
    if args.regenerate:
        out_dir = Path(args.dir if Path(args.dir).is_dir() else Path(args.dir).parent)
        written = write_csv_reports(report, out_dir)
        console.print(f"[green]✓[/green] Regenerated {len(written)} CSV files in {out_dir}")
    return 0


def add_stream_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--label-column", default="label", help="Label column name")
    parser.add_argument("--features", default="", help="Comma-separated feature columns (default: all others)")
    parser.add_argument("--window", type=int, default=None, help="Segment length (default from settings)")
    parser.add_argument("--stride", type=int, default=None, help="Window stride (default: window length)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ordinal-ts",
        description="Ordinal time-series classification with missing classes",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="Write a synthetic ordinal stream as CSV")
    p.add_argument("--out", required=True, help="Output CSV path")
    p.add_argument("--n-classes", type=int, default=8)
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--length", type=int, default=None, help="Time steps per segment")
    p.add_argument("--per-class", type=int, default=100, help="Segments per class")
    p.add_argument("--separation", type=float, default=1.0, help="Mean step per ordinal unit")
    p.add_argument("--ar", type=float, default=0.5, help="AR(1) coefficient")
    p.add_argument("--noise", type=float, default=0.5, help="Innovation standard deviation")
    p.add_argument("--run-length", type=int, default=1, help="Segments per label-constant run")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("train", help="Train an encoder on a labeled CSV stream")
    p.add_argument("--data", required=True, help="Training CSV")
    p.add_argument("--classes", required=True, help="Ordered classes, e.g. 'c1,c2,c3' or 'a:1,b:5'")
    p.add_argument("--missing", default="", help="Comma-separated classes withheld from training")
    p.add_argument("--label-distance", choices=[k.value for k in LabelDistanceKind if k is not LabelDistanceKind.CUSTOM])
    p.add_argument("--loss", choices=[k.value for k in LossKind], default=LossKind.ORDINAL_QUADRUPLET.value)
    p.add_argument("--encoder", choices=[k.value for k in EncoderKind], default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--embed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=None,
                   help="Scale channels with training statistics (default from settings)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="Output directory (default: under settings.output_dir)")
    add_stream_arguments(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("gradcheck", help="Finite-difference check of the analytic gradient")
    p.add_argument("--encoder", choices=[k.value for k in EncoderKind], default=EncoderKind.BI_RECURRENT.value)
    p.add_argument("--loss", choices=[k.value for k in LossKind], default=LossKind.ORDINAL_QUADRUPLET.value)
    p.add_argument("--n-classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=3)
    p.add_argument("--channels", type=int, default=2)
    p.add_argument("--length", type=int, default=4)
    p.add_argument("--hidden", type=int, default=4)
    p.add_argument("--embed", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_gradcheck)

    p = sub.add_parser("predict", help="Classify a CSV stream with a trained model")
    p.add_argument("--model", required=True, help="Training output directory")
    p.add_argument("--data", required=True, help="CSV stream to classify")
    p.add_argument("--out", required=True, help="Trace JSON-lines output")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--stat", choices=[k.value for k in RankStatKind], default=None)
    p.add_argument("--k", type=int, default=None, help="Neighbours for the k-nn branch")
    p.add_argument("--window-size", type=int, default=0, help="Majority-rule window (0 disables)")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("experiment", help="Run a missing-class experiment from a YAML/JSON config")
    p.add_argument("--config", required=True, help="Experiment config file")
    p.add_argument("--out", default=None, help="Output directory (default: under settings.output_dir)")
    p.add_argument("--method", default=None, help="Override experiment.method")
    p.add_argument("--repeats", type=int, default=None, help="Override experiment.n_repeats")
    p.set_defaults(handler=cmd_experiment)

    p = sub.add_parser("report", help="Render a saved experiment summary")
    p.add_argument("dir", help="Experiment output directory or summary.json")
    p.add_argument("--regenerate", action="store_true", help="Rewrite the CSV tables from summary.json")
    p.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point for the ``ordinal-ts`` console script."""
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings()
    except ValueError as e:
        console.print(f"[red]❌ {e}[/red]")
        return 1

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )

    try:
        return args.handler(args, settings)
    except KeyboardInterrupt:
        console.print("\n[yellow]Interrupted[/yellow]")
        return 1
    except Exception as e:
        logger.debug("Command failed", exc_info=True)
        console.print(f"[red]❌ Error: {e}[/red]")
        return 1


if __name__ == "__main__":
    sys.exit(main())
