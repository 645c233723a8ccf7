"""End-to-end tests of the ordinal-ts command line."""

import json

import pandas as pd
import pytest
import yaml

from ordinal_ts.cli.cli import build_parser, main


@pytest.fixture
def stream_csv(tmp_path):
    path = tmp_path / "stream.csv"
    code = main([
        "generate", "--out", str(path),
        "--n-classes", "4", "--channels", "2", "--length", "5",
        "--per-class", "12", "--run-length", "3", "--seed", "1",
    ])
    assert code == 0
    return path


@pytest.fixture
def trained_run(tmp_path, stream_csv):
    out = tmp_path / "run"
    code = main([
        "train", "--data", str(stream_csv), "--classes", "c1,c2,c3,c4", "--missing", "c2",
        "--encoder", "mean_pool_mlp", "--hidden", "8", "--embed", "4",
        "--epochs", "2", "--batch-size", "16", "--window", "5", "--out", str(out),
    ])
    assert code == 0
    return out


def experiment_config(path, dataset):
    document = {
        "experiment": {
            "protocol": "nonconsecutive",
            "n_missing": 1,
            "n_repeats": 2,
            "window_sizes": [0, 2],
            "encoder_kind": "mean_pool_mlp",
            "hidden_dim": 8,
            "embed_dim": 4,
            "epochs": 2,
            "batch_size": 16,
            "max_per_anchor": 2,
        },
        "dataset": dataset,
    }
    path.write_text(yaml.safe_dump(document))
    return path


class TestParser:
    """Argument surface."""

    def test_subcommands(self):
        parser = build_parser()
        for command in ("generate", "train", "gradcheck", "predict", "experiment", "report"):
            with pytest.raises(SystemExit) as exc:
                parser.parse_args([command, "--help"])
            assert exc.value.code == 0

    def test_command_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestGenerate:
    def test_writes_stream_and_config(self, stream_csv):
        frame = pd.read_csv(stream_csv)
        assert list(frame.columns) == ["ch0", "ch1", "label"]
        assert len(frame) == 4 * 12 * 5
        config = json.loads(stream_csv.with_suffix(".config.json").read_text())
        assert config["synthetic"]["run_length"] == 3
        assert config["space"]["classes"] == ["c1", "c2", "c3", "c4"]


class TestTrainPredict:
    """Training artifacts and stream prediction."""

    def test_train_outputs(self, trained_run):
        for name in ("model.bin", "model.json", "store.npz", "train_log.jsonl", "config.json"):
            assert (trained_run / name).exists(), name
        config = json.loads((trained_run / "config.json").read_text())
        assert config["space"]["missing"] == ["c2"]
        assert config["train"]["epochs"] == 2
        assert config["encoder"]["window_length"] == 5
        assert len((trained_run / "train_log.jsonl").read_text().splitlines()) == 2

    def test_predict(self, trained_run, stream_csv, tmp_path):
        out = tmp_path / "preds.jsonl"
        code = main([
            "predict", "--model", str(trained_run), "--data", str(stream_csv),
            "--out", str(out), "--window-size", "3", "--alpha", "0.1",
        ])
        assert code == 0
        records = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(records) == 48
        domain = {"c1", "c2", "c3", "c4"}
        for record in records:
            assert record["label"] in domain
            assert record["corrected_label"] in domain
            assert record["branch"] in {"knn", "both_missing", "test"}
        config = json.loads(out.with_suffix(".config.json").read_text())
        assert config["alpha"] == 0.1 and config["window_size"] == 3

    def test_train_records_training_scaler(self, trained_run, stream_csv):
        config = json.loads((trained_run / "config.json").read_text())
        frame = pd.read_csv(stream_csv)
        train_rows = frame[frame["label"] != "c2"][["ch0", "ch1"]]
        assert config["scaler"]["mean"] == pytest.approx(train_rows.mean().tolist(), rel=1e-9)
        assert config["scaler"]["scale"] == pytest.approx(train_rows.std(ddof=0).tolist(), rel=1e-9)

    def test_train_without_standardization(self, stream_csv, tmp_path):
        out = tmp_path / "raw"
        code = main([
            "train", "--data", str(stream_csv), "--classes", "c1,c2,c3,c4", "--no-standardize",
            "--encoder", "mean_pool_mlp", "--hidden", "4", "--embed", "2",
            "--epochs", "1", "--batch-size", "16", "--window", "5", "--out", str(out),
        ])
        assert code == 0
        assert json.loads((out / "config.json").read_text())["scaler"] is None

    def test_train_defaults_to_settings_output_dir(self, stream_csv, tmp_path, monkeypatch):
        monkeypatch.setenv("ORDINAL_TS_OUTPUT_DIR", str(tmp_path / "runs"))
        code = main([
            "train", "--data", str(stream_csv), "--classes", "c1,c2,c3,c4",
            "--encoder", "mean_pool_mlp", "--hidden", "4", "--embed", "2",
            "--epochs", "1", "--batch-size", "16", "--window", "5",
        ])
        assert code == 0
        assert (tmp_path / "runs" / "train" / "model.bin").exists()

    def test_train_rejects_unknown_missing_class(self, stream_csv, tmp_path):
        code = main([
            "train", "--data", str(stream_csv), "--classes", "c1,c2,c3,c4", "--missing", "c9",
            "--out", str(tmp_path / "bad"),
        ])
        assert code == 1

    def test_predict_needs_training_dir(self, stream_csv, tmp_path):
        code = main(["predict", "--model", str(tmp_path), "--data", str(stream_csv), "--out", str(tmp_path / "p.jsonl")])
        assert code == 1


class TestGradcheck:
    @pytest.mark.parametrize("encoder", ["mean_pool_mlp", "bi_recurrent"])
    def test_passes(self, encoder):
        assert main(["gradcheck", "--encoder", encoder]) == 0

    def test_triplet_loss(self):
        assert main(["gradcheck", "--encoder", "mean_pool_mlp", "--loss", "triplet_only", "--seed", "3"]) == 0


class TestExperimentAndReport:
    """Config-driven experiments and report regeneration."""

    def test_synthetic_experiment(self, tmp_path):
        config = experiment_config(tmp_path / "exp.yaml", {
            "synthetic": {"n_classes": 5, "n_channels": 2, "segment_length": 5, "segments_per_class": 10, "seed": 2},
        })
        out = tmp_path / "out"
        assert main(["experiment", "--config", str(config), "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert len(summary["repeats"]) == 2
        assert summary["spec"]["epochs"] == 2

        (out / "repeats.csv").unlink()
        assert main(["report", str(out), "--regenerate"]) == 0
        assert len(pd.read_csv(out / "repeats.csv")) == 4

    def test_csv_experiment_with_overrides(self, tmp_path, stream_csv):
        config = experiment_config(tmp_path / "exp.yaml", {
            "csv": stream_csv.name,
            "classes": "c1,c2,c3,c4",
            "stream": {"window_length": 5},
        })
        out = tmp_path / "out"
        code = main([
            "experiment", "--config", str(config), "--out", str(out),
            "--method", "triplet_interpolation", "--repeats", "1",
        ])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["spec"]["method"] == "triplet_interpolation"
        assert len(summary["repeats"]) == 1
        assert not list(out.glob("traces_*.jsonl"))

    def test_config_without_experiment_section(self, tmp_path):
        path = tmp_path / "exp.yaml"
        path.write_text("dataset: {}\n")
        assert main(["experiment", "--config", str(path), "--out", str(tmp_path / "o")]) == 1

    def test_report_without_summary(self, tmp_path):
        assert main(["report", str(tmp_path)]) == 1
