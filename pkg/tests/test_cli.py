"""End-to-end CLI behavior on a small corpus: artifact existence, exit
codes, idempotence, and SVG structure."""

import numpy as np
import pytest

from mguard import cli
from mguard import data as dp
from mguard import detection


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Run synth -> preprocess -> train -> calibrate -> detect -> evaluate
    once at toy scale and share the artifact directory."""
    root = tmp_path_factory.mktemp("pipeline")
    out = str(root)
    args = [
        "--seed", "5", "--out", out,
        "--buildings", "8", "--hours", "260", "--anomaly-rate", "0.03",
    ]
    assert cli.main(["synth", *args]) == 0
    assert cli.main([
        "preprocess", "--seed", "5", "--out", out,
        "--csv", f"{out}/synth.csv", "--test-fraction", "0.4",
        "--window-length", "24", "--eval-stride", "24",
    ]) == 0
    assert cli.main([
        "train", "--seed", "5", "--out", out, "--train", f"{out}/train.mgwd",
        "--epochs", "1", "--batch-size", "8",
    ]) == 0
    assert cli.main([
        "calibrate", "--seed", "5", "--out", out,
        "--checkpoint", f"{out}/latest.glsm", "--validation", f"{out}/val.mgwd",
        "--steps", "12", "--chunk", "32",
    ]) == 0
    assert cli.main([
        "detect", "--seed", "5", "--out", out,
        "--checkpoint", f"{out}/latest.glsm", "--windows", f"{out}/test.mgwd",
        "--threshold", f"{out}/threshold.txt", "--steps", "12", "--chunk", "32",
    ]) == 0
    assert cli.main(["evaluate", "--seed", "5", "--out", out, "--scores", f"{out}/scores.csv"]) == 0
    return root


class TestPipelineArtifacts:
    def test_expected_files_exist(self, pipeline):
        for name in (
            "synth.csv", "train.mgwd", "val.mgwd", "test.mgwd", "latest.glsm",
            "train_log.csv", "stability.json", "threshold.txt", "val_scores.csv",
            "scores.csv", "report.txt", "metrics.csv", "confusion.csv",
        ):
            assert (pipeline / name).exists(), name

    def test_resolved_config_written_per_command(self, pipeline):
        for cmd in ("synth", "preprocess", "train", "calibrate", "detect", "evaluate"):
            assert (pipeline / f"config_{cmd}.ini").exists()

    def test_scores_csv_has_verdicts(self, pipeline):
        scored = detection.load_scores(pipeline / "scores.csv")
        assert scored and all(sw.verdict in (0, 1) for sw in scored)

    def test_train_log_columns(self, pipeline):
        header = (pipeline / "train_log.csv").read_text().splitlines()[0]
        assert header == "iteration,epoch,L_D,L_G,d_accuracy"


class TestExitCodes:
    def test_missing_input_file_is_data_error(self, tmp_path):
        rc = cli.main(["preprocess", "--out", str(tmp_path), "--csv", str(tmp_path / "nope.csv")])
        assert rc == 3

    def test_conflicting_flags_are_config_error(self, tmp_path, pipeline):
        rc = cli.main([
            "preprocess", "--out", str(tmp_path), "--csv", str(pipeline / "synth.csv"),
            "--test-csv", str(pipeline / "synth.csv"), "--test-fraction", "0.5",
        ])
        assert rc == 2

    def test_bad_config_file_value(self, tmp_path, pipeline):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[training]\nepochs = many\n")
        rc = cli.main([
            "train", "--config", str(cfg), "--out", str(tmp_path),
            "--train", str(pipeline / "train.mgwd"),
        ])
        assert rc == 2

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[training]\nlearning_rate = 1\n")
        rc = cli.main(["synth", "--config", str(cfg), "--out", str(tmp_path)])
        assert rc == 2

    def test_corrupt_checkpoint_is_data_error(self, tmp_path, pipeline):
        bad = tmp_path / "bad.glsm"
        bad.write_bytes(b"XXXX" + bytes(32))
        rc = cli.main([
            "detect", "--out", str(tmp_path), "--checkpoint", str(bad),
            "--windows", str(pipeline / "test.mgwd"), "--threshold", str(pipeline / "threshold.txt"),
        ])
        assert rc == 3


class TestIdempotence:
    def test_synth_rerun_byte_identical(self, pipeline, tmp_path):
        args = ["--seed", "5", "--buildings", "8", "--hours", "260", "--anomaly-rate", "0.03"]
        assert cli.main(["synth", *args, "--out", str(tmp_path)]) == 0
        assert (tmp_path / "synth.csv").read_bytes() == (pipeline / "synth.csv").read_bytes()

    def test_preprocess_rerun_byte_identical(self, pipeline, tmp_path):
        assert cli.main([
            "preprocess", "--seed", "5", "--out", str(tmp_path),
            "--csv", str(pipeline / "synth.csv"), "--test-fraction", "0.4",
            "--window-length", "24", "--eval-stride", "24",
        ]) == 0
        for name in ("train.mgwd", "val.mgwd", "test.mgwd"):
            assert (tmp_path / name).read_bytes() == (pipeline / name).read_bytes()


class TestPlot:
    def test_overlay_counts_detected_markers(self, tmp_path, pipeline):
        scored = detection.load_scores(pipeline / "scores.csv")
        bid = scored[0].window.building_id
        # rewrite scores: exactly 3 detected windows for one building
        rows = [sw for sw in scored if sw.window.building_id == bid][:3]
        for sw in rows:
            sw.verdict = 1
        detection.save_scores(tmp_path / "three.csv", rows)
        rc = cli.main([
            "plot", "--out", str(tmp_path), "--csv", str(pipeline / "synth.csv"),
            "--scores", str(tmp_path / "three.csv"), "--building", bid,
            "--window-length", "24",
        ])
        assert rc == 0
        svg = (tmp_path / f"series_{bid}.svg").read_text()
        assert svg.count('id="det_') == 3

    def test_empty_scores_gives_series_only(self, tmp_path, pipeline):
        detection.save_scores(tmp_path / "empty.csv", [])
        scored = detection.load_scores(pipeline / "scores.csv")
        bid = scored[0].window.building_id
        rc = cli.main([
            "plot", "--out", str(tmp_path), "--csv", str(pipeline / "synth.csv"),
            "--scores", str(tmp_path / "empty.csv"), "--building", bid,
        ])
        assert rc == 0
        svg = (tmp_path / f"series_{bid}.svg").read_text()
        assert svg.count('id="det_') == 0
        assert 'id="series"' in svg

    def test_zoom_range_on_axis(self, tmp_path, pipeline):
        scored = detection.load_scores(pipeline / "scores.csv")
        bid = scored[0].window.building_id
        rc = cli.main([
            "plot", "--out", str(tmp_path), "--csv", str(pipeline / "synth.csv"),
            "--building", bid, "--from", "200", "--to", "250",
        ])
        assert rc == 0
        svg = (tmp_path / f"series_{bid}.svg").read_text()
        assert "samples 200-250" in svg
        assert ">200<" in svg and ">249<" in svg  # --to is exclusive

    def test_loss_curves_emitted(self, tmp_path, pipeline):
        rc = cli.main([
            "plot", "--out", str(tmp_path), "--csv", str(pipeline / "synth.csv"),
            "--building", detection.load_scores(pipeline / "scores.csv")[0].window.building_id,
            "--train-log", str(pipeline / "train_log.csv"),
        ])
        assert rc == 0
        svg = (tmp_path / "losses.svg").read_text()
        assert 'id="loss_d"' in svg and 'id="loss_g"' in svg

    def test_unknown_building_is_data_error(self, tmp_path, pipeline):
        rc = cli.main([
            "plot", "--out", str(tmp_path), "--csv", str(pipeline / "synth.csv"),
            "--building", "Bxxx",
        ])
        assert rc == 3

    def test_bad_range_is_config_error(self, tmp_path, pipeline):
        scored = detection.load_scores(pipeline / "scores.csv")
        bid = scored[0].window.building_id
        rc = cli.main([
            "plot", "--out", str(tmp_path), "--csv", str(pipeline / "synth.csv"),
            "--building", bid, "--from", "50", "--to", "10",
        ])
        assert rc == 2
