"""Command-line interface: subcommand round-trips and exit codes."""

import json
import os

import numpy as np
import pytest
from PIL import Image

from pulsestitch.cli import EXIT_INPUT, EXIT_OK, EXIT_PIPELINE, main
from pulsestitch.config import PipelineConfig
from pulsestitch.harness import synthetic_vessel_mask
from pulsestitch.ingest import Frame, FrameSequence, save_frame_dir
from pulsestitch.representation import VesselWeightMap
from pulsestitch.stitching import AlignmentPlan


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    """A 126-frame pulsed sequence written through the synth command."""
    root = tmp_path_factory.mktemp("synth_long")
    spec = root / "spec.json"
    spec.write_text(
        json.dumps(
            {
                "width": 64, "height": 64, "duration": 4.2, "fps": 30.0,
                "pulse_amplitude": 1.5, "texture_seed": 3,
            }
        )
    )
    out = root / "video"
    assert main(["synth", "--spec", str(spec), "--out", str(out)]) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def short_synth_dir(tmp_path_factory):
    """A 9-frame sequence for dynamic-programming alignment tests."""
    root = tmp_path_factory.mktemp("synth_short")
    spec = root / "spec.json"
    spec.write_text(
        json.dumps(
            {"width": 64, "height": 64, "duration": 0.3, "texture_seed": 3}
        )
    )
    out = root / "video"
    assert main(["synth", "--spec", str(spec), "--out", str(out)]) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def aligned_dir(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("aligned")
    code = main(
        [
            "align",
            "--video", str(synth_dir / "video.vmrv"),
            "--annotations", str(synth_dir / "annotations.json"),
            "--out", str(out),
            "--landmark-only",
        ]
    )
    assert code == EXIT_OK
    return out


@pytest.fixture(scope="module")
def tensor_dir(synth_dir, aligned_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("tensors")
    code = main(
        [
            "extract",
            "--video", str(synth_dir / "video.vmrv"),
            "--plan", str(aligned_dir / "plan.json"),
            "--out", str(out),
            "--label", "1",
        ]
    )
    assert code == EXIT_OK
    return out


class TestGlobalFlags:
    def test_no_command_is_an_input_error(self, capsys):
        assert main([]) == EXIT_INPUT

    def test_config_dump_round_trips(self, capsys):
        assert main(["--config-dump"]) == EXIT_OK
        dumped = capsys.readouterr().out
        cfg = PipelineConfig.from_json(dumped)
        assert cfg == PipelineConfig()

    def test_config_file_feeds_the_dump(self, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        path.write_text('{"ratio_threshold": 0.5}')
        assert main(["--config", str(path), "--config-dump"]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["ratio_threshold"] == 0.5

    def test_unknown_config_field_is_an_input_error(self, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        path.write_text('{"no_such_knob": 1}')
        assert main(["--config", str(path), "--config-dump"]) == EXIT_INPUT
        assert "no_such_knob" in capsys.readouterr().err

    def test_missing_config_file_is_an_input_error(self, tmp_path, capsys):
        missing = tmp_path / "absent.json"
        assert main(["--config", str(missing), "--config-dump"]) == EXIT_INPUT

    def test_threads_flag_caps_numeric_libraries(self, capsys):
        assert main(["--threads", "2", "--config-dump"]) == EXIT_OK
        assert os.environ.get("OMP_NUM_THREADS") == "2"


class TestSynth:
    def test_outputs_land_on_disk(self, synth_dir):
        assert (synth_dir / "video.vmrv").exists()
        assert (synth_dir / "video.vmrv.json").exists()
        assert (synth_dir / "annotations.json").exists()
        truth = json.loads((synth_dir / "ground_truth.json").read_text())
        assert len(truth["transforms"]) == 126
        assert all(len(c) == 6 for c in truth["transforms"])
        assert len(truth["vessel_layout"]) == 24
        assert truth["pulse_freq"] == 1.2

    def test_frame_dir_format(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"width": 64, "height": 64, "duration": 0.2}))
        out = tmp_path / "video"
        code = main(
            ["synth", "--spec", str(spec), "--out", str(out), "--format", "frames"]
        )
        assert code == EXIT_OK
        frames = out / "frames"
        assert (frames / "meta.json").exists()
        assert len(list(frames.glob("*.png"))) == 6

    def test_seed_override_controls_texture(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"width": 64, "height": 64, "duration": 0.2}))
        blobs = {}
        for name, seed in (("a", "5"), ("b", "5"), ("c", "6")):
            out = tmp_path / name
            code = main(
                ["--seed", seed, "synth", "--spec", str(spec), "--out", str(out)]
            )
            assert code == EXIT_OK
            blobs[name] = (out / "video.vmrv").read_bytes()
        assert blobs["a"] == blobs["b"]
        assert blobs["a"] != blobs["c"]

    def test_missing_spec_file(self, tmp_path, capsys):
        code = main(
            ["synth", "--spec", str(tmp_path / "nope.json"), "--out", str(tmp_path)]
        )
        assert code == EXIT_INPUT

    def test_invalid_spec_json(self, tmp_path, capsys):
        spec = tmp_path / "spec.json"
        spec.write_text("{broken")
        assert (
            main(["synth", "--spec", str(spec), "--out", str(tmp_path / "o")])
            == EXIT_INPUT
        )

    def test_unknown_spec_field(self, tmp_path, capsys):
        spec = tmp_path / "spec.json"
        spec.write_text('{"width": 64, "height": 64, "wavelength": 3}')
        assert (
            main(["synth", "--spec", str(spec), "--out", str(tmp_path / "o")])
            == EXIT_INPUT
        )


class TestAlign:
    def test_landmark_only_plan_and_heatmap(self, aligned_dir):
        plan = AlignmentPlan.load(aligned_dir / "plan.json")
        assert plan.template_index == 0
        assert len(plan.frames) == 126
        heat = aligned_dir / "heatmap.png"
        assert heat.exists()
        with Image.open(heat) as im:
            assert im.size == (64, 64)
            assert im.mode == "RGB"

    def test_dp_alignment_with_match_report(
        self, short_synth_dir, tmp_path, capsys
    ):
        out = tmp_path / "aligned"
        code = main(
            [
                "align",
                "--video", str(short_synth_dir / "video.vmrv"),
                "--out", str(out),
                "--frames",
                "--match-report",
            ]
        )
        assert code == EXIT_OK
        assert "match report" in capsys.readouterr().out
        plan = AlignmentPlan.load(out / "plan.json")
        assert plan.candidate_evaluations == 9 * 8 // 2
        aligned = out / "aligned"
        assert len(list(aligned.glob("0*.png"))) == 9
        assert len(list(aligned.glob("mask_*.png"))) == 9
        assert json.loads((aligned / "meta.json").read_text())["fps"] == 30.0

    def test_template_mode_config_reaches_the_planner(
        self, short_synth_dir, tmp_path
    ):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"template_mode": "middle"}')
        out = tmp_path / "aligned"
        code = main(
            [
                "--config", str(cfg),
                "align",
                "--video", str(short_synth_dir / "video.vmrv"),
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        plan = AlignmentPlan.load(out / "plan.json")
        assert plan.template_index == 4

    def test_featureless_video_is_a_pipeline_error(self, tmp_path, capsys):
        flat = FrameSequence(
            [Frame(np.full((48, 48, 3), 128, dtype=np.uint8), k) for k in range(3)],
            30.0,
        )
        save_frame_dir(flat, tmp_path / "flat")
        code = main(
            ["align", "--video", str(tmp_path / "flat"), "--out", str(tmp_path / "o")]
        )
        assert code == EXIT_PIPELINE

    def test_missing_video_is_an_input_error(self, tmp_path, capsys):
        code = main(
            ["align", "--video", str(tmp_path / "ghost"), "--out", str(tmp_path / "o")]
        )
        assert code == EXIT_INPUT


class TestExtractScore:
    def test_tensor_files_written(self, tensor_dir):
        files = sorted(tensor_dir.glob("*.vmr1"))
        assert [f.name for f in files] == [
            "segment_000000.vmr1",
            "segment_000003.vmr1",
            "segment_000006.vmr1",
        ]

    def test_score_csv_round_trip(self, tensor_dir, tmp_path, capsys):
        out = tmp_path / "scores.csv"
        code = main(
            [
                "score",
                "--tensors", str(tensor_dir),
                "--out", str(out),
                "--video-id", "vid_a",
            ]
        )
        assert code == EXIT_OK
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "video_id,segment,score,label"
        rows = [line.split(",") for line in lines[1:]]
        assert [r[0] for r in rows] == ["vid_a"] * 3
        assert [int(r[1]) for r in rows] == [0, 3, 6]
        assert all(0.0 <= float(r[2]) <= 1.0 for r in rows)
        assert [r[3] for r in rows] == ["1"] * 3

    def test_traces_csv_option(self, synth_dir, aligned_dir, tmp_path):
        out = tmp_path / "tensors"
        traces = tmp_path / "traces.csv"
        code = main(
            [
                "extract",
                "--video", str(synth_dir / "video.vmrv"),
                "--plan", str(aligned_dir / "plan.json"),
                "--out", str(out),
                "--traces-csv", str(traces),
            ]
        )
        assert code == EXIT_OK
        header = traces.read_text().splitlines()[0]
        assert header == "roi,channel,t,value"

    def test_score_on_empty_dir_is_an_input_error(self, tmp_path, capsys):
        empty = tmp_path / "none"
        empty.mkdir()
        code = main(
            ["score", "--tensors", str(empty), "--out", str(tmp_path / "s.csv")]
        )
        assert code == EXIT_INPUT


class TestEval:
    @staticmethod
    def write_scores(path, rows):
        lines = ["video_id,segment,score,label"]
        lines += [f"{v},{s},{sc},{lb}" for v, s, sc, lb in rows]
        path.write_text("\n".join(lines) + "\n")

    def test_pooled_metrics_on_separable_scores(self, tmp_path, capsys):
        path = tmp_path / "scores.csv"
        self.write_scores(
            path,
            [
                ("vid_a", 0, 0.9, 1), ("vid_a", 3, 0.8, 1),
                ("vid_b", 0, 0.2, 0), ("vid_b", 3, 0.1, 0),
            ],
        )
        assert main(["eval", "--scores", str(path)]) == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["pooled"]["eer"] == 0.0
        assert report["pooled"]["auc"] == 1.0
        assert report["pooled"]["n_segments"] == 4

    def test_fold_report_written_to_file(self, tmp_path, capsys):
        # both genuine videos share a score range, so every held-out
        # video clears the threshold learned from the others
        path = tmp_path / "scores.csv"
        rows = []
        for v, base, label in (
            ("vid_a", 0.8, 1), ("vid_b", 0.1, 0),
            ("vid_c", 0.8, 1), ("vid_d", 0.2, 0),
        ):
            rows += [(v, k, base + 0.01 * k, label) for k in range(3)]
        self.write_scores(path, rows)
        out = tmp_path / "report.json"
        code = main(["eval", "--scores", str(path), "--folds", "--out", str(out)])
        assert code == EXIT_OK
        report = json.loads(out.read_text())
        assert report["folds"]["hter"]["mean"] == 0.0
        assert report["folds"]["hter"]["std"] == 0.0
        assert report["folds"]["hter"]["n_folds"] == 4
        # bona-fide folds only: vid_a and vid_c
        assert report["folds"]["bpcer_at_apcer_0.10"]["n_folds"] == 2
        assert report["folds"]["bpcer_at_apcer_0.01"]["mean"] == 0.0

    def test_single_class_scores_are_an_input_error(self, tmp_path, capsys):
        path = tmp_path / "scores.csv"
        self.write_scores(path, [("vid_a", 0, 0.9, 1), ("vid_a", 3, 0.8, 1)])
        assert main(["eval", "--scores", str(path)]) == EXIT_INPUT

    def test_missing_label_is_an_input_error(self, tmp_path, capsys):
        path = tmp_path / "scores.csv"
        path.write_text(
            "video_id,segment,score,label\nvid_a,0,0.9,\nvid_b,0,0.1,0\n"
        )
        assert main(["eval", "--scores", str(path)]) == EXIT_INPUT

    def test_wrong_header_is_an_input_error(self, tmp_path, capsys):
        path = tmp_path / "scores.csv"
        path.write_text("id,seg,val,y\nvid_a,0,0.9,1\n")
        assert main(["eval", "--scores", str(path)]) == EXIT_INPUT

    def test_folds_need_two_videos(self, tmp_path, capsys):
        path = tmp_path / "scores.csv"
        self.write_scores(path, [("vid_a", 0, 0.9, 1), ("vid_a", 3, 0.1, 0)])
        assert main(["eval", "--scores", str(path), "--folds"]) == EXIT_INPUT

    def test_missing_scores_file(self, tmp_path, capsys):
        assert main(["eval", "--scores", str(tmp_path / "nope.csv")]) == EXIT_INPUT


class TestWeights:
    def test_default_map_dumped(self, tmp_path, capsys):
        out = tmp_path / "w.json"
        assert main(["weights", "--default", "--out", str(out)]) == EXIT_OK
        wmap = VesselWeightMap.from_json(out.read_text())
        assert len(wmap.weights) == 24
        assert wmap.weights.mean() == pytest.approx(1.0)

    def test_synthetic_mask_map(self, tmp_path, capsys):
        out = tmp_path / "w.json"
        assert main(["weights", "--synthetic-mask", "--out", str(out)]) == EXIT_OK
        wmap = VesselWeightMap.from_json(out.read_text())
        assert len(wmap.weights) == 24

    def test_mask_route_requires_all_three_inputs(self, tmp_path, capsys):
        code = main(["weights", "--mask", "m.png", "--out", str(tmp_path / "w.json")])
        assert code == EXIT_INPUT

    def test_mask_route_end_to_end(self, tmp_path, capsys):
        mask, lm = synthetic_vessel_mask()
        mask_png = tmp_path / "mask.png"
        Image.fromarray(mask).save(mask_png)
        lm_file = tmp_path / "lm.json"
        lm_file.write_text(json.dumps({"points": lm.tolist()}))
        out = tmp_path / "w.json"
        code = main(
            [
                "weights",
                "--mask", str(mask_png),
                "--mask-landmarks", str(lm_file),
                "--face-landmarks", str(lm_file),
                "--face-box", "0", "0", "128", "128",
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        wmap = VesselWeightMap.from_json(out.read_text())
        assert wmap.weights.mean() == pytest.approx(1.0)
