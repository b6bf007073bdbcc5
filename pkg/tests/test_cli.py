import json
from pathlib import Path

import numpy as np
import pytest

from layoutjoint import read_pgm
from layoutjoint.cli import main


@pytest.fixture
def layout_file(tmp_path, two_instance_layout):
    from layoutjoint import save_layout

    path = tmp_path / "layout.json"
    save_layout(two_instance_layout, path)
    return path


def _files(directory: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(Path(directory).iterdir()) if p.is_file()}


class TestBuildMask:
    def test_default_512_writes_four_masks(self, tmp_path, layout_file, capsys):
        out = tmp_path / "masks"
        rc = main(["build-mask", "--layout", str(layout_file), "--resolution", "512", "--out", str(out)])
        assert rc == 0
        pgms = sorted(p.name for p in out.glob("*.pgm"))
        assert pgms == ["mask_step000.pgm", "mask_step003.pgm", "mask_step004.pgm", "mask_step019.pgm"]
        meta = json.loads((out / "mask_step000.json").read_text())
        assert meta["gamma"] == 4
        assert meta["phase"] == "strict"

    def test_no_detail_renderer_single_file(self, tmp_path, layout_file):
        out = tmp_path / "masks"
        rc = main(["build-mask", "--layout", str(layout_file), "--no-detail-renderer", "--out", str(out)])
        assert rc == 0
        assert len(list(out.glob("*.pgm"))) == 1
        image, _ = read_pgm(out / "mask_step000.pgm")
        meta = json.loads((out / "mask_step000.json").read_text())
        pads = set(meta["pad_positions"])
        nonpad = [i for i in range(meta["side"]) if i not in pads]
        assert (image[np.ix_(nonpad, nonpad)] == 255).all()

    def test_missing_layout_file_names_path(self, tmp_path, capsys):
        rc = main(["build-mask", "--layout", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
        assert rc == 3
        assert "nope.json" in capsys.readouterr().err

    def test_gamma_exceeding_steps_is_usage_error(self, tmp_path, layout_file):
        with pytest.raises(SystemExit) as exc:
            main(["build-mask", "--layout", str(layout_file), "--gamma", "30", "--steps", "20", "--out", str(tmp_path)])
        assert exc.value.code == 2


class TestRun:
    def test_writes_attribute_map_and_verdicts(self, tmp_path, layout_file):
        out = tmp_path / "run"
        rc = main(["run", "--layout", str(layout_file), "--seed", "5", "--out", str(out), "--dump-states"])
        assert rc == 0
        attrs = json.loads((out / "attributes.json").read_text())
        assert attrs["grid"] == [16, 16]
        assert attrs["readout_step"] == 2
        flat = [v for row in attrs["labels"] for v in row]
        assert "red" in flat and "blue" in flat
        verdicts = json.loads((out / "verdicts.json").read_text())
        assert all(v["success"] for v in verdicts["instances"])
        assert (out / "states.bin").exists()

    def test_refine_layout_flag(self, tmp_path):
        # 20%-padded boxes: refinement against the synthesized depth tightens
        # them back, so the padded layout still renders cleanly.
        from layoutjoint import make_layout, save_layout

        layout = make_layout(
            "a photo of a cup and a ball",
            [("a red cup", (0.06, 0.06, 0.46, 0.46), "red"), ("a blue ball", (0.54, 0.54, 0.94, 0.94), "blue")],
        )
        path = tmp_path / "padded.json"
        save_layout(layout, path)
        out = tmp_path / "run"
        rc = main(["run", "--layout", str(path), "--seed", "5", "--out", str(out), "--refine-layout"])
        assert rc == 0


class TestEvaluate:
    def test_deterministic_reports(self, tmp_path):
        args = ["evaluate", "--suite-count", "5", "--seed", "7", "--steps", "6", "--n-min", "2", "--n-max", "3"]
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(args + ["--out", str(out_a)]) == 0
        assert main(args + ["--out", str(out_b)]) == 0
        assert _files(out_a) == _files(out_b)

    def test_report_contents(self, tmp_path):
        out = tmp_path / "rep"
        rc = main(["evaluate", "--suite-count", "4", "--seed", "3", "--steps", "6", "--out", str(out)])
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert report["metrics"]["isr"] == 1.0
        assert report["metrics"]["sr"] <= report["metrics"]["isr"]
        csv_lines = (out / "report.csv").read_text().strip().split("\n")
        assert len(csv_lines) == 2
        assert csv_lines[0].startswith("config,ISR_L2")

    def test_empty_suite_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["evaluate", "--suite-count", "0", "--out", str(tmp_path)])
        assert exc.value.code == 2

    def test_layout_dir_mode(self, tmp_path, layout_file):
        layouts = tmp_path / "layouts"
        layouts.mkdir()
        (layouts / "case0.json").write_text(layout_file.read_text())
        out = tmp_path / "rep"
        rc = main(["evaluate", "--layouts", str(layouts), "--seed", "1", "--steps", "6", "--out", str(out)])
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert len(report["layouts"]) == 1

    def test_empty_layout_dir_usage_error(self, tmp_path):
        layouts = tmp_path / "layouts"
        layouts.mkdir()
        with pytest.raises(SystemExit) as exc:
            main(["evaluate", "--layouts", str(layouts), "--out", str(tmp_path)])
        assert exc.value.code == 2

    def test_ablation_grid_flag_produces_six_reports(self, tmp_path):
        out = tmp_path / "grid"
        rc = main([
            "evaluate", "--ablation-grid", "--suite-count", "3", "--seed", "2",
            "--steps", "6", "--n-min", "2", "--n-max", "2", "--out", str(out),
        ])
        assert rc == 0
        assert len(list(out.glob("report_*.json"))) == 6
        summary = (out / "summary.csv").read_text().strip().split("\n")
        assert len(summary) == 7  # header + six configs


class TestAblate:
    def test_matches_evaluate_grid(self, tmp_path):
        common = ["--suite-count", "3", "--seed", "2", "--steps", "6", "--n-min", "2", "--n-max", "2"]
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["ablate", *common, "--out", str(out_a)]) == 0
        assert main(["evaluate", "--ablation-grid", *common, "--out", str(out_b)]) == 0
        assert _files(out_a) == _files(out_b)


class TestDepth:
    def test_writes_16bit_pgm(self, tmp_path, layout_file):
        out = tmp_path / "depth"
        rc = main(["depth", "--layout", str(layout_file), "--height", "64", "--width", "48", "--out", str(out)])
        assert rc == 0
        image, maxval = read_pgm(out / "depth.pgm")
        assert maxval == 65535
        assert image.shape == (64, 48)

    def test_refine_writes_same_boxes_for_exact_layout(self, tmp_path, layout_file):
        out = tmp_path / "depth"
        rc = main(["depth", "--layout", str(layout_file), "--refine", "--out", str(out)])
        assert rc == 0
        refined = json.loads((out / "refined_layout.json").read_text())
        original = json.loads(layout_file.read_text())
        assert refined["instances"][0]["box"] == original["instances"][0]["box"]
        assert refined["instances"][1]["box"] == original["instances"][1]["box"]


class TestConfigAndSeed:
    def test_config_file_supplies_defaults_flags_win(self, tmp_path, layout_file):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"seed": 9, "grid_h": 8, "grid_w": 8}))
        out1 = tmp_path / "o1"
        main(["run", "--layout", str(layout_file), "--config", str(cfg), "--out", str(out1)])
        attrs = json.loads((out1 / "attributes.json").read_text())
        assert attrs["grid"] == [8, 8]  # from config
        out2 = tmp_path / "o2"
        main(["run", "--layout", str(layout_file), "--config", str(cfg), "--grid-h", "4", "--out", str(out2)])
        attrs2 = json.loads((out2 / "attributes.json").read_text())
        assert attrs2["grid"] == [4, 8]  # flag beats config

    def test_env_seed_fallback(self, tmp_path, layout_file, monkeypatch):
        out_env = tmp_path / "env"
        monkeypatch.setenv("LAYOUTJOINT_SEED", "5")
        main(["run", "--layout", str(layout_file), "--out", str(out_env)])
        out_flag = tmp_path / "flag"
        monkeypatch.delenv("LAYOUTJOINT_SEED")
        main(["run", "--layout", str(layout_file), "--seed", "5", "--out", str(out_flag)])
        assert _files(out_env) == _files(out_flag)

    def test_invalid_layout_data_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"global_text": "s", "instances": [{"text": "x", "box": [0.5, 0.5, 0.5, 0.9]}]}))
        rc = main(["run", "--layout", str(bad), "--out", str(tmp_path / "o")])
        assert rc == 3


class TestAttributeVocabulary:
    def test_custom_vocabulary_decodes_custom_words(self, tmp_path):
        from layoutjoint import make_layout, save_layout

        layout = make_layout(
            "a photo of two blocks",
            [("a shiny block", (0.05, 0.1, 0.45, 0.5), "shiny"), ("a matte block", (0.55, 0.5, 0.9, 0.9), "matte")],
        )
        path = tmp_path / "layout.json"
        save_layout(layout, path)
        out = tmp_path / "o"
        rc = main(["run", "--layout", str(path), "--attributes", "shiny,matte", "--out", str(out)])
        assert rc == 0
        attrs = json.loads((out / "attributes.json").read_text())
        flat = [v for row in attrs["labels"] for v in row]
        assert "shiny" in flat and "matte" in flat
        verdicts = json.loads((out / "verdicts.json").read_text())
        assert all(v["success"] for v in verdicts["instances"])

    def test_duplicate_words_usage_error(self, tmp_path, layout_file):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--layout", str(layout_file), "--attributes", "red,red", "--out", str(tmp_path)])
        assert exc.value.code == 2

    def test_suite_vocabulary_bounds_instances(self, tmp_path):
        # 2 attribute words cannot cover layouts of up to 6 instances
        with pytest.raises(SystemExit) as exc:
            main(["evaluate", "--suite-count", "3", "--attributes", "shiny,matte", "--out", str(tmp_path)])
        assert exc.value.code == 2
