"""CLI tests: subcommand workflows, determinism, error reporting."""

import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from polarndt import radiometry, stackio
from polarndt.cli import main
from polarndt.detection import ImageStack
from polarndt.radiometry import RadiometricScene, dolp_simplified


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestSimulate:
    def test_angle_sweep_row_count_and_peak(self, tmp_path):
        out = tmp_path / "sweep.csv"
        rc = main(["simulate", "--material", "aluminum", "--alpha", "0.3",
                   "--angles", "0:90:1", "--out", str(out)])
        assert rc == 0
        rows = read_csv(out)
        assert len(rows) == 91
        best = max(rows, key=lambda r: float(r["dolp"]))
        assert 70 <= float(best["psi_i_deg"]) <= 88
        assert out.with_suffix(".png").exists()

    def test_csv_values_match_library(self, tmp_path):
        out = tmp_path / "s.csv"
        main(["simulate", "--material", "cfrp", "--alpha", "0.5",
              "--angles", "10:80:10", "--out", str(out), "--no-figure"])
        for row in read_csv(out):
            expected = dolp_simplified(
                radiometry.get_material("cfrp"),
                RadiometricScene(0.5, math.radians(float(row["psi_i_deg"]))))
            assert float(row["dolp"]) == pytest.approx(expected, rel=1e-8)

    def test_multiple_alphas(self, tmp_path):
        out = tmp_path / "s.csv"
        main(["simulate", "--material", "rubber", "--alpha", "0.2,0.8",
              "--angles", "0:80:20", "--out", str(out), "--no-figure"])
        rows = read_csv(out)
        assert len(rows) == 10
        assert {r["alpha"] for r in rows} == {"0.2", "0.8"}

    def test_stdout_mode(self, capsys):
        rc = main(["simulate", "--material", "paper", "--alpha", "0.5",
                   "--angles", "0:30:10"])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "psi_i_deg,alpha,dolp"
        assert len(lines) == 5

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            main(["simulate", "--material", "nickel", "--alpha", "0.4",
                  "--angles", "0:89:1", "--out", str(out), "--no-figure"])
        assert a.read_bytes() == b.read_bytes()

    def test_mixture_model(self, tmp_path):
        out = tmp_path / "mix.csv"
        rc = main(["simulate", "--material", "cfrp", "--subsurface",
                   "aluminum", "--model", "mixture", "--alpha", "0.4",
                   "--angles", "20:70:10", "--out", str(out), "--no-figure"])
        assert rc == 0 and len(read_csv(out)) == 6

    def test_full_model(self, tmp_path):
        out = tmp_path / "full.csv"
        rc = main(["simulate", "--material", "cfrp", "--model", "full",
                   "--alpha", "0.5", "--angles", "30:60:15",
                   "--out", str(out), "--no-figure"])
        assert rc == 0
        rows = read_csv(out)
        assert len(rows) == 3
        assert all(0.0 <= float(r["dolp"]) <= 1.0 for r in rows)

    def test_mixture_requires_subsurface(self, capsys):
        rc = main(["simulate", "--material", "cfrp", "--model", "mixture",
                   "--alpha", "0.4"])
        assert rc == 2
        err = capsys.readouterr().err
        assert err.startswith("error: ") and len(err.strip().splitlines()) == 1


class TestSynthProcessDetectChain:
    @pytest.fixture()
    def bundle(self, tmp_path):
        out = tmp_path / "bundle"
        rc = main(["synth", "--out", str(out), "--seed", "5", "--frames",
                   "12", "--angle", "65", "--noise", "20"])
        assert rc == 0
        return out

    def test_synth_writes_bundle_and_truth(self, bundle):
        stack = stackio.read_stack(bundle)
        assert stack.n_frames == 12
        truth = stackio.read_truth_bundle(bundle / "truth")
        assert truth.dolp.shape[0] == 12
        assert set(truth.labels.values()) == {"cfrp", "aluminum", "rubber",
                                              "nickel", "paper"}

    def test_synth_requires_seed_without_scene(self, tmp_path, capsys):
        rc = main(["synth", "--out", str(tmp_path / "x")])
        assert rc == 2
        assert "seed" in capsys.readouterr().err

    def test_synth_determinism(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            main(["synth", "--out", str(out), "--seed", "9", "--frames", "4",
                  "--noise", "30"])
        for name in sorted(p.name for p in a.iterdir() if p.is_file()):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_scene_file_workflow(self, tmp_path):
        from polarndt.synthscene import SynthConfig, default_specimen
        scene = tmp_path / "scene.json"
        stackio.write_scene_file(default_specimen(32, 32),
                                 SynthConfig(seed=3, n_frames=5), scene)
        out = tmp_path / "bundle"
        rc = main(["synth", "--scene", str(scene), "--out", str(out),
                   "--frames", "7"])
        assert rc == 0
        assert stackio.read_stack(out).n_frames == 7

    def test_process_to_dolp(self, bundle, tmp_path):
        out = tmp_path / "dolp"
        rc = main(["process", "--input", str(bundle), "--out", str(out),
                   "--guided"])
        assert rc == 0
        stack = stackio.read_stack(out)
        assert isinstance(stack, ImageStack)
        assert stack.origin == "dolp"
        assert stack.n_frames == 12
        assert float(stack.frames.max()) <= 1.0
        assert stack.meta["observation_angle_deg"] == 65.0

    def test_process_to_intensity(self, bundle, tmp_path):
        out = tmp_path / "s0"
        main(["process", "--input", str(bundle), "--out", str(out),
              "--output-kind", "intensity"])
        assert stackio.read_stack(out).origin == "intensity"

    def test_process_threads_match_serial(self, bundle, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["process", "--input", str(bundle), "--out", str(a)])
        main(["process", "--input", str(bundle), "--out", str(b),
              "--threads", "4"])
        sa = stackio.read_stack(a)
        sb = stackio.read_stack(b)
        assert (sa.frames == sb.frames).all()

    def test_detect_report(self, bundle, tmp_path):
        dolp_dir = tmp_path / "dolp"
        main(["process", "--input", str(bundle), "--out", str(dolp_dir)])
        maps_dir = tmp_path / "maps"
        rc = main(["detect", "--input", str(dolp_dir), "--out", str(maps_dir),
                   "--method", "report", "--pcs", "2"])
        assert rc == 0
        maps = sorted(maps_dir.glob("*.map"))
        assert len(maps) == 6
        assert (maps_dir / "maps.png").exists()
        sidecars = [json.loads(p.with_suffix(".json").read_text())
                    for p in maps]
        assert {s["method"] for s in sidecars} == {"first_frame", "fft_phase",
                                                   "pca"}
        assert all(s["observation_angle_deg"] == 65.0 for s in sidecars)

    def test_detect_window_flag(self, bundle, tmp_path):
        dolp_dir = tmp_path / "dolp"
        main(["process", "--input", str(bundle), "--out", str(dolp_dir)])
        maps_dir = tmp_path / "maps"
        rc = main(["detect", "--input", str(dolp_dir), "--out", str(maps_dir),
                   "--method", "pca", "--window", "0:8", "--no-figure"])
        assert rc == 0
        sidecar = json.loads(
            next(iter(sorted(maps_dir.glob("*.json")))).read_text())
        assert sidecar["window"] == [0, 8]

    def test_detect_rejects_mosaic_input(self, bundle, tmp_path, capsys):
        rc = main(["detect", "--input", str(bundle),
                   "--out", str(tmp_path / "m")])
        assert rc == 2
        assert "error:" in capsys.readouterr().err


class TestDetectReferenceBins:
    def test_fft_sidecar_frequencies(self, tmp_path):
        rng = np.random.default_rng(0)
        stack = ImageStack(
            frames=rng.uniform(0, 1, size=(175, 8, 8)).astype(np.float32),
            frame_rate_hz=40.0, origin="dolp")
        bundle = tmp_path / "stack"
        stackio.write_stack(stack, bundle)
        maps_dir = tmp_path / "maps"
        rc = main(["detect", "--input", str(bundle), "--out", str(maps_dir),
                   "--method", "fft", "--bins", "1,11,21", "--no-figure"])
        assert rc == 0
        freqs = sorted(
            json.loads(p.read_text())["frequency_hz"]
            for p in maps_dir.glob("*.json"))
        assert freqs == pytest.approx([0.2285714285714286,
                                       2.5142857142857142, 4.8], abs=1e-9)


class TestFit:
    def test_fit_roundtrip_from_csv(self, tmp_path):
        samples = tmp_path / "samples.csv"
        with open(samples, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["psi_i_deg", "dolp"])
            for d in range(10, 80, 7):
                value = dolp_simplified(radiometry.get_material("cfrp"),
                                        RadiometricScene(0.6, math.radians(d)))
                writer.writerow([d, f"{value:.12g}"])
        report = tmp_path / "fit.json"
        rc = main(["fit", "--input", str(samples), "--material", "cfrp",
                   "--out", str(report)])
        assert rc == 0
        result = json.loads(report.read_text())
        assert result["alpha"] == pytest.approx(0.6, abs=1e-4)
        assert result["model"] == "simplified"

    def test_fit_stdout(self, tmp_path, capsys):
        samples = tmp_path / "samples.csv"
        with open(samples, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["psi_i_deg", "dolp"])
            for d in (20, 40, 60, 75):
                writer.writerow([d, 0.0])
        rc = main(["fit", "--input", str(samples), "--material", "cfrp"])
        assert rc == 0
        result = json.loads(capsys.readouterr().out)
        assert result["alpha"] == pytest.approx(1.0, abs=1e-3)

    def test_fit_bad_columns(self, tmp_path, capsys):
        samples = tmp_path / "samples.csv"
        samples.write_text("a,b\n1,2\n")
        rc = main(["fit", "--input", str(samples), "--material", "cfrp"])
        assert rc == 2
        assert "psi_i_deg" in capsys.readouterr().err


class TestMetrics:
    def test_metrics_report(self, tmp_path):
        out = tmp_path / "bundle"
        main(["synth", "--out", str(out), "--seed", "4", "--frames", "10",
              "--angle", "70", "--noise", "15"])
        dolp_dir = tmp_path / "dolp"
        main(["process", "--input", str(out), "--out", str(dolp_dir)])
        maps_dir = tmp_path / "maps"
        main(["detect", "--input", str(dolp_dir), "--out", str(maps_dir),
              "--method", "pca", "--no-figure"])
        map_files = sorted(str(p) for p in maps_dir.glob("*.map"))
        csv_out = tmp_path / "metrics.csv"
        rc = main(["metrics", "--maps", *map_files,
                   "--mask", str(out / "truth" / "mask.map"),
                   "--out", str(csv_out)])
        assert rc == 0
        rows = read_csv(csv_out)
        # 4 background pairs + 6 defect pairs per map, 2 maps
        assert len(rows) == 20
        assert {"map_id", "method", "angle_deg", "label_a", "label_b",
                "cnr", "sharpness"} <= set(rows[0])
        assert {r["label_a"] for r in rows} >= {"aluminum", "rubber"}
        assert csv_out.with_suffix(".png").exists()


class TestErrorReporting:
    def test_missing_input_single_line(self, tmp_path, capsys):
        rc = main(["process", "--input", str(tmp_path / "nope"),
                   "--out", str(tmp_path / "out")])
        assert rc == 2
        err = capsys.readouterr().err.strip()
        assert err.startswith("error: ")
        assert "\n" not in err

    def test_unknown_material(self, capsys):
        rc = main(["simulate", "--material", "vibranium", "--alpha", "0.5"])
        assert rc == 2
        assert "unknown material" in capsys.readouterr().err

    def test_unknown_flag_subprocess(self):
        proc = subprocess.run(
            [sys.executable, "-m", "polarndt.cli", "--definitely-not-a-flag"],
            capture_output=True, text=True)
        assert proc.returncode != 0
        assert "usage" in (proc.stderr + proc.stdout).lower()
