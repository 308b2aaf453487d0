import csv
import subprocess
import sys

import numpy as np
import pytest

from pelrec.cli import main
from pelrec.fields import DisplacementField
from pelrec.io import read_flow, read_pgm, write_flow, write_pgm

SMALL = ["--width", "24", "--height", "24", "--frames", "3", "--smoothness", "2", "--seed", "4"]


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh, strict=True))


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "seq"
    assert main(["synth", *SMALL, "--out-dir", str(out)]) == 0
    return out


class TestSynth:
    def test_counts(self, synth_dir):
        names = sorted(p.name for p in synth_dir.iterdir())
        assert names == ["frame_000.pgm", "frame_001.pgm", "frame_002.pgm", "manifest.txt", "truth_000.flo", "truth_001.flo"]
        np.testing.assert_allclose(read_flow(synth_dir / "truth_001.flo").vectors[..., 0], 1.0)

    def test_byte_identical(self, tmp_path, synth_dir):
        again = tmp_path / "again"
        assert main(["synth", *SMALL, "--out-dir", str(again)]) == 0
        assert tree(again) == tree(synth_dir)

    def test_manifest_regenerates(self, tmp_path):
        first = tmp_path / "first"
        args = [*SMALL, "--snr-db", "20", "--noise-seed", "5", "--velocity", "0.5,-0.25"]
        assert main(["synth", *args, "--out-dir", str(first)]) == 0
        second = tmp_path / "second"
        assert main(["synth", "--config", str(first / "manifest.txt"), "--out-dir", str(second)]) == 0
        assert tree(first) == tree(second)

    def test_manifest_with_regions(self, tmp_path):
        first = tmp_path / "first"
        regions = ["--region", "0,0,12,24:1,0", "--region", "12,0,24,24:-1,0.5"]
        assert main(["synth", *SMALL, *regions, "--out-dir", str(first)]) == 0
        second = tmp_path / "second"
        assert main(["synth", "--config", str(first / "manifest.txt"), "--out-dir", str(second)]) == 0
        assert tree(first) == tree(second)

    def test_invalid_spec(self, tmp_path):
        out = tmp_path / "bad"
        assert main(["synth", "--width", "1", "--out-dir", str(out)]) == 2
        assert not out.exists()

    def test_overlapping_regions(self, tmp_path):
        out = tmp_path / "bad"
        rc = main(["synth", "--region", "0,0,10,10:1,0", "--region", "5,5,15,15:0,1", "--out-dir", str(out)])
        assert rc == 2 and not out.exists()


class TestEstimate:
    def test_outputs(self, tmp_path, synth_dir, capsys):
        out = tmp_path / "est"
        frames = [str(synth_dir / f"frame_{k:03d}.pgm") for k in range(3)]
        truths = [str(synth_dir / f"truth_{k:03d}.flo") for k in range(2)]
        rc = main(["estimate", *frames, "--truth", *truths, "--epe-margin", "4", "--out-dir", str(out)])
        assert rc == 0
        assert sorted(p.name for p in out.iterdir()) == ["flow_000.flo", "flow_001.flo", "metrics.csv"]
        rows = read_rows(out / "metrics.csv")
        assert list(rows[0]) == ["frame_index", "imc_db", "mean_epe", "valid_fraction", "converged_fraction"]
        assert [r["frame_index"] for r in rows] == ["1", "2"]
        assert all(float(r["imc_db"]) >= 20 for r in rows)
        assert all(float(r["mean_epe"]) < 0.3 for r in rows)
        assert "sequence_imc_db=" in capsys.readouterr().out

    def test_identical_frames(self, tmp_path, rng):
        frame = rng.integers(0, 256, (10, 10)).astype(float)
        write_pgm(tmp_path / "a.pgm", frame)
        out = tmp_path / "o"
        for est in ("ols", "rls", "pcr1", "pcr2"):
            assert main(["estimate", str(tmp_path / "a.pgm"), str(tmp_path / "a.pgm"), "--estimator", est, "--out-dir", str(out)]) == 0
            assert float(read_rows(out / "metrics.csv")[0]["imc_db"]) == 0.0

    def test_missing_input(self, tmp_path, synth_dir):
        out = tmp_path / "o"
        rc = main(["estimate", str(synth_dir / "frame_000.pgm"), str(tmp_path / "nope.pgm"), "--out-dir", str(out)])
        assert rc == 2 and not out.exists()

    def test_single_frame(self, tmp_path, synth_dir):
        assert main(["estimate", str(synth_dir / "frame_000.pgm"), "--out-dir", str(tmp_path / "o")]) == 2

    def test_bad_option(self, tmp_path, synth_dir):
        f = str(synth_dir / "frame_000.pgm")
        assert main(["estimate", f, f, "--estimator", "lasso", "--out-dir", str(tmp_path / "o")]) == 2
        assert main(["estimate", f, f, "--max-iters", "0", "--out-dir", str(tmp_path / "o")]) == 2
        assert not (tmp_path / "o").exists()

    def test_corrupt_input_is_runtime_failure(self, tmp_path, synth_dir):
        bad = tmp_path / "bad.pgm"
        bad.write_bytes(b"P5\n24 24\n255\n\x00")
        out = tmp_path / "o"
        assert main(["estimate", str(synth_dir / "frame_000.pgm"), str(bad), "--out-dir", str(out)]) == 1
        assert not out.exists()

    def test_size_mismatch(self, tmp_path, synth_dir):
        write_pgm(tmp_path / "small.pgm", np.zeros((5, 5)))
        out = tmp_path / "o"
        assert main(["estimate", str(synth_dir / "frame_000.pgm"), str(tmp_path / "small.pgm"), "--out-dir", str(out)]) == 2
        assert not out.exists()

    def test_config_file_and_override(self, tmp_path, synth_dir):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("estimator=ols\nmask-half-width=1\nno-fallback=false\n")
        frames = [str(synth_dir / f"frame_{k:03d}.pgm") for k in range(2)]
        assert main(["estimate", *frames, "--config", str(cfg), "--out-dir", str(tmp_path / "a")]) == 0
        assert main(["estimate", *frames, "--mask-half-width", "1", "--estimator", "ols", "--out-dir", str(tmp_path / "b")]) == 0
        assert tree(tmp_path / "a") == tree(tmp_path / "b")
        # explicit flag wins over the file
        assert main(["estimate", *frames, "--config", str(cfg), "--estimator", "rls", "--out-dir", str(tmp_path / "c")]) == 0
        assert main(["estimate", *frames, "--mask-half-width", "1", "--estimator", "rls", "--out-dir", str(tmp_path / "d")]) == 0
        assert tree(tmp_path / "c") == tree(tmp_path / "d")

    def test_unknown_config_key(self, tmp_path, synth_dir):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("estimatr=ols\n")
        f = str(synth_dir / "frame_000.pgm")
        assert main(["estimate", f, f, "--config", str(cfg), "--out-dir", str(tmp_path / "o")]) == 2
        assert not (tmp_path / "o").exists()

    def test_reproducible(self, tmp_path, synth_dir):
        frames = [str(synth_dir / f"frame_{k:03d}.pgm") for k in range(3)]
        for name in ("a", "b"):
            assert main(["estimate", *frames, "--init", "causal", "--out-dir", str(tmp_path / name)]) == 0
        assert tree(tmp_path / "a") == tree(tmp_path / "b")


class TestCompare:
    def test_rows_and_equivalence(self, tmp_path):
        out = tmp_path / "cmp"
        assert main(["compare", *SMALL, "--frames", "4", "--out-dir", str(out)]) == 0
        rows = read_rows(out / "compare.csv")
        assert len(rows) == 4 * 3
        assert {r["estimator"] for r in rows} == {"ols", "rls", "pcr1", "pcr2"}
        ols = [float(r["imc_db"]) for r in rows if r["estimator"] == "ols"]
        pcr1 = [float(r["imc_db"]) for r in rows if r["estimator"] == "pcr1"]
        np.testing.assert_allclose(ols, pcr1, rtol=0, atol=1e-6)
        assert all(r["mean_epe"] != "" for r in rows)

    def test_noisy_ordering(self, tmp_path):
        out = tmp_path / "cmp"
        args = ["--width", "48", "--height", "48", "--smoothness", "4", "--seed", "100", "--noise-seed", "200",
                "--snr-db", "20", "--mask-half-width", "1", "--lambda", "100", "--xi", "100"]
        assert main(["compare", *args, "--out-dir", str(out)]) == 0
        rows = read_rows(out / "compare.csv")
        mean = {e: np.mean([float(r["imc_db"]) for r in rows if r["estimator"] == e]) for e in ("ols", "pcr2")}
        assert mean["pcr2"] >= mean["ols"]

    def test_supplied_frames(self, tmp_path, synth_dir):
        out = tmp_path / "cmp"
        frames = [str(synth_dir / f"frame_{k:03d}.pgm") for k in range(3)]
        assert main(["compare", *frames, "--out-dir", str(out)]) == 0
        rows = read_rows(out / "compare.csv")
        assert len(rows) == 8 and all(r["mean_epe"] == "" for r in rows)


class TestCluster:
    @pytest.fixture
    def four_flow(self, tmp_path):
        rng = np.random.default_rng(3)
        centres = np.array([[1.5, 0.0], [-1.5, 0.0], [0.0, 1.5], [0.0, -1.5]])
        labels = np.repeat(np.arange(4), 100).reshape(20, 20)
        vec = centres[labels] + 0.1 * rng.standard_normal((20, 20, 2))
        write_flow(tmp_path / "f.flo", DisplacementField(vec))
        (tmp_path / "labels.txt").write_text(" ".join(map(str, labels.ravel())))
        return tmp_path

    def test_four_classes(self, four_flow):
        out = four_flow / "c"
        rc = main(["cluster", "--flow", str(four_flow / "f.flo"), "--labels", str(four_flow / "labels.txt"), "--out-dir", str(out)])
        assert rc == 0
        assert len(read_rows(out / "scores.csv")) == 400
        ellipses = read_rows(out / "ellipses.csv")
        assert len(ellipses) == 4
        scores = read_rows(out / "scores.csv")
        for e in ellipses:
            pts = np.array([[float(r["pc1"]), float(r["pc2"])] for r in scores if r["label"] == e["label"]])
            w, v = np.linalg.eigh(np.cov(pts, rowvar=False))
            major = np.array([np.cos(float(e["orientation"])), np.sin(float(e["orientation"]))])
            assert abs(abs(major @ v[:, 1]) - 1.0) < 1e-9
        verdicts = read_rows(out / "verdicts.csv")
        assert len(verdicts) == 400
        assert np.mean([r["verdict"] == "single-class" for r in verdicts]) > 0.9

    def test_unlabelled(self, four_flow):
        out = four_flow / "c"
        assert main(["cluster", "--flow", str(four_flow / "f.flo"), "--out-dir", str(out)]) == 0
        assert len(read_rows(out / "ellipses.csv")) == 1
        assert {r["label"] for r in read_rows(out / "scores.csv")} == {"0"}

    def test_constant_flow_fails_at_runtime(self, tmp_path):
        write_flow(tmp_path / "c.flo", DisplacementField.constant((4, 4), (1.0, 0.0)))
        out = tmp_path / "o"
        assert main(["cluster", "--flow", str(tmp_path / "c.flo"), "--out-dir", str(out)]) == 1
        assert not out.exists()

    def test_missing_flow(self, tmp_path):
        assert main(["cluster", "--flow", str(tmp_path / "none.flo"), "--out-dir", str(tmp_path / "o")]) == 2


def test_no_subcommand():
    assert main([]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "pelrec", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("pelrec ")
