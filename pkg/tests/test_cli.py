import subprocess
import sys

import numpy as np
import pytest

from rmisvm import cli
from rmisvm import objective as obj
from rmisvm.data import read_dataset, parse_ground_truth
from rmisvm.model import format_model, load_model


@pytest.fixture
def synth_files(tmp_path):
    data, gt = tmp_path / "s.mil", tmp_path / "s.gt"
    assert cli.main(["synth", "--out", str(data), "--ground-truth", str(gt),
                     "--n-pos", "12", "--n-neg", "12", "--seed", "1"]) == 0
    return data, gt


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestSynth:
    def test_files_reparse(self, synth_files):
        data_path, gt_path = synth_files
        data = read_dataset(data_path)
        assert data.n == 24 and data.dim == 100
        with open(gt_path) as f:
            parse_ground_truth(f, data)

    def test_byte_identical(self, tmp_path, capsys):
        blobs = []
        for name in ("a", "b"):
            d, g = tmp_path / f"{name}.mil", tmp_path / f"{name}.gt"
            run(["synth", "--out", d, "--ground-truth", g, "--seed", 9], capsys)
            blobs.append((d.read_bytes(), g.read_bytes()))
        assert blobs[0] == blobs[1]

    def test_invalid_config(self, tmp_path, capsys):
        code, _, err = run(["synth", "--out", tmp_path / "x", "--ground-truth", tmp_path / "y",
                            "--positive-fraction", "0"], capsys)
        assert code == 1 and "positive_fraction" in err


class TestTrain:
    def test_musk_flags(self, synth_files, tmp_path, capsys):
        out = tmp_path / "m.txt"
        code, stdout, err = run(["train", "--data", synth_files[0], "--lambda", 0.05, "--beta", 1.5,
                                 "--m0", 0.5, "--out", out], capsys)
        assert code == 0
        assert load_model(out).shape == (100,)
        assert "objective:" in stdout and "bag loss" in stdout
        assert "wall-clock" in err

    def test_corel_preset_with_normalize(self, synth_files, tmp_path, capsys):
        code, _, _ = run(["train", "--data", synth_files[0], "--preset", "corel", "--normalize",
                          "--out", tmp_path / "m.txt"], capsys)
        assert code == 0

    def test_misvm_trainer(self, synth_files, tmp_path, capsys):
        code, stdout, _ = run(["train", "--data", synth_files[0], "--trainer", "misvm",
                               "--inner-iters", 500, "--out", tmp_path / "m.txt"], capsys)
        assert code == 0 and "trainer: misvm" in stdout

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(["train", "--data", tmp_path / "nope.mil", "--out", tmp_path / "m"], capsys)
        assert code == 2 and "nope.mil" in err

    def test_malformed_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.mil"
        bad.write_text("1 b 0:1\n1 b zz\n")
        code, _, err = run(["train", "--data", bad, "--out", tmp_path / "m"], capsys)
        assert code == 2 and "line 2" in err

    @pytest.mark.parametrize("flags", [["--lambda", "-1"], ["--p0", "1.5"], ["--T", "0"], ["--bogus"]])
    def test_usage_errors(self, synth_files, tmp_path, capsys, flags):
        code, _, _ = run(["train", "--data", synth_files[0], "--out", tmp_path / "m", *flags], capsys)
        assert code == 1

    def test_nan_is_numerical_failure(self, synth_files, tmp_path, capsys, monkeypatch):
        class Bad:
            final_weights = np.full(100, np.nan)
        monkeypatch.setattr(cli, "train", lambda data, hp: Bad())
        code, _, err = run(["train", "--data", synth_files[0], "--out", tmp_path / "m"], capsys)
        assert code == 3 and "non-finite" in err


class TestPredict:
    def test_zero_model_closed_form(self, tmp_path, capsys):
        data = tmp_path / "d.mil"
        data.write_text("1 a 0:1\n1 a 1:2\n0 b 2:3\n0 b 0:-1\n0 b 1:1\n")
        model = tmp_path / "m.txt"
        model.write_text(format_model(np.zeros(3)))
        code, out, _ = run(["predict", "--model", model, "--data", data, "--instances"], capsys)
        assert code == 0
        rows = [line.split() for line in out.splitlines()]
        bag_rows = [r for r in rows if len(r) == 5]
        inst_rows = [r for r in rows if len(r) == 4]
        assert [r[0] for r in bag_rows] == ["a", "b"]
        assert float(bag_rows[0][1]) == pytest.approx(1 - 2**-2, abs=1e-12)
        assert float(bag_rows[1][1]) == pytest.approx(1 - 2**-3, abs=1e-12)
        assert all(r[2] == "1" for r in bag_rows)
        assert len(inst_rows) == 5
        assert all(float(r[2]) == 0.5 and r[3] == "1" for r in inst_rows)

    def test_bag_lines_only_by_default(self, synth_files, tmp_path, capsys):
        model = tmp_path / "m.txt"
        run(["train", "--data", synth_files[0], "--out", model, "--T", 200], capsys)
        code, out, _ = run(["predict", "--model", model, "--data", synth_files[0]], capsys)
        assert code == 0
        assert all(len(line.split()) == 5 for line in out.splitlines())
        assert len(out.splitlines()) == 24

    def test_dimension_mismatch(self, synth_files, tmp_path, capsys):
        model = tmp_path / "m.txt"
        model.write_text(format_model(np.zeros(5)))
        code, _, err = run(["predict", "--model", model, "--data", synth_files[0]], capsys)
        assert code == 2 and "dimension" in err

    def test_bad_model_file(self, synth_files, tmp_path, capsys):
        model = tmp_path / "m.txt"
        model.write_text("garbage\n")
        code, _, _ = run(["predict", "--model", model, "--data", synth_files[0]], capsys)
        assert code == 2


class TestCv:
    def test_report_and_kv(self, synth_files, tmp_path, capsys):
        kv = tmp_path / "cv.txt"
        code, out, _ = run(["cv", "--data", synth_files[0], "--folds", 3, "--repeats", 2,
                            "--T", 200, "--report", kv], capsys)
        assert code == 0
        assert "2 x 3-fold" in out and "+/-" in out
        fields = dict(line.split("=", 1) for line in kv.read_text().splitlines())
        assert 0.0 <= float(fields["mean"]) <= 1.0
        assert fields["folds"] == "3"

    def test_misvm_dispatch(self, synth_files, capsys):
        code, out, _ = run(["cv", "--data", synth_files[0], "--folds", 3, "--repeats", 1,
                            "--trainer", "misvm", "--inner-iters", 300], capsys)
        assert code == 0 and "trainer: misvm" in out

    def test_seed_changes_splits(self, synth_files, capsys):
        outs = {run(["cv", "--data", synth_files[0], "--folds", 3, "--repeats", 2, "--T", 100,
                     "--seed", s], capsys)[1] for s in range(4)}
        assert len(outs) > 1

    def test_too_many_folds(self, synth_files, capsys):
        code, _, err = run(["cv", "--data", synth_files[0], "--folds", 20], capsys)
        assert code == 2 and "fewer bags than folds" in err

    def test_bad_folds_flag(self, synth_files, capsys):
        assert run(["cv", "--data", synth_files[0], "--folds", 1], capsys)[0] == 1


class TestGradcheck:
    def test_default_passes(self, capsys):
        code, out, _ = run(["gradcheck"], capsys)
        assert code == 0 and "PASS" in out

    def test_flags_respected(self, capsys):
        code, out, _ = run(["gradcheck", "--eps", "1e-6", "--trials", "7"], capsys)
        assert code == 0
        assert "trials: 7" in out and "eps: 1e-06" in out

    def test_sign_flip_fails(self, capsys, monkeypatch):
        real = obj.bag_loss_grad
        monkeypatch.setattr(obj, "bag_loss_grad", lambda w, b, Y=None: -real(w, b, Y))
        code, out, err = run(["gradcheck", "--trials", "20"], capsys)
        assert code == 3 and "FAIL" in out
        assert "gradient=bag_loss" in err


class TestCurve:
    def test_curve_output(self, synth_files, tmp_path, capsys):
        model = tmp_path / "m.txt"
        run(["train", "--data", synth_files[0], "--out", model], capsys)
        code, out, _ = run(["curve", "--model", model, "--data", synth_files[0],
                            "--ground-truth", synth_files[1], "--k", "1,3,20"], capsys)
        assert code == 0
        rows = [line.split("\t") for line in out.splitlines()[1:]]
        assert [r[0] for r in rows] == ["1", "3", "20"]
        assert float(rows[-1][1]) == 1.0
        out_file = tmp_path / "curve.tsv"
        run(["curve", "--model", model, "--data", synth_files[0], "--ground-truth", synth_files[1],
             "--out", out_file], capsys)
        assert out_file.read_text().startswith("1\t")

    def test_bad_k(self, synth_files, tmp_path, capsys):
        code, _, _ = run(["curve", "--model", tmp_path / "m", "--data", synth_files[0],
                          "--ground-truth", synth_files[1], "--k", "0,a"], capsys)
        assert code == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "rmisvm", "gradcheck", "--trials", "5"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "PASS" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "rmisvm"], capture_output=True, text=True)
    assert proc.returncode == 1
