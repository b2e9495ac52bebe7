import subprocess
import sys

import numpy as np
import pytest

from polgnlm import io as gio
from polgnlm.cli import main, region_ids
from polgnlm.core import CovGrid, LabelGrid, OpticalGrid, SlcGrid, outer_products

SCENE = """\
height: 16
width: 20
seed: 3
optical_noise_sigma: 0.02
classes:
  - id: 0
    name: live
    sigma: {d11: 1.0, d22: 0.35, d33: 1.0, c13: 0.15}
    optical: [0.04, 0.07, 0.03, 0.35]
  - id: 1
    name: dead
    sigma: {d11: 1.1, d22: 0.2, d33: 1.0, c13: [-0.45, 0.0]}
    optical: [0.08, 0.09, 0.06, 0.22]
regions:
  - {rect: [0, 0, 16, 10], class: live}
  - {rect: [0, 10, 16, 10], class: dead}
"""

FAST = ["--search", "7", "--patch", "3"]


@pytest.fixture
def scene(tmp_path):
    cfg = tmp_path / "scene.yaml"
    cfg.write_text(SCENE)
    assert main(["simulate", str(cfg), str(tmp_path / "s")]) == 0
    return tmp_path / "s"


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


class TestSimulate:
    def test_writes_four_files_with_matching_headers(self, scene, capsys):
        assert sorted(files(scene)) == ["labels.psg", "optical.psg", "sigma.psg", "slc.psg"]
        kinds = {}
        for name in ("slc", "optical", "labels", "sigma"):
            kind, h, w, ch, _ = gio.read_header(name, (scene / f"{name}.psg").read_bytes())
            assert (h, w) == (16, 20)
            kinds[name] = (kind, ch)
        assert kinds == {"slc": (1, 6), "optical": (3, 4), "labels": (4, 1), "sigma": (2, 9)}

    def test_summary_line(self, tmp_path, capsys):
        cfg = tmp_path / "scene.yaml"
        cfg.write_text(SCENE)
        main(["simulate", str(cfg), str(tmp_path / "s")])
        out = capsys.readouterr().out.strip().splitlines()
        assert len(out) == 1 and "16x20" in out[0]

    def test_overlap_is_a_data_error(self, tmp_path, capsys):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text(SCENE.replace("[0, 10, 16, 10]", "[0, 8, 16, 12]"))
        assert main(["simulate", str(cfg), str(tmp_path / "s")]) == 2
        err = capsys.readouterr().err
        assert "overlapping" in err and "col=0" in err and "col=8" in err
        assert not (tmp_path / "s").exists()

    def test_seed_flag_is_byte_identical(self, tmp_path):
        cfg = tmp_path / "scene.yaml"
        cfg.write_text(SCENE)
        for d in ("a", "b", "c"):
            main(["simulate", str(cfg), str(tmp_path / d), "--seed", "7" if d != "c" else "8"])
        assert files(tmp_path / "a") == files(tmp_path / "b")
        assert files(tmp_path / "a")["slc.psg"] != files(tmp_path / "c")["slc.psg"]


class TestFilter:
    def test_none_on_single_pixel(self, tmp_path):
        gio.write_grid(tmp_path / "slc.psg", SlcGrid(np.array([[[1, 0, 0]]], dtype=complex)))
        assert main(["filter", "--method", "none", "--slc", str(tmp_path / "slc.psg"),
                     "--out", str(tmp_path / "c.psg")]) == 0
        cov = gio.read_grid(tmp_path / "c.psg")
        assert cov.data.tolist() == [[[1, 0, 0, 0, 0, 0, 0, 0, 0]]]

    def test_even_boxcar_window(self, scene, tmp_path, capsys):
        code = main(["filter", "--method", "boxcar", "--window", "4", "--slc", str(scene / "slc.psg"),
                     "--out", str(tmp_path / "c.psg")])
        assert code == 1
        assert "window must be odd" in capsys.readouterr().err

    def test_dimension_mismatch(self, scene, tmp_path, capsys):
        gio.write_grid(tmp_path / "o.psg", OpticalGrid(np.zeros((16, 19, 4))))
        code = main(["filter", "--slc", str(scene / "slc.psg"), "--optical", str(tmp_path / "o.psg"),
                     "--out", str(tmp_path / "c.psg"), *FAST])
        assert code == 2 and "dimension mismatch" in capsys.readouterr().err

    def test_pgnlm_deterministic_and_thread_invariant(self, scene, tmp_path):
        base = ["filter", "--slc", str(scene / "slc.psg"), "--optical", str(scene / "optical.psg"), *FAST]
        for name, threads in (("a", "1"), ("b", "1"), ("c", "3")):
            assert main(base + ["--threads", threads, "--out", str(tmp_path / f"{name}.psg")]) == 0
        a = (tmp_path / "a.psg").read_bytes()
        assert a == (tmp_path / "b.psg").read_bytes() == (tmp_path / "c.psg").read_bytes()

    def test_boxcar_and_none_deterministic(self, scene, tmp_path):
        for m in ("boxcar", "none"):
            outs = []
            for k in range(2):
                out = tmp_path / f"{m}{k}.psg"
                main(["filter", "--method", m, "--slc", str(scene / "slc.psg"), "--out", str(out)])
                outs.append(out.read_bytes())
            assert outs[0] == outs[1]

    def test_overflow_is_numerical_failure(self, tmp_path):
        gio.write_grid(tmp_path / "slc.psg", SlcGrid(np.full((2, 2, 3), 1e200 + 0j)))
        assert main(["filter", "--method", "none", "--slc", str(tmp_path / "slc.psg"),
                     "--out", str(tmp_path / "c.psg")]) == 3

    def test_missing_input_and_bad_flags(self, tmp_path):
        assert main(["filter", "--method", "none", "--slc", str(tmp_path / "nope.psg")]) == 2
        assert main(["filter", "--method", "median"]) == 1
        assert main([]) == 1
        assert main(["--help"]) == 0
        assert main(["filter", "--threads", "0"]) == 1


def write_eval_inputs(d, cov, labels):
    gio.write_grid(d / "cov.psg", CovGrid(cov))
    gio.write_grid(d / "labels.psg", LabelGrid(labels))
    return ["evaluate", "--cov", str(d / "cov.psg"), "--labels", str(d / "labels.psg")]


def report_mean(path):
    return float([r for r in gio.read_accuracy_csv(path) if r["fold"] == "mean"][0]["accuracy"])


class TestEvaluate:
    def test_separable_features(self, tmp_path):
        labels = np.zeros((12, 12), dtype=np.int64)
        labels[:, 6:] = 1
        cov = np.zeros((12, 12, 9))
        cov[..., 0] = 1.0 + 4.0 * labels
        cov[..., 1:3] = 1.0
        args = write_eval_inputs(tmp_path, cov, labels)
        assert main(args + ["--trees", "20", "--report", str(tmp_path / "r.csv")]) == 0
        rows = gio.read_accuracy_csv(tmp_path / "r.csv")
        assert list(rows[0]) == ["dataset_name", "filter_name", "fold", "accuracy"]
        assert [r["fold"] for r in rows] == ["0", "1", "2", "3", "4", "mean"]
        assert report_mean(tmp_path / "r.csv") == 1.0

    def test_shuffled_labels_near_chance(self, tmp_path):
        rng = np.random.default_rng(3)
        s = rng.standard_normal((40, 40, 3)) + 1j * rng.standard_normal((40, 40, 3))
        labels = rng.permutation(np.repeat([0, 1], 800)).reshape(40, 40)
        args = write_eval_inputs(tmp_path, outer_products(s), labels)
        main(args + ["--trees", "50", "--report", str(tmp_path / "r.csv")])
        assert abs(report_mean(tmp_path / "r.csv") - 0.5) <= 0.05

    def test_report_bytes_repeat_and_ignore_threads(self, scene, tmp_path):
        main(["filter", "--method", "boxcar", "--slc", str(scene / "slc.psg"), "--out", str(tmp_path / "c.psg")])
        base = ["evaluate", "--cov", str(tmp_path / "c.psg"), "--labels", str(scene / "labels.psg"),
                "--sigma", str(scene / "sigma.psg"), "--optical", str(scene / "optical.psg"),
                "--trees", "15", "--seed", "4"]
        for name, threads in (("a", "1"), ("b", "1"), ("c", "2")):
            assert main(base + ["--threads", threads, "--report", str(tmp_path / f"{name}.csv"),
                                "--metrics", str(tmp_path / f"m{name}.csv")]) == 0
        a = (tmp_path / "a.csv").read_bytes()
        assert a == (tmp_path / "b.csv").read_bytes() == (tmp_path / "c.csv").read_bytes()
        assert (tmp_path / "ma.csv").read_bytes() == (tmp_path / "mc.csv").read_bytes()
        filters = {r["filter_name"] for r in gio.read_accuracy_csv(tmp_path / "a.csv")}
        assert filters == {"c", "optical", "ndvi"}
        metrics = (tmp_path / "ma.csv").read_text()
        assert "mean_frobenius_error" in metrics and "enl_hh_class1" in metrics

    def test_fold_by_region(self, tmp_path):
        labels = np.repeat(np.repeat(np.array([[0, 1] * 5]), 4, axis=1), 8, axis=0)
        rng = np.random.default_rng(1)
        cov = np.abs(rng.standard_normal(labels.shape + (9,))) + labels[..., None]
        args = write_eval_inputs(tmp_path, cov, labels)
        assert main(args + ["--fold-by-region", "--trees", "10", "--report", str(tmp_path / "r.csv")]) == 0
        assert region_ids(labels).max() == 9

    def test_label_mismatch(self, tmp_path):
        args = write_eval_inputs(tmp_path, np.ones((4, 4, 9)), np.zeros((4, 5), dtype=np.int64))
        assert main(args) == 2

    def test_one_class_is_data_error(self, tmp_path):
        args = write_eval_inputs(tmp_path, np.ones((6, 6, 9)), np.zeros((6, 6), dtype=np.int64))
        assert main(args + ["--report", str(tmp_path / "r.csv")]) == 2


def test_preview(scene, tmp_path):
    main(["filter", "--method", "none", "--slc", str(scene / "slc.psg"), "--out", str(tmp_path / "c.psg")])
    assert main(["preview", "--cov", str(tmp_path / "c.psg"), "--out", str(tmp_path / "p.png")]) == 0
    assert main(["preview", "--cov", str(tmp_path / "c.psg"), "--channel", "d22",
                 "--out", str(tmp_path / "p.pgm")]) == 0
    assert (tmp_path / "p.pgm").read_bytes().startswith(b"P5\n20 16\n255\n")
    assert main(["preview", "--cov", str(tmp_path / "c.psg"), "--channel", "x", "--out", "y"]) == 1


def test_module_entry_point_exit_code(tmp_path):
    r = subprocess.run([sys.executable, "-m", "polgnlm", "filter", "--method", "none",
                        "--slc", str(tmp_path / "missing.psg")], capture_output=True, text=True)
    assert r.returncode == 2 and "missing.psg" in r.stderr
