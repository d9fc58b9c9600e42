import csv
import json
import subprocess
import sys

import pytest

from hsimaturity.cli import main
from hsimaturity.cube import (CalibrationRefs, calibrate, crop_bands, load_cube,
                              savgol_smooth)
from hsimaturity.maturity import load_model
from hsimaturity.pipeline import PipelineConfig, classify_regions, train_model
from hsimaturity.synthgen import make_scene

from conftest import as_scene, small_spec

SMALL = dict(columns=3, rows=2, radius=8, width=80, height=48, bands=60, n_immature=3)


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = root / "spec.json"
    spec.write_text(json.dumps(SMALL))
    for name, seed in (("train", 11), ("test", 12)):
        assert main(["synth", "--spec", str(spec), "--seed", str(seed),
                     "-o", str(root / name)]) == 0
    assert main(["train", str(root / "train"), "-o", str(root / "model.json")]) == 0
    return root


def test_synth_matches_library(workspace):
    scene = make_scene(small_spec(seed=11))
    assert load_cube(workspace / "train" / "scene.hdr") == scene.raw


def test_synth_is_deterministic(workspace, tmp_path):
    assert main(["synth", "--spec", str(workspace / "spec.json"), "--seed", "11",
                 "-o", str(tmp_path / "again")]) == 0
    for path in (workspace / "train").iterdir():
        assert (tmp_path / "again" / path.name).read_bytes() == path.read_bytes()


def test_synth_inventory(workspace):
    names = sorted(p.name for p in (workspace / "train").iterdir())
    assert names == sorted(["scene.hdr", "scene.raw", "white.hdr", "white.raw", "dark.hdr",
                            "dark.raw", "labels.csv", "truth_regions.pgm",
                            "truth_proportions.csv", "endmembers.csv", "spec.json"])


def test_synth_overlap_error(tmp_path, capsys):
    spec = tmp_path / "bad.json"
    spec.write_text(json.dumps({"radius": 40}))
    assert main(["synth", "--spec", str(spec), "-o", str(tmp_path / "x")]) == 2
    assert "error" in capsys.readouterr().err


def test_calibrate_matches_library(workspace, tmp_path):
    d = workspace / "train"
    out = tmp_path / "cal.hdr"
    assert main(["calibrate", str(d / "scene.hdr"), "--white", str(d / "white.hdr"),
                 "--dark", str(d / "dark.hdr"), "-o", str(out)]) == 0
    refs = CalibrationRefs(load_cube(d / "white.hdr").values, load_cube(d / "dark.hdr").values)
    expected = crop_bands(savgol_smooth(calibrate(load_cube(d / "scene.hdr"), refs)), 650, 1000)
    assert load_cube(out).values.tobytes() == expected.values.tobytes()
    side = json.loads(out.with_suffix(".json").read_text())
    assert side["savgol"] == {"order": 4, "width": 25}
    assert side["band_range_nm"] == [650.0, 1000.0]


def test_calibrated_cube_feeds_prediction(workspace, tmp_path):
    d = workspace / "test"
    cal = tmp_path / "cal.hdr"
    main(["calibrate", str(d / "scene.hdr"), "--white", str(d / "white.hdr"),
          "--dark", str(d / "dark.hdr"), "-o", str(cal)])
    assert main(["evaluate", str(cal), "--labels", str(d / "labels.csv"),
                 "--model", str(workspace / "model.json"), "-o", str(tmp_path / "ev")]) == 0
    rows = read_rows(tmp_path / "ev" / "metrics.csv")
    assert ["accuracy", "1.0"] in rows


def test_calibrate_missing_reference(workspace, tmp_path, capsys):
    d = workspace / "train"
    missing = tmp_path / "nowhere.hdr"
    code = main(["calibrate", str(d / "scene.hdr"), "--white", str(missing),
                 "--dark", str(d / "dark.hdr"), "-o", str(tmp_path / "c.hdr")])
    assert code == 2
    assert str(missing) in capsys.readouterr().err


def test_train_outputs(workspace):
    model = load_model(workspace / "model.json")
    report = workspace / "model_report"
    rows = read_rows(report / "training_metrics.csv")
    assert ["accuracy", "1.0"] in rows
    assert rows[1][0] == "actual_mature" and rows[2][0] == "actual_immature"
    assert (report / "training_confidence_histogram.csv").exists()
    assert len(read_rows(report / "threshold_errors.csv")) == 100
    assert 0 < model.tau < 1


def test_train_matches_library(workspace):
    scene = make_scene(small_spec(seed=11))
    result = train_model([as_scene(scene, "train")], PipelineConfig())
    assert load_model(workspace / "model.json") == result.model


def test_train_rerun_byte_identical(workspace, tmp_path):
    assert main(["train", str(workspace / "train"), "-o", str(tmp_path / "m.json")]) == 0
    assert (tmp_path / "m.json").read_bytes() == (workspace / "model.json").read_bytes()


def test_train_single_class(workspace, tmp_path, capsys):
    labels = tmp_path / "labels.csv"
    rows = read_rows(workspace / "train" / "labels.csv")
    labels.write_text("\n".join([",".join(rows[0])] +
                                [f"{r[0]},black,{r[2]}" for r in rows[1:]]) + "\n")
    code = main(["train", str(workspace / "train"), "--labels", str(labels),
                 "-o", str(tmp_path / "m.json")])
    assert code == 3
    assert "single-class" in capsys.readouterr().err


def test_train_without_labels(workspace, tmp_path):
    code = main(["train", str(workspace / "train" / "scene.hdr"), "-o", str(tmp_path / "m.json")])
    assert code == 2


def test_evaluate_held_out(workspace, tmp_path):
    out = tmp_path / "ev"
    assert main(["evaluate", str(workspace / "test"), "--model", str(workspace / "model.json"),
                 "-o", str(out)]) == 0
    assert ["accuracy", "1.0"] in read_rows(out / "metrics.csv")
    pr = read_rows(out / "precision_recall.csv")
    assert pr[0] == ["tau", "precision", "recall"] and len(pr) - 1 == 99
    for name in ("predictions.csv", "proportion_mature.pgm", "proportion_immature.pgm",
                 "proportions.csv", "regions.pgm", "accuracy_by_color.csv",
                 "accuracy_by_group.csv", "confidence_histogram.csv"):
        assert (out / name).exists(), name


def test_evaluate_matches_library(workspace, tmp_path):
    out = tmp_path / "ev"
    main(["evaluate", str(workspace / "test"), "--model", str(workspace / "model.json"),
          "-o", str(out)])
    ev = classify_regions([as_scene(make_scene(small_spec(seed=12)), "test")],
                          load_model(workspace / "model.json"))
    rows = read_rows(out / "predictions.csv")[1:]
    assert [(int(r[1]), float(r[3]), r[4]) for r in rows] == \
        [(p.region_id, p.confidence, p.predicted) for p in ev.predictions]


def test_evaluate_without_labels(workspace, tmp_path):
    d = workspace / "test"
    out = tmp_path / "ev"
    code = main(["evaluate", str(d / "scene.hdr"), "--white", str(d / "white.hdr"),
                 "--dark", str(d / "dark.hdr"), "--model", str(workspace / "model.json"),
                 "-o", str(out)])
    assert code == 0
    assert (out / "predictions.csv").exists()
    assert not (out / "metrics.csv").exists()
    assert not (out / "precision_recall.csv").exists()


def test_predict_ignores_labels(workspace, tmp_path):
    out = tmp_path / "pr"
    assert main(["predict", str(workspace / "test"), "--model", str(workspace / "model.json"),
                 "-o", str(out)]) == 0
    assert not (out / "metrics.csv").exists()
    rows = read_rows(out / "predictions.csv")
    assert len(rows) == 7 and all(r[6] == "" for r in rows[1:])


def test_axis_mismatch_exit_code(workspace, tmp_path):
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps(dict(SMALL, axis_lo_nm=400.0, axis_hi_nm=640.0)))
    main(["synth", "--spec", str(spec), "-o", str(tmp_path / "vis")])
    code = main(["predict", str(tmp_path / "vis"), "--model", str(workspace / "model.json"),
                 "-o", str(tmp_path / "out")])
    assert code == 4


def test_bad_flags_exit_code(workspace, tmp_path):
    assert main(["train", str(workspace / "train"), "--band-range", "900:700",
                 "-o", str(tmp_path / "m.json")]) == 2
    assert main(["predict", str(workspace / "test"), "--model", str(tmp_path / "none.json"),
                 "-o", str(tmp_path / "o")]) == 2


def test_config_file_precedence(workspace, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"tau": 0.999, "min_area": 10}))
    out = tmp_path / "a"
    main(["predict", str(workspace / "test"), "--model", str(workspace / "model.json"),
          "--config", str(cfg), "-o", str(out)])
    assert {r[4] for r in read_rows(out / "predictions.csv")[1:]} == {"mature"}
    out = tmp_path / "b"
    main(["predict", str(workspace / "test"), "--model", str(workspace / "model.json"),
          "--config", str(cfg), "--tau", "0.001", "-o", str(out)])
    assert {r[4] for r in read_rows(out / "predictions.csv")[1:]} == {"immature"}
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["predict", str(workspace / "test"), "--model", str(workspace / "model.json"),
                 "--config", str(cfg), "-o", str(out)]) == 2


def test_segment_outputs(workspace, tmp_path):
    out = tmp_path / "seg"
    assert main(["segment", str(workspace / "train"), "-o", str(out)]) == 0
    rows = read_rows(out / "regions.csv")
    assert len(rows) == 7
    assert (out / "rgb.ppm").read_bytes().startswith(b"P6")


def test_fresh_process_reproduces_predictions(workspace, tmp_path):
    out = tmp_path / "sub"
    subprocess.run([sys.executable, "-m", "hsimaturity.cli", "predict", str(workspace / "test"),
                    "--model", str(workspace / "model.json"), "-o", str(out)], check=True,
                   capture_output=True)
    inproc = tmp_path / "in"
    main(["predict", str(workspace / "test"), "--model", str(workspace / "model.json"),
          "-o", str(inproc)])
    assert (out / "predictions.csv").read_bytes() == (inproc / "predictions.csv").read_bytes()


def test_console_script_version():
    res = subprocess.run([sys.executable, "-m", "hsimaturity.cli", "--version"],
                         capture_output=True, text=True, check=True)
    assert res.stdout.strip() == "0.1.0"
