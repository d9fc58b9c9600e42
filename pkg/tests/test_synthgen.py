import json

import numpy as np
import pytest

from hsimaturity.cube import HyperCube, calibrate, load_cube, savgol_smooth_array, uniform_axis
from hsimaturity.maturity import IMMATURE, MATURE, TrainedModel
from hsimaturity.pipeline import PipelineConfig, classify_regions, segment
from hsimaturity.synthgen import (LayoutError, SceneSpec, SeparationError, make_endmembers,
                                  make_scene, scene_spec_from_dict, write_scene)
from hsimaturity.unmixing import EndmemberSet, unmix_regions

from conftest import as_scene, small_spec

AXIS = uniform_axis(650, 1000, 350)


def test_sigmoid_pair_gap():
    em = make_endmembers(AXIS, gap=0.1)
    diff = np.abs(em["immature"].values - em["mature"].values)
    assert diff.min() >= 0.1
    assert np.all((em.spectra >= 0) & (em.spectra <= 1))


def test_default_pair_not_collinear():
    e1, e2 = make_endmembers(AXIS).spectra
    cos = e1 @ e2 / (np.linalg.norm(e1) * np.linalg.norm(e2))
    assert np.arccos(min(cos, 1.0)) > 1e-3


def test_infeasible_gap():
    with pytest.raises(SeparationError):
        make_endmembers(AXIS, gap=0.9)


def test_from_file(tmp_path):
    lam = AXIS.nm
    rows = ["wavelength,mature,immature"]
    rows += [f"{w!r},{0.2 + 0.0001 * k!r},{0.5 + 0.0001 * k!r}" for k, w in enumerate(lam.tolist())]
    (tmp_path / "e.csv").write_text("\n".join(rows) + "\n")
    em = make_endmembers(AXIS, "file", gap=0.1, path=tmp_path / "e.csv")
    assert np.allclose(em["immature"].values - em["mature"].values, 0.3)


def test_from_file_identical_spectra(tmp_path):
    rows = ["wavelength,mature,immature"] + [f"{w!r},0.3,0.3" for w in AXIS.nm.tolist()]
    (tmp_path / "e.csv").write_text("\n".join(rows) + "\n")
    with pytest.raises(SeparationError):
        make_endmembers(AXIS, "file", gap=0.1, path=tmp_path / "e.csv")


@pytest.mark.parametrize("overrides", [dict(radius=30), dict(columns=8, radius=16),
                                       dict(width=40)])
def test_layout_errors(overrides):
    with pytest.raises(LayoutError):
        make_scene(SceneSpec(**overrides))


def test_spec_validation():
    with pytest.raises(ValueError):
        SceneSpec(n_immature=16).validate()
    with pytest.raises(ValueError):
        SceneSpec(classes=["mature"] * 3).validate()
    with pytest.raises(ValueError):
        scene_spec_from_dict({"colour": 1})


def test_default_scene_layout():
    scene = make_scene(SceneSpec(seed=7))
    assert scene.raw.values.shape == (160, 256, 350)
    assert scene.regions.region_count == 15
    assert sum(c == IMMATURE for c in scene.classes.values()) == 8
    assert sum(c == MATURE for c in scene.classes.values()) == 7
    for rid, label in scene.labels.items():
        assert label in (("yellow", "orange") if scene.classes[rid] == IMMATURE
                         else ("black", "brown"))


def test_same_seed_bit_identical():
    a = make_scene(small_spec(seed=5))
    b = make_scene(small_spec(seed=5))
    c = make_scene(small_spec(seed=6))
    assert a.raw.values.tobytes() == b.raw.values.tobytes()
    assert a.refs.white.tobytes() == b.refs.white.tobytes()
    assert a.labels == b.labels and np.array_equal(a.proportions, b.proportions)
    assert a.raw.values.tobytes() != c.raw.values.tobytes()


def test_calibration_recovers_reflectance():
    scene = make_scene(small_spec(seed=2))
    out = calibrate(scene.raw, scene.refs).values
    assert np.max(np.abs(out - np.maximum(scene.reflectance, 0))) < 1e-12


def test_noiseless_inversion_with_true_endmembers():
    scene = make_scene(small_spec(seed=8, noise_sigma=0.0, proportion_model="gradient"))
    cube = calibrate(scene.raw, scene.refs)
    props = unmix_regions(cube, scene.regions, scene.endmembers)
    fg = scene.regions.label_map > 0
    assert np.max(np.abs(props.values[fg] - scene.proportions[fg])) < 1e-6


def test_noiseless_inversion_through_pipeline():
    # smoothing is linear, so smoothed endmembers explain smoothed mixtures exactly
    scene = make_scene(small_spec(seed=8, noise_sigma=0.0, proportion_model="gradient"))
    em = scene.endmembers
    smoothed = EndmemberSet(em.class_names, em.axis, savgol_smooth_array(em.spectra))
    model = TrainedModel(smoothed, (650, 1000), 0.5)
    ev = classify_regions([as_scene(scene)], model)
    res = ev.scenes[0]
    assert np.array_equal(res.regions.label_map, scene.regions.label_map)
    fg = scene.regions.label_map > 0
    assert np.max(np.abs(res.proportions.values[fg] - scene.proportions[fg])) < 1e-6


def test_segmentation_recovers_truth_without_noise():
    scene = make_scene(SceneSpec(seed=3, noise_sigma=0.0))
    cube = calibrate(scene.raw, scene.refs)
    regions, _, _ = segment(cube, PipelineConfig(rgb_nm=(700.0, 800.0, 900.0)))
    assert regions.region_count == scene.regions.region_count
    agree = np.mean((regions.label_map > 0) == (scene.regions.label_map > 0))
    assert agree >= 0.99


def test_write_scene_inventory(tmp_path):
    scene = make_scene(small_spec(seed=1))
    paths = write_scene(scene, tmp_path)
    names = {p.name for p in paths}
    assert names == {"scene.hdr", "scene.raw", "white.hdr", "white.raw", "dark.hdr",
                     "dark.raw", "labels.csv", "truth_regions.pgm", "truth_proportions.csv",
                     "endmembers.csv", "spec.json"}
    assert load_cube(tmp_path / "scene.hdr") == scene.raw
    header = (tmp_path / "labels.csv").read_text().splitlines()[0]
    assert header == "region_id,color_label,cultivar"
    assert json.loads((tmp_path / "spec.json").read_text())["seed"] == 1
    assert HyperCube(scene.refs.white, scene.raw.axis) == load_cube(tmp_path / "white.hdr")
