import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import recount_errors

from hsimaturity.cube import uniform_axis
from hsimaturity.maturity import (IMMATURE, MATURE, TAU_GRID, ConfusionCounts,
                                  ModelFormatError, ModelVersionError, RegionConfidence,
                                  SingleClassError, TrainedModel, aggregate_confidence,
                                  classify, compute_metrics, load_model, save_model,
                                  threshold_errors, train_threshold)
from hsimaturity.segmentation import RegionSet
from hsimaturity.unmixing import EndmemberSet, ProportionMap


def proportion_map(p_immature, label_map):
    p = np.asarray(p_immature, dtype=float)
    values = np.stack([1 - p, p], axis=-1)
    return ProportionMap((MATURE, IMMATURE), values, np.asarray(label_map) > 0)


def confidences(values):
    return [RegionConfidence(i + 1, c, 10) for i, c in enumerate(values)]


# --------------------------------------------------------------------------
# aggregation

def test_constant_region():
    lm = np.array([[1, 1], [0, 1]])
    rc = aggregate_confidence(proportion_map(np.full((2, 2), 0.8), lm), RegionSet.from_label_map(lm))
    assert rc[0].confidence == pytest.approx(0.8) and rc[0].pixel_count == 3


def test_symmetric_region():
    lm = np.ones((2, 2), dtype=int)
    rc = aggregate_confidence(proportion_map([[0, 1], [1, 0]], lm), RegionSet.from_label_map(lm))
    assert rc[0].confidence == 0.5


def test_planted_region_mean(rng):
    lm = np.ones((20, 20), dtype=int)
    p = np.clip(rng.normal(0.85, 0.05, size=(20, 20)), 0, 1)
    rc = aggregate_confidence(proportion_map(p, lm), RegionSet.from_label_map(lm))
    assert abs(rc[0].confidence - 0.85) < 0.01


def test_median_aggregation_and_errors():
    lm = np.ones((1, 3), dtype=int)
    props = proportion_map([[0.1, 0.2, 0.9]], lm)
    regions = RegionSet.from_label_map(lm)
    assert aggregate_confidence(props, regions, statistic="median")[0].confidence == 0.2
    with pytest.raises(ValueError):
        aggregate_confidence(props, regions, statistic="mode")
    with pytest.raises(KeyError):
        aggregate_confidence(props, regions, immature_class="green")
    props.valid[:] = False
    with pytest.raises(ValueError, match="no valid"):
        aggregate_confidence(props, regions)


# --------------------------------------------------------------------------
# threshold search

def test_tau_grid():
    assert TAU_GRID.size == 99
    assert TAU_GRID[0] == 0.01 and TAU_GRID[-1] == 0.99 and TAU_GRID[32] == 0.33


def test_separated_classes_smallest_tau():
    pairs = [(0.05, MATURE), (0.2, MATURE), (0.6, IMMATURE), (0.9, IMMATURE)]
    assert train_threshold(pairs) == 0.21


def test_unavoidable_overlap():
    assert train_threshold([(0.5, MATURE), (0.5, IMMATURE)]) == 0.01


def test_overlapping_beta_samples_match_recount(rng):
    conf = np.r_[rng.beta(2, 5, 100), rng.beta(5, 2, 100)]
    imm = np.r_[np.zeros(100, bool), np.ones(100, bool)]
    pairs = [(c, IMMATURE if i else MATURE) for c, i in zip(conf, imm)]
    tau = train_threshold(pairs)
    errors = [sum(recount_errors(conf, imm, t)) for t in (np.arange(1, 100) / 100).tolist()]
    assert sum(recount_errors(conf, imm, tau)) == min(errors)
    assert tau == (np.argmin(errors) + 1) / 100


def test_single_class_rejected():
    with pytest.raises(SingleClassError, match="single-class"):
        train_threshold([(0.2, MATURE), (0.4, MATURE)])
    with pytest.raises(ValueError):
        train_threshold([(0.2, "green"), (0.4, MATURE)])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.booleans()), min_size=1, max_size=40))
def test_threshold_errors_equal_recount(samples):
    conf = [c for c, _ in samples]
    imm = [i for _, i in samples]
    grid, fp, fn = threshold_errors([(c, IMMATURE if i else MATURE) for c, i in samples])
    for t, a, b in zip(grid.tolist(), fp.tolist(), fn.tolist()):
        assert (a, b) == recount_errors(conf, imm, t)


# --------------------------------------------------------------------------
# classification

def test_boundary_is_immature():
    assert classify(confidences([0.33]), 0.33) == [(1, IMMATURE)]
    assert classify(confidences([np.nextafter(0.33, 0)]), 0.33) == [(1, MATURE)]


def test_zero_confidence_is_mature():
    for tau in (0.01, 0.5, 0.99):
        assert classify(confidences([0.0]), tau) == [(1, MATURE)]


def test_reported_confidence_ranges():
    low = [0.060, 0.089, 0.121, 0.176]
    high = [0.711, 0.802, 0.909]
    out = dict(classify(confidences(low + high), 0.33))
    assert [out[i + 1] for i in range(len(low))] == [MATURE] * len(low)
    assert [out[len(low) + i + 1] for i in range(len(high))] == [IMMATURE] * len(high)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=20), st.floats(0.001, 0.999),
       st.floats(0.001, 0.999))
def test_classify_monotone_in_tau(values, t1, t2):
    lo, hi = sorted((t1, t2))
    a = dict(classify(confidences(values), lo))
    b = dict(classify(confidences(values), hi))
    assert all(not (a[k] == MATURE and b[k] == IMMATURE) for k in a)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=20), st.integers(0, 2**32 - 1))
def test_predictions_ignore_region_ids(values, seed):
    perm = np.random.default_rng(seed).permutation(len(values)) + 100
    a = [p for _, p in classify(confidences(values), 0.4)]
    relabelled = [RegionConfidence(int(r), c, 1) for r, c in zip(perm, values)]
    assert [p for _, p in classify(relabelled, 0.4)] == a


# --------------------------------------------------------------------------
# metrics

def test_perfect_classifier():
    m = compute_metrics(ConfusionCounts(tp=1, tn=1))
    assert all(v == 1.0 for v in m.as_dict().values())


def test_undefined_metrics():
    m = compute_metrics(ConfusionCounts(tn=5, fp=1))
    assert m.recall is None and m.balanced_accuracy is None
    assert m.precision == 0.0
    assert m.specificity == pytest.approx(5 / 6) and m.accuracy == pytest.approx(5 / 6)
    assert compute_metrics(ConfusionCounts(tn=5, fn=2)).precision is None
    assert compute_metrics(ConfusionCounts()).accuracy is None


def test_counts_from_labels():
    c = ConfusionCounts.from_labels([IMMATURE, IMMATURE, MATURE, MATURE],
                                    [IMMATURE, MATURE, IMMATURE, MATURE])
    assert (c.tp, c.fn, c.fp, c.tn) == (1, 1, 1, 1)
    assert c.matrix().tolist() == [[1, 1], [1, 1]]
    with pytest.raises(ValueError):
        ConfusionCounts(tp=-1)


@settings(max_examples=100, deadline=None)
@given(*[st.integers(0, 500)] * 4)
def test_balanced_accuracy_is_mean(tp, tn, fp, fn):
    m = compute_metrics(ConfusionCounts(tp, tn, fp, fn))
    if m.recall is not None and m.specificity is not None:
        assert m.balanced_accuracy == (m.recall + m.specificity) / 2


# --------------------------------------------------------------------------
# model files

def make_model(rng, tau=0.33):
    axis = uniform_axis(650, 1000, 17)
    em = EndmemberSet((MATURE, IMMATURE), axis, rng.random((2, 17)))
    return TrainedModel(em, (650, 1000), tau, provenance={"dataset_id": "abc", "date": None})


def test_model_round_trip_is_exact(tmp_path, rng):
    model = make_model(rng, tau=0.29)
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back == model
    assert np.array_equal(back.endmembers.spectra, model.endmembers.spectra)
    assert back.tau == 0.29 and back.band_range_nm == (650.0, 1000.0)


def test_unknown_version(tmp_path, rng):
    save_model(make_model(rng), tmp_path / "m.json")
    data = json.loads((tmp_path / "m.json").read_text())
    data["version"] = 99
    (tmp_path / "m.json").write_text(json.dumps(data))
    with pytest.raises(ModelVersionError):
        load_model(tmp_path / "m.json")


@pytest.mark.parametrize("text", ["not json", "[]", '{"format": "other"}',
                                  '{"format": "hsimaturity-model", "version": 1}'])
def test_malformed_model(tmp_path, text):
    (tmp_path / "m.json").write_text(text)
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "m.json")


def test_model_validation(rng):
    with pytest.raises(ValueError):
        make_model(rng, tau=1.0)
    em = EndmemberSet(("a", "b"), uniform_axis(650, 1000, 3), rng.random((2, 3)))
    with pytest.raises(ValueError):
        TrainedModel(em, (650, 1000), 0.5)
