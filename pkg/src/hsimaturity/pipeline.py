"""Training and testing pipelines over whole scenes.

Preprocessing runs calibrate (when references are supplied), then smoothing,
then band cropping. Segmentation sees the smoothed cube before cropping so the
colour preview can use visible bands when the cube has them.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .cube import (BandRangeError, CalibrationRefs, HyperCube, calibrate, crop_bands,
                   savgol_smooth)
from .maturity import (IMMATURE, MATURE, ConfusionCounts, Metrics,
                       SingleClassError, TrainedModel,
                       aggregate_confidence, classify, compute_metrics, threshold_errors,
                       train_threshold)
from .segmentation import (KMeansResult, NoRegionsError, RegionSet, RgbImage,
                           extract_rgb, kmeans2, roi_mask, segment_regions)
from .unmixing import (DEFAULT_GROUPING, AxisMismatchError, LabeledRegionSpectra,
                       ProportionMap, estimate_endmembers, unmix_regions)

__all__ = [
    "PipelineConfig", "Scene", "SceneResult", "RegionPrediction", "Evaluation",
    "TrainingResult", "LabelError", "preprocess", "segment", "train_model",
    "classify_regions", "histogram_counts", "HIST_EDGES",
]

HIST_EDGES = np.arange(21) / 20.0


class LabelError(ValueError):
    """Labels do not line up with the segmented regions."""


@dataclass(frozen=True)
class PipelineConfig:
    band_range: tuple = (650.0, 1000.0)
    sg_order: int = 4
    sg_width: int = 25
    seed: int = 0
    foreground: str = "minority"
    min_region_area: int = 50
    connectivity: int = 8
    grouping: Mapping = field(default_factory=lambda: dict(DEFAULT_GROUPING))
    rgb_nm: tuple = (640.0, 550.0, 460.0)
    roi: tuple | None = None
    aggregate: str = "mean"
    kmeans_max_iter: int = 100
    tau: float | None = None            # fixed threshold instead of searching / model value


@dataclass(eq=False)
class Scene:
    """One tray image plus optional references and per-region labels.

    ``labels`` maps region id to a visual label (mesocarp colour or class
    name); ``groups`` maps region id to a breakdown key such as cultivar.
    Set ``smoothed`` when the cube was already smoothed upstream.
    """

    name: str
    cube: HyperCube
    refs: CalibrationRefs | None = None
    labels: dict | None = None
    groups: dict | None = None
    smoothed: bool = False


@dataclass(eq=False)
class SceneResult:
    name: str
    regions: RegionSet
    rgb: RgbImage
    kmeans: KMeansResult
    analysis_cube: HyperCube
    proportions: ProportionMap | None = None
    confidences: list = field(default_factory=list)


@dataclass(frozen=True)
class RegionPrediction:
    scene: str
    region_id: int
    confidence: float
    pixel_count: int
    predicted: str
    label: str | None = None
    actual: str | None = None
    group: str | None = None


@dataclass(eq=False)
class Evaluation:
    tau: float
    predictions: list
    scenes: list
    counts: ConfusionCounts | None = None
    metrics: Metrics | None = None
    by_group: dict = field(default_factory=dict)      # group -> (correct, total)
    by_label: dict = field(default_factory=dict)      # colour -> (correct, total)
    pr_curve: list = field(default_factory=list)      # (tau, precision, recall)
    histograms: dict = field(default_factory=dict)    # colour -> counts per bin

    @property
    def labelled(self) -> bool:
        return self.counts is not None


@dataclass(eq=False)
class TrainingResult:
    model: TrainedModel
    report: Evaluation
    threshold_curve: tuple = ()         # (tau grid, fp, fn)


def preprocess(scene: Scene, config: PipelineConfig, band_range=None,
               sg_order=None, sg_width=None):
    """Return ``(smoothed full-range cube, cropped analysis cube)``."""
    band_range = config.band_range if band_range is None else band_range
    sg_order = config.sg_order if sg_order is None else sg_order
    sg_width = config.sg_width if sg_width is None else sg_width
    cube = scene.cube
    if scene.refs is not None:
        cube = calibrate(cube, scene.refs)
    elif cube.values.dtype.kind != "f":
        cube = cube.with_values(cube.values.astype(np.float64))
    if not scene.smoothed:
        cube = savgol_smooth(cube, sg_order, sg_width)
    return cube, crop_bands(cube, band_range[0], band_range[1])


def segment(cube: HyperCube, config: PipelineConfig, name: str = ""):
    rgb = extract_rgb(cube, *config.rgb_nm)
    mask = None if config.roi is None else roi_mask(cube.height, cube.width, config.roi)
    km = kmeans2(rgb, seed=config.seed, max_iter=config.kmeans_max_iter, mask=mask)
    regions = segment_regions(rgb, km, config.min_region_area, config.connectivity,
                              config.foreground, config.roi)
    if regions.is_empty:
        why = " (image has a single colour)" if km.degenerate else ""
        raise NoRegionsError(f"no regions found in scene {name or '?'}{why}")
    return regions, rgb, km


def _checked_labels(scene: Scene, regions: RegionSet) -> dict:
    labels = {int(k): str(v) for k, v in (scene.labels or {}).items()}
    extra = sorted(set(labels) - set(regions.region_ids))
    if extra:
        raise LabelError(
            f"scene {scene.name}: labels reference regions {extra} but segmentation "
            f"found {regions.region_count}")
    return labels


def _class_of(label, grouping):
    try:
        return grouping[label]
    except KeyError:
        raise LabelError(f"label {label!r} is not in the grouping map") from None


def histogram_counts(values) -> list:
    counts, _ = np.histogram(np.asarray(values, dtype=float), bins=HIST_EDGES)
    return counts.tolist()


def _evaluate(results: Sequence[SceneResult], scenes: Sequence[Scene], tau: float,
              grouping) -> Evaluation:
    preds = []
    any_labels = False
    for res, scene in zip(results, scenes):
        labels = _checked_labels(scene, res.regions)
        groups = {int(k): str(v) for k, v in (scene.groups or {}).items()}
        decided = dict(classify(res.confidences, tau))
        for rc in res.confidences:
            label = labels.get(rc.region_id)
            actual = _class_of(label, grouping) if label is not None else None
            any_labels |= label is not None
            preds.append(RegionPrediction(scene.name, rc.region_id, rc.confidence,
                                          rc.pixel_count, decided[rc.region_id], label,
                                          actual, groups.get(rc.region_id)))
    ev = Evaluation(tau, preds, list(results))
    scored = [p for p in preds if p.actual is not None]
    if not any_labels or not scored:
        return ev
    ev.counts = ConfusionCounts.from_labels([p.actual for p in scored],
                                            [p.predicted for p in scored])
    ev.metrics = compute_metrics(ev.counts)
    for key, attr in (("by_group", "group"), ("by_label", "label")):
        table = {}
        for p in scored:
            k = getattr(p, attr)
            if k is None:
                continue
            ok, total = table.get(k, (0, 0))
            table[k] = (ok + (p.predicted == p.actual), total + 1)
        setattr(ev, key, dict(sorted(table.items())))
    pairs = [(p.confidence, p.actual) for p in scored]
    if {a for _, a in pairs} <= {MATURE, IMMATURE}:
        grid, fp, fn = threshold_errors(pairs)
        n_imm = sum(a == IMMATURE for _, a in pairs)
        for t, f_p, f_n in zip(grid.tolist(), fp.tolist(), fn.tolist()):
            tp = n_imm - f_n
            m = compute_metrics(ConfusionCounts(tp=tp, fp=f_p, fn=f_n))
            ev.pr_curve.append((t, m.precision, m.recall))
    series = {}
    for p in scored:
        series.setdefault(p.label, []).append(p.confidence)
    ev.histograms = {k: histogram_counts(v) for k, v in sorted(series.items())}
    return ev


def _run_scene(scene, config, endmembers, band_range, sg_order, sg_width, immature_class):
    full, analysis = preprocess(scene, config, band_range, sg_order, sg_width)
    regions, rgb, km = segment(full, config, scene.name)
    res = SceneResult(scene.name, regions, rgb, km, analysis)
    if endmembers is not None:
        res.proportions = unmix_regions(analysis, regions, endmembers)
        res.confidences = aggregate_confidence(res.proportions, regions, immature_class,
                                               config.aggregate, scene.name)
    return res


def dataset_id(scenes: Sequence[Scene]) -> str:
    digest = hashlib.sha256()
    for scene in scenes:
        digest.update(scene.name.encode())
        digest.update(np.ascontiguousarray(scene.cube.values).tobytes())
        for k in sorted(scene.labels or {}):
            digest.update(f"{k}={scene.labels[k]};".encode())
    return digest.hexdigest()[:16]


def train_model(scenes: Sequence[Scene], config: PipelineConfig = PipelineConfig(),
                provenance: dict | None = None) -> TrainingResult:
    """Estimate class-mean endmembers and the threshold from labelled scenes.

    Confidences from all scenes are pooled before the threshold search, so the
    model carries one threshold.
    """
    if not scenes:
        raise ValueError("no training scenes")
    grouping = dict(config.grouping)
    results = [_run_scene(s, config, None, None, None, None, IMMATURE) for s in scenes]

    training = []
    present = set()
    for res, scene in zip(results, scenes):
        labels = _checked_labels(scene, res.regions)
        for rid, label in sorted(labels.items()):
            cls = _class_of(label, grouping)
            present.add(cls)
            spectra = res.analysis_cube.values[res.regions.mask(rid)]
            training.append(LabeledRegionSpectra(rid, label, res.analysis_cube.axis,
                                                 spectra, scene.name))
    if present != {MATURE, IMMATURE}:
        if present - {MATURE, IMMATURE}:
            raise LabelError(f"grouping must map labels to {MATURE!r}/{IMMATURE!r}, "
                             f"got classes {sorted(present)}")
        raise SingleClassError(
            f"single-class training set: labels cover only {sorted(present)}; "
            "need both mature and immature regions")
    endmembers = estimate_endmembers(training, grouping, (MATURE, IMMATURE))

    for res in results:
        res.proportions = unmix_regions(res.analysis_cube, res.regions, endmembers)
        res.confidences = aggregate_confidence(res.proportions, res.regions, IMMATURE,
                                               config.aggregate, res.name)
    pairs = []
    for res, scene in zip(results, scenes):
        labels = _checked_labels(scene, res.regions)
        pairs += [(rc.confidence, _class_of(labels[rc.region_id], grouping))
                  for rc in res.confidences if rc.region_id in labels]
    tau = config.tau if config.tau is not None else train_threshold(pairs)

    prov = {"dataset_id": dataset_id(scenes), "date": None,
            "scenes": [s.name for s in scenes]}
    prov.update(provenance or {})
    model = TrainedModel(endmembers, tuple(config.band_range), tau, config.sg_order,
                         config.sg_width, IMMATURE, prov)
    report = _evaluate(results, scenes, tau, grouping)
    return TrainingResult(model, report, threshold_errors(pairs))


def classify_regions(scenes: Sequence[Scene], model: TrainedModel,
                     config: PipelineConfig = PipelineConfig()) -> Evaluation:
    """Apply a trained model; metrics are filled in when scenes carry labels.

    Smoothing parameters and band range come from the model.
    """
    tau = config.tau if config.tau is not None else model.tau
    results = []
    for scene in scenes:
        try:
            res = _run_scene(scene, config, model.endmembers, model.band_range_nm,
                             model.sg_order, model.sg_width, model.immature_class)
        except (AxisMismatchError, BandRangeError) as exc:
            raise AxisMismatchError(f"scene {scene.name}: {exc}") from exc
        results.append(res)
    return _evaluate(results, scenes, tau, dict(config.grouping))
